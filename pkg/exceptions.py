"""
Custom exception classes for the cross-site homogeneity test.

This module defines specific exceptions for different error scenarios,
making error handling more precise and user-friendly. Every exception
carries an ``exit_code`` used by the command-line front end:

- 2: validation failures (bad input, schema, mode, empty cells)
- 3: degenerate samples (everything trimmed, zero score variance)
- 4: I/O failures (unreadable data files)
"""
from typing import Iterable, Optional


class HomogeneityTestError(Exception):
    """Base exception for the homogeneity test system."""

    exit_code = 1


class InputValidationError(HomogeneityTestError):
    """Exception raised when input arrays or parameters are invalid."""

    exit_code = 2

    def __init__(self, message: str):
        super().__init__(f"Invalid input: {message}")


class DegenerateResponseError(InputValidationError):
    """Exception raised when a binomial response has a single class."""

    def __init__(self, observed_class: float, n_rows: int):
        self.observed_class = observed_class
        self.n_rows = n_rows
        super().__init__(
            f"binomial response has a single class ({observed_class:g}) "
            f"across {n_rows} rows"
        )


class DimensionMismatchError(InputValidationError):
    """Exception raised when a design matrix does not match a model."""

    def __init__(self, expected: int, got: int):
        self.expected = expected
        self.got = got
        super().__init__(f"expected {expected} covariate columns, got {got}")


class ConfigurationError(HomogeneityTestError):
    """Exception raised for configuration errors."""

    exit_code = 2

    def __init__(self, message: str):
        super().__init__(f"Configuration error: {message}")


class SchemaError(HomogeneityTestError):
    """Exception raised when input column roles are not bound correctly."""

    exit_code = 2

    def __init__(self, role: str, message: str = "required role is not bound"):
        self.role = role
        super().__init__(f"Schema error for role '{role}': {message}")


class ModeError(HomogeneityTestError):
    """Exception raised when a dataset lacks the columns a test mode needs."""

    exit_code = 2

    def __init__(self, mode: str, missing: Iterable[str]):
        self.mode = mode
        self.missing = tuple(missing)
        super().__init__(
            f"Mode '{mode}' requires {', '.join(self.missing)}"
        )


class InsufficientCellError(HomogeneityTestError):
    """Exception raised when a nuisance training cell is empty or too small."""

    exit_code = 2

    def __init__(self, cell: str, fold: int, n_rows: int, required: int = 1):
        self.cell = cell
        self.fold = fold
        self.n_rows = n_rows
        self.required = required
        super().__init__(
            f"Training cell {cell} in fold {fold} has {n_rows} rows "
            f"(need at least {required})"
        )


class OverlapError(HomogeneityTestError):
    """Exception raised when a retained observation has a zero propensity."""

    exit_code = 2

    def __init__(self, site: int, n_rows: int):
        self.site = site
        self.n_rows = n_rows
        super().__init__(
            f"{n_rows} retained observations have a zero propensity "
            f"in the score terms of site {site}"
        )


class InsufficientSitesError(HomogeneityTestError):
    """Exception raised when fewer than two sites survive ingestion."""

    exit_code = 2

    def __init__(self, n_sites: int, dropped: Optional[Iterable[str]] = None):
        self.n_sites = n_sites
        self.dropped = tuple(dropped or ())
        message = f"fewer than 2 sites available (got {n_sites})"
        if self.dropped:
            message += f"; dropped sites: {', '.join(self.dropped)}"
        super().__init__(message)


class ScenarioError(HomogeneityTestError):
    """Exception raised for invalid simulation scenario specifications."""

    exit_code = 2

    def __init__(self, message: str):
        super().__init__(f"Scenario error: {message}")


class DegenerateSampleError(HomogeneityTestError):
    """Exception raised when too few observations remain for inference."""

    exit_code = 3

    def __init__(self, n_retained: int, n_total: int):
        self.n_retained = n_retained
        self.n_total = n_total
        super().__init__(
            f"Degenerate sample: {n_retained} of {n_total} observations "
            f"retained after trimming"
        )


class DegenerateVarianceError(HomogeneityTestError):
    """Exception raised when the retained scores have zero variance."""

    exit_code = 3

    def __init__(self, n_retained: int):
        self.n_retained = n_retained
        super().__init__(
            f"Degenerate variance: score is constant over {n_retained} "
            f"retained observations"
        )


class DataFileError(HomogeneityTestError):
    """Exception raised when a data or config file cannot be read or written."""

    exit_code = 4

    def __init__(self, file_path: str, reason: str = ""):
        self.file_path = str(file_path)
        message = f"Cannot access {file_path}"
        if reason:
            message += f": {reason}"
        super().__init__(message)
