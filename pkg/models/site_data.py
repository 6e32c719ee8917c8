"""
Site dataset data models.

This module defines the observation-level containers shared by every
stage of the test: the multi-site dataset itself, the cross-fitting fold
plan, and the column-role schema used when reading delimited files.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from exceptions import InputValidationError, ModeError, SchemaError


@dataclass(frozen=True)
class SiteDataset:
    """
    Multi-site observational or experimental sample.

    Attributes:
        y: Outcome Y (for DiD data, filled with y_post - y_pre by did_transform).
        d: Binary treatment D.
        z: Site index per observation, values in {1, ..., L}.
        x: Pre-treatment covariates, shape (n, p).
        w: Optional binary instrument W.
        y_pre: Optional pre-period outcome Y0.
        y_post: Optional post-period outcome Y1.
        site_labels: Original label of site index i at position i - 1.
        covariate_names: Column names of x, when known.
    """

    y: Optional[np.ndarray]
    d: np.ndarray
    z: np.ndarray
    x: np.ndarray
    w: Optional[np.ndarray] = None
    y_pre: Optional[np.ndarray] = None
    y_post: Optional[np.ndarray] = None
    site_labels: Tuple[str, ...] = ()
    covariate_names: Tuple[str, ...] = ()

    @classmethod
    def from_arrays(
        cls,
        y,
        d,
        z,
        x,
        w=None,
        y_pre=None,
        y_post=None,
        site_labels: Sequence[str] = (),
        covariate_names: Sequence[str] = (),
    ) -> 'SiteDataset':
        """Build a dataset, coercing inputs to float/int numpy arrays."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        z = np.asarray(z)
        if z.dtype.kind == 'f':
            if not np.all(np.isfinite(z)) or np.any(z != np.round(z)):
                raise InputValidationError("site indices must be integers")
        z = z.astype(np.int64)
        n_sites = int(z.max()) if z.size else 0
        labels = tuple(site_labels) or tuple(str(s) for s in range(1, n_sites + 1))
        names = tuple(covariate_names) or tuple(f"x{j + 1}" for j in range(x.shape[1]))
        return cls(
            y=None if y is None else np.asarray(y, dtype=float),
            d=np.asarray(d, dtype=float),
            z=z,
            x=x,
            w=None if w is None else np.asarray(w, dtype=float),
            y_pre=None if y_pre is None else np.asarray(y_pre, dtype=float),
            y_post=None if y_post is None else np.asarray(y_post, dtype=float),
            site_labels=labels,
            covariate_names=names,
        )

    @property
    def n(self) -> int:
        return int(self.d.shape[0])

    @property
    def n_sites(self) -> int:
        return int(self.z.max()) if self.z.size else 0

    @property
    def sites(self) -> np.ndarray:
        return np.arange(1, self.n_sites + 1)

    def site_label(self, site: int) -> str:
        if 1 <= site <= len(self.site_labels):
            return self.site_labels[site - 1]
        return str(site)

    def validate(self, mode: str = 'cate') -> None:
        """
        Check the invariants required by a test mode.

        Args:
            mode: 'cate', 'clate' or 'did'.

        Raises:
            ModeError: A column the mode needs is missing.
            InputValidationError: Lengths, values or site coverage are invalid.
        """
        if mode not in ('cate', 'clate', 'did'):
            raise InputValidationError(f"unknown mode '{mode}'")

        missing = []
        if mode == 'did':
            if self.y_pre is None:
                missing.append('y_pre')
            if self.y_post is None:
                missing.append('y_post')
        elif self.y is None:
            missing.append('outcome')
        if mode == 'clate' and self.w is None:
            missing.append('instrument')
        if missing:
            raise ModeError(mode, missing)

        n = self.n
        if n < 2:
            raise InputValidationError(f"need at least 2 observations, got {n}")
        if self.x.ndim != 2 or self.x.shape[0] != n or self.x.shape[1] < 1:
            raise InputValidationError(
                f"covariate matrix must be (n, p>=1) with n={n}, got {self.x.shape}"
            )

        vectors = {'d': self.d, 'z': self.z}
        for name in ('y', 'w', 'y_pre', 'y_post'):
            value = getattr(self, name)
            if value is not None:
                vectors[name] = value
        for name, value in vectors.items():
            if value.shape != (n,):
                raise InputValidationError(
                    f"'{name}' has shape {value.shape}, expected ({n},)"
                )
            if not np.all(np.isfinite(value)):
                raise InputValidationError(f"'{name}' contains non-finite values")
        if not np.all(np.isfinite(self.x)):
            raise InputValidationError("covariates contain non-finite values")

        if not np.all(np.isin(self.d, (0.0, 1.0))):
            raise InputValidationError("treatment must be coded 0/1")
        if self.w is not None and not np.all(np.isin(self.w, (0.0, 1.0))):
            raise InputValidationError("instrument must be coded 0/1")

        n_sites = self.n_sites
        if self.z.min() < 1:
            raise InputValidationError("site indices must start at 1")
        if n_sites < 2:
            raise InputValidationError(f"need at least 2 sites, got {n_sites}")
        counts = np.bincount(self.z, minlength=n_sites + 1)[1:]
        if np.any(counts == 0):
            empty = [self.site_label(s) for s in np.flatnonzero(counts == 0) + 1]
            raise InputValidationError(f"sites without observations: {empty}")

        # every site needs both arms of the assignment variable
        arm = self.w if mode == 'clate' else self.d
        arm_name = 'instrument' if mode == 'clate' else 'treatment'
        for site in self.sites:
            in_site = self.z == site
            n_one = int(np.sum(arm[in_site] == 1))
            if n_one == 0 or n_one == int(in_site.sum()):
                raise InputValidationError(
                    f"site {self.site_label(site)} lacks one {arm_name} arm"
                )

    def subset(self, rows: np.ndarray) -> 'SiteDataset':
        """Row subset keeping site indexing (used by the simulation harness)."""
        def take(v):
            return None if v is None else v[rows]

        return SiteDataset(
            y=take(self.y), d=self.d[rows], z=self.z[rows], x=self.x[rows],
            w=take(self.w), y_pre=take(self.y_pre), y_post=take(self.y_post),
            site_labels=self.site_labels, covariate_names=self.covariate_names,
        )


@dataclass(frozen=True)
class FoldPlan:
    """
    Balanced random partition of observations into K folds.

    Attributes:
        assignments: Fold index per observation, values in {1, ..., K}.
        k: Fold count.
        seed: Random seed the partition was drawn from.
    """

    assignments: np.ndarray
    k: int
    seed: int

    @classmethod
    def build(
        cls,
        n: int,
        k: int,
        seed: int,
        strata: Optional[np.ndarray] = None,
    ) -> 'FoldPlan':
        """
        Draw the partition.

        Rows are shuffled and dealt round-robin into folds, so fold sizes
        differ by at most one. With ``strata`` every stratum is dealt
        separately, continuing the round-robin where the previous one
        stopped, which keeps both the overall and per-stratum balance.
        """
        rng = np.random.default_rng(seed)
        assignments = np.empty(n, dtype=np.int64)
        if strata is None:
            order = rng.permutation(n)
            assignments[order] = np.arange(n) % k + 1
        else:
            offset = 0
            for level in np.unique(strata):
                rows = np.flatnonzero(strata == level)
                rows = rows[rng.permutation(rows.size)]
                assignments[rows] = (np.arange(rows.size) + offset) % k + 1
                offset += rows.size
        return cls(assignments=assignments, k=int(k), seed=int(seed))

    @property
    def n(self) -> int:
        return int(self.assignments.shape[0])

    def fold_sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.k + 1)[1:]

    def splits(self) -> Iterator[Tuple[int, np.ndarray, np.ndarray]]:
        """Yield (fold, train_mask, test_mask) for folds 1..K."""
        for fold in range(1, self.k + 1):
            test = self.assignments == fold
            yield fold, ~test, test


ColumnRef = Union[str, int]


@dataclass
class InputSchema:
    """
    Column roles of a delimited input file.

    A binding is either a header name or an integer position (0-based);
    in config files and flags a position is written as ``#3``.
    """

    outcome: Optional[ColumnRef] = None
    treatment: Optional[ColumnRef] = None
    site: Optional[ColumnRef] = None
    covariates: List[ColumnRef] = field(default_factory=list)
    instrument: Optional[ColumnRef] = None
    y_pre: Optional[ColumnRef] = None
    y_post: Optional[ColumnRef] = None

    ROLES = ('outcome', 'treatment', 'site', 'instrument', 'y_pre', 'y_post')

    @staticmethod
    def parse_ref(value: ColumnRef) -> ColumnRef:
        """'#3' -> 3, anything else is kept as a header name."""
        if isinstance(value, str):
            value = value.strip()
            if value.startswith('#') and value[1:].isdigit():
                return int(value[1:])
        return value

    def required_roles(self, mode: str) -> Tuple[str, ...]:
        roles = ['treatment', 'site']
        if mode == 'did':
            roles += ['y_pre', 'y_post']
        else:
            roles.append('outcome')
        if mode == 'clate':
            roles.append('instrument')
        return tuple(roles)

    def resolve(self, columns: Sequence[str], mode: str = 'cate') -> Dict[str, object]:
        """
        Map roles to header names of ``columns``.

        Returns:
            Dict role -> column name, with 'covariates' -> list of names.

        Raises:
            SchemaError: A required role is unbound, a binding does not
                exist, or a column is bound to two roles.
        """
        columns = list(columns)

        def lookup(role: str, ref: ColumnRef) -> str:
            ref = self.parse_ref(ref)
            if isinstance(ref, int):
                if not 0 <= ref < len(columns):
                    raise SchemaError(role, f"position {ref} out of range")
                return columns[ref]
            if ref not in columns:
                raise SchemaError(role, f"column '{ref}' not in header")
            return ref

        resolved: Dict[str, object] = {}
        for role in self.required_roles(mode):
            if getattr(self, role) in (None, ''):
                raise SchemaError(role)
        for role in self.ROLES:
            ref = getattr(self, role)
            if ref not in (None, ''):
                resolved[role] = lookup(role, ref)

        if not self.covariates:
            raise SchemaError('covariates', "at least one covariate is required")
        resolved['covariates'] = [lookup('covariates', c) for c in self.covariates]

        used: Dict[str, str] = {}
        for role, value in resolved.items():
            names = value if isinstance(value, list) else [value]
            for name in names:
                if name in used:
                    raise SchemaError(
                        role, f"column '{name}' already bound to '{used[name]}'"
                    )
                used[name] = role
        return resolved


@dataclass
class SampleFlow:
    """Row accounting of one ingestion run."""

    rows_in: int
    steps: List[Tuple[str, int]] = field(default_factory=list)
    dropped_sites: List[str] = field(default_factory=list)

    def record(self, label: str, rows_remaining: int) -> None:
        self.steps.append((label, int(rows_remaining)))

    @property
    def rows_out(self) -> int:
        return self.steps[-1][1] if self.steps else self.rows_in

    @property
    def rows_dropped(self) -> int:
        return self.rows_in - self.rows_out

    def as_table(self) -> List[Tuple[str, int]]:
        return [('input rows', self.rows_in)] + list(self.steps)
