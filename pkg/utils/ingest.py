"""
Delimited-file ingestion.

Reads a comma- or tab-separated file with a header, binds columns to
roles through an ``InputSchema``, applies the sample filters (row
filters, listwise deletion of incomplete rows, minimum site size) and
maps site labels to dense indices 1..L.
"""

from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from exceptions import (
    ConfigurationError,
    DataFileError,
    InputValidationError,
    InsufficientSitesError,
)
from models.site_data import InputSchema, SampleFlow, SiteDataset
from utils.logging_config import get_logger

logger = get_logger(__name__)

PathLike = Union[str, Path]


def load_config_file(path: PathLike) -> Dict[str, str]:
    """
    Read a flat ``key = value`` file.

    Blank lines and lines starting with '#' are ignored; keys are
    lower-cased with '-' folded to '_'.

    Raises:
        DataFileError: The file cannot be read.
        ConfigurationError: A line has no '='.
    """
    try:
        text = Path(path).read_text(encoding='utf-8')
    except (OSError, UnicodeDecodeError) as e:
        raise DataFileError(path, str(e)) from e

    values: Dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        if '=' not in line:
            raise ConfigurationError(f"{path}:{number}: expected 'key = value', got '{line}'")
        key, value = line.split('=', 1)
        values[key.strip().lower().replace('-', '_')] = value.strip()
    return values


def parse_keep_if(spec: str) -> Tuple[str, str]:
    """'column:value' (or 'column=value') -> (column, value)."""
    for separator in (':', '='):
        if separator in spec:
            column, value = spec.split(separator, 1)
            if column.strip():
                return column.strip(), value.strip()
    raise ConfigurationError(f"keep_if must look like 'column:value', got '{spec}'")


def _site_order(labels: Sequence[str]) -> List[str]:
    """Numeric labels sort numerically, anything else lexicographically."""
    try:
        return sorted(labels, key=lambda s: (float(s), s))
    except ValueError:
        return sorted(labels)


def read_table(path: PathLike) -> pd.DataFrame:
    """Read a delimited file as strings, sniffing comma vs tab."""
    path = Path(path)
    if not path.is_file():
        raise DataFileError(path, "file not found")
    try:
        frame = pd.read_csv(path, sep=None, engine='python', dtype=str, encoding='utf-8')
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataFileError(path, str(e)) from e
    frame.columns = [str(c).strip() for c in frame.columns]
    return frame


def _numeric(frame: pd.DataFrame, column: str) -> np.ndarray:
    values = pd.to_numeric(frame[column].str.strip(), errors='coerce')
    bad = values.isna() & frame[column].notna()
    if bad.any():
        sample = frame.loc[bad, column].iloc[0]
        raise InputValidationError(
            f"column '{column}' has {int(bad.sum())} non-numeric values (e.g. '{sample}')"
        )
    return values.to_numpy(dtype=float)


def load_sites(
    path: PathLike,
    schema: InputSchema,
    mode: str = 'cate',
    min_site_size: int = 0,
    keep_if: Sequence[Tuple[str, str]] = (),
) -> Tuple[SiteDataset, SampleFlow]:
    """
    Ingest a delimited file and report the sample flow.

    Args:
        path: Data file.
        schema: Column role bindings.
        mode: Test mode; decides which roles are required.
        min_site_size: Sites with fewer retained rows are dropped.
        keep_if: (column, value) pairs; only rows matching all are kept.

    Returns:
        (dataset, flow) with input rows = dropped rows + retained rows.

    Raises:
        DataFileError: The file cannot be read.
        SchemaError: Role bindings are invalid.
        InsufficientSitesError: Fewer than two sites survive the filters.
    """
    frame = read_table(path)
    flow = SampleFlow(rows_in=len(frame))
    roles = schema.resolve(list(frame.columns), mode)

    for column, value in keep_if:
        if column not in frame.columns:
            raise ConfigurationError(f"keep_if column '{column}' not in header")
        frame = frame[frame[column].str.strip() == value]
        flow.record(f"keep {column} = {value}", len(frame))

    used = set(schema.required_roles(mode))
    required = [roles[r] for r in schema.required_roles(mode)] + list(roles['covariates'])
    stripped = frame[required].apply(lambda col: col.str.strip())
    complete = stripped.replace('', np.nan).notna().all(axis=1)
    if (~complete).any():
        logger.warning(f"Dropping {int((~complete).sum())} rows with missing required fields")
    frame = frame[complete]
    flow.record("drop rows with missing required fields", len(frame))

    site_values = frame[roles['site']].str.strip()
    if min_site_size > 0:
        counts = site_values.value_counts()
        small = sorted(counts[counts < min_site_size].index.tolist())
        if small:
            logger.warning(f"Dropping {len(small)} sites with fewer than {min_site_size} rows: {small}")
            flow.dropped_sites.extend(small)
            keep = ~site_values.isin(small)
            frame = frame[keep]
            site_values = site_values[keep]
        flow.record(f"drop sites with fewer than {min_site_size} rows", len(frame))

    labels = _site_order(site_values.unique().tolist())
    if len(labels) < 2:
        raise InsufficientSitesError(len(labels), flow.dropped_sites)
    index = {label: i + 1 for i, label in enumerate(labels)}

    def column(role: str) -> Optional[np.ndarray]:
        return _numeric(frame, roles[role]) if role in used else None

    x = np.column_stack([_numeric(frame, c) for c in roles['covariates']])
    data = SiteDataset.from_arrays(
        y=column('outcome'),
        d=column('treatment'),
        z=site_values.map(index).to_numpy(),
        x=x,
        w=column('instrument'),
        y_pre=column('y_pre'),
        y_post=column('y_post'),
        site_labels=labels,
        covariate_names=roles['covariates'],
    )
    data.validate(mode)
    logger.info(
        f"Loaded {data.n} of {flow.rows_in} rows from {Path(path).name}: "
        f"{data.n_sites} sites, {x.shape[1]} covariates"
    )
    return data, flow


def ingest(
    path: PathLike,
    schema: InputSchema,
    mode: str = 'cate',
    min_site_size: int = 0,
    keep_if: Sequence[Tuple[str, str]] = (),
) -> SiteDataset:
    """Ingest a delimited file; see ``load_sites``."""
    data, _ = load_sites(path, schema, mode, min_site_size, keep_if)
    return data


__all__ = [
    'load_config_file',
    'parse_keep_if',
    'read_table',
    'load_sites',
    'ingest',
]
