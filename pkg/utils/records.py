"""
Result serialization.

Machine-readable records are ``key=value`` lines, one run per block,
blocks separated by a blank line. Floats are written with ``repr`` so a
parsed record reproduces the TestResult exactly. Site labels are listed as
``site.<index>=<label>`` and per-site diagnostics as ``diag.<index>=<value>``.
"""

from pathlib import Path
from typing import Dict, Iterable, List, Union

import pandas as pd

from exceptions import DataFileError, InputValidationError
from models.results import TestResult
from models.site_data import SampleFlow

PathLike = Union[str, Path]

FLOAT_KEYS = ('theta_hat', 'se', 'p_value', 'epsilon', 'kish_n_eff')
INT_KEYS = ('n', 'n_eff', 'n_trimmed', 'K', 'seed')
RECORD_KEYS = ('theta_hat', 'se', 'p_value', 'n', 'n_eff', 'n_trimmed',
               'epsilon', 'K', 'seed', 'mode', 'kish_n_eff')


def format_record(result: TestResult) -> str:
    """One TestResult as key=value lines."""
    values = {
        'theta_hat': result.theta_hat,
        'se': result.se,
        'p_value': result.p_value,
        'n': result.n,
        'n_eff': result.n_eff,
        'n_trimmed': result.n_trimmed,
        'epsilon': result.epsilon,
        'K': result.folds,
        'seed': result.seed,
        'mode': result.mode,
        'kish_n_eff': result.kish_n_eff,
    }
    lines = []
    for key in RECORD_KEYS:
        value = values[key]
        lines.append(f"{key}={repr(float(value)) if key in FLOAT_KEYS else value}")
    for index, label in enumerate(result.site_labels, start=1):
        lines.append(f"site.{index}={label}")
    for index, label in enumerate(result.site_labels, start=1):
        if label in result.per_site_diagnostics:
            lines.append(f"diag.{index}={float(result.per_site_diagnostics[label])!r}")
    return '\n'.join(lines) + '\n'


def parse_record(text: str) -> TestResult:
    """
    Parse one record block back into a TestResult.

    Raises:
        InputValidationError: A line is malformed or a field is missing.
    """
    fields: Dict[str, str] = {}
    sites: Dict[int, str] = {}
    diags: Dict[int, float] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if '=' not in line:
            raise InputValidationError(f"record line without '=': '{line}'")
        key, value = line.split('=', 1)
        if key.startswith('site.'):
            sites[int(key[5:])] = value
        elif key.startswith('diag.'):
            diags[int(key[5:])] = float(value)
        else:
            fields[key] = value

    missing = [k for k in RECORD_KEYS if k not in fields]
    if missing:
        raise InputValidationError(f"record lacks fields {missing}")

    labels = tuple(sites[i] for i in sorted(sites))
    return TestResult(
        theta_hat=float(fields['theta_hat']),
        se=float(fields['se']),
        p_value=float(fields['p_value']),
        n=int(fields['n']),
        n_eff=int(fields['n_eff']),
        n_trimmed=int(fields['n_trimmed']),
        epsilon=float(fields['epsilon']),
        folds=int(fields['K']),
        seed=int(fields['seed']),
        mode=fields['mode'],
        kish_n_eff=float(fields['kish_n_eff']),
        per_site_diagnostics={sites[i]: diags[i] for i in sorted(diags) if i in sites},
        site_labels=labels,
    )


def parse_records(text: str) -> List[TestResult]:
    """Parse every blank-line separated block."""
    blocks, current = [], []
    for line in text.splitlines():
        if line.strip():
            current.append(line)
        elif current:
            blocks.append('\n'.join(current))
            current = []
    if current:
        blocks.append('\n'.join(current))
    return [parse_record(block) for block in blocks]


def write_records(results: Iterable[TestResult], path: PathLike) -> Path:
    """Write records separated by blank lines."""
    path = Path(path)
    text = '\n'.join(format_record(result) for result in results)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding='utf-8')
    except OSError as e:
        raise DataFileError(path, str(e)) from e
    return path


def read_records(path: PathLike) -> List[TestResult]:
    try:
        text = Path(path).read_text(encoding='utf-8')
    except (OSError, UnicodeDecodeError) as e:
        raise DataFileError(path, str(e)) from e
    return parse_records(text)


def format_table(result: TestResult) -> str:
    """Human-readable result table."""
    rows = [
        ('mode', result.mode),
        ('theta_hat', f"{result.theta_hat:.6f}"),
        ('se', f"{result.se:.6f}"),
        ('p_value', f"{result.p_value:.4f}"),
        ('n', str(result.n)),
        ('n_eff', str(result.n_eff)),
        ('n_trimmed', str(result.n_trimmed)),
        ('kish_n_eff', f"{result.kish_n_eff:.1f}"),
        ('epsilon', f"{result.epsilon:g}"),
        ('K', str(result.folds)),
        ('seed', str(result.seed)),
    ]
    for label, value in result.per_site_diagnostics.items():
        rows.append((f"mean DD [site {label}]", f"{value:.6f}"))
    width = max(len(name) for name, _ in rows)
    return '\n'.join(f"{name:<{width}}  {value}" for name, value in rows)


def format_sample_flow(flow: SampleFlow) -> str:
    """Sample-flow table: rows remaining after each filter."""
    table = flow.as_table()
    width = max(len(label) for label, _ in table)
    lines = [f"{label:<{width}}  {count:>8d}" for label, count in table]
    if flow.dropped_sites:
        lines.append(f"dropped sites: {', '.join(flow.dropped_sites)}")
    return '\n'.join(lines)


def write_frame(frame: pd.DataFrame, path: PathLike) -> Path:
    """Write a table as CSV (simulation summaries, replication logs, balance)."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False)
    except OSError as e:
        raise DataFileError(path, str(e)) from e
    return path


__all__ = [
    'format_record',
    'parse_record',
    'parse_records',
    'write_records',
    'read_records',
    'format_table',
    'format_sample_flow',
    'write_frame',
]
