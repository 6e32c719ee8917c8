"""
Logging setup for the homogeneity test.

One rotating log file per output location plus an optional stderr echo.
Result tables go to stdout, so console logging never uses it.
"""

import logging
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import List, Mapping, Optional

from config import LogConfig, PathConfig


def _resolve_level(log_level: Optional[str]) -> int:
    name = str(log_level or LogConfig.LOG_LEVEL).upper()
    level = logging.getLevelName(name)
    if not isinstance(level, int):
        raise ValueError(f"Unknown log level: {log_level}")
    return level


def _build_handlers(level: int, log_file: Path, console: bool) -> List[logging.Handler]:
    formatter = logging.Formatter(LogConfig.LOG_FORMAT, datefmt=LogConfig.LOG_DATE_FORMAT)

    file_handler = RotatingFileHandler(
        log_file,
        maxBytes=LogConfig.MAX_LOG_SIZE,
        backupCount=LogConfig.BACKUP_COUNT,
        encoding='utf-8',
    )
    # the file always keeps the per-fit DEBUG lines
    file_handler.setLevel(logging.DEBUG)
    handlers: List[logging.Handler] = [file_handler]

    if console:
        stderr_handler = logging.StreamHandler(sys.stderr)
        stderr_handler.setLevel(level)
        handlers.append(stderr_handler)

    for handler in handlers:
        handler.setFormatter(formatter)
    return handlers


def setup_logging(
    log_level: Optional[str] = None,
    log_dir: Optional[Path] = None,
    console: bool = True
) -> logging.Logger:
    """
    Configure the root logger.

    Args:
        log_level: Level name; LOG_LEVEL from config when None.
        log_dir: Directory of the rotating log file; LOG_DIR when None.
        console: Echo records at ``log_level`` and above on stderr.

    Returns:
        The root logger.

    Raises:
        ValueError: ``log_level`` is not a logging level name.
    """
    level = _resolve_level(log_level)
    log_dir = Path(log_dir if log_dir is not None else PathConfig.LOG_DIR)
    log_dir.mkdir(parents=True, exist_ok=True)
    log_file = log_dir / LogConfig.LOG_FILE

    root = logging.getLogger()
    root.setLevel(level)
    for handler in list(root.handlers):
        handler.close()
        root.removeHandler(handler)
    for handler in _build_handlers(level, log_file, console):
        root.addHandler(handler)

    for name in LogConfig.QUIET_LOGGERS:
        logging.getLogger(name).setLevel(logging.WARNING)

    root.debug(f"[logging] level={logging.getLevelName(level)} file={log_file}")
    return root


def log_run_settings(logger: logging.Logger, title: str, settings: Mapping[str, object]) -> None:
    """Write a run header with one ``key = value`` line per setting at DEBUG."""
    logger.debug("=" * 60)
    logger.debug(title)
    width = max((len(key) for key in settings), default=0)
    for key in sorted(settings):
        logger.debug(f"  {key:<{width}} = {settings[key]}")
    logger.debug("=" * 60)


def get_logger(name: str) -> logging.Logger:
    """Module logger; call as ``get_logger(__name__)``."""
    return logging.getLogger(name)
