"""
Logging utility for the Fabry-Perot toolkit.
"""

import os
import logging
import sys
from typing import Optional

import colorlog

from fabry_perot.errors import ConfigError, DataIOError

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")

CONSOLE_FORMAT = "%(asctime)s [%(levelname)s] %(message)s"
FILE_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

LEVEL_COLORS = {
    "DEBUG": "cyan",
    "INFO": "green",
    "WARNING": "yellow",
    "ERROR": "red",
    "CRITICAL": "red,bg_white",
}


def _console_formatter() -> logging.Formatter:
    # Records go to stderr; stdout carries the result tables
    if sys.stderr.isatty():
        return colorlog.ColoredFormatter(
            f"%(log_color)s{CONSOLE_FORMAT}", datefmt=DATE_FORMAT, log_colors=LEVEL_COLORS
        )
    return logging.Formatter(CONSOLE_FORMAT, datefmt=DATE_FORMAT)

def _file_handler(log_file: str) -> logging.Handler:
    log_dir = os.path.dirname(log_file)
    try:
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)
        handler = logging.FileHandler(log_file, encoding="utf-8")
    except OSError as e:
        raise DataIOError(f"Cannot open log file {log_file}: {e}")
    handler.setFormatter(logging.Formatter(FILE_FORMAT, datefmt=DATE_FORMAT))
    return handler

def setup_logger(log_level: str = "INFO", log_file: Optional[str] = None) -> logging.Logger:
    """
    Configure the root logger for a CLI run. Calling it again replaces the
    handlers of the previous call.

    Args:
        log_level: The logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_file: Optional path of a log file; parent directories are created

    Returns:
        Configured root logger
    """
    level = str(log_level).upper()
    if level not in LOG_LEVELS:
        raise ConfigError(f"Unknown log level '{log_level}', expected one of {LOG_LEVELS}")

    root = logging.getLogger()
    root.setLevel(getattr(logging, level))
    for handler in list(root.handlers):
        root.removeHandler(handler)
        if isinstance(handler, logging.FileHandler):
            handler.close()

    console = logging.StreamHandler(sys.stderr)
    console.setFormatter(_console_formatter())
    root.addHandler(console)

    if log_file:
        root.addHandler(_file_handler(log_file))

    return root
