"""
Logging utilities for osteorisk.

This module provides:
- A custom MODEL log level for model-fitting progress
- Logging configuration for the CLI (console + optional log file)
- A filter for chatty third-party loggers
"""

import logging
import sys
from pathlib import Path
from typing import Optional


# Custom MODEL log level (between INFO=20 and WARNING=30)
MODEL_LEVEL = 25
MODEL_LEVEL_NAME = 'MODEL'

LOG_FILE_NAME = 'osteorisk.log'


def add_model_log_level():
    """Add the custom MODEL log level to the logging module."""
    logging.addLevelName(MODEL_LEVEL, MODEL_LEVEL_NAME)
    setattr(logging, MODEL_LEVEL_NAME, MODEL_LEVEL)

    def model(self, message, *args, **kwargs):
        """Log a message with severity 'MODEL'."""
        if self.isEnabledFor(MODEL_LEVEL):
            self._log(MODEL_LEVEL, message, args, **kwargs)

    logging.Logger.model = model


class LibraryLogFilter(logging.Filter):
    """Filter to exclude third-party library logs when needed."""

    excluded_loggers = (
        'numexpr',
        'joblib',
        'hypothesis',
    )

    def filter(self, record):
        """Drop records emitted by excluded libraries."""
        return not any(record.name.startswith(excluded) for excluded in self.excluded_loggers)


def _numeric_level(level_name: str) -> int:
    if level_name.upper() == MODEL_LEVEL_NAME:
        return MODEL_LEVEL
    return getattr(logging, level_name.upper(), logging.INFO)


def configure_logging(log_level: str = 'INFO',
                      logs_dir: Optional[str] = None,
                      exclude_library_logs: bool = False,
                      model_log_level: str = MODEL_LEVEL_NAME):
    """
    Configure logging with the MODEL level and optional library filtering.

    Args:
        log_level: Base log level (DEBUG, INFO, MODEL, WARNING, ERROR)
        logs_dir: Directory for the log file; None or empty disables the file
        exclude_library_logs: Whether to filter out third-party logs
        model_log_level: Minimum level for the model-fitting loggers
    """
    add_model_log_level()

    numeric_level = _numeric_level(log_level)

    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )

    # stdout carries command output (report tables), logs go to stderr
    handlers = [logging.StreamHandler(sys.stderr)]

    if logs_dir:
        Path(logs_dir).mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(Path(logs_dir) / LOG_FILE_NAME, encoding='utf-8'))

    library_filter = LibraryLogFilter() if exclude_library_logs else None
    for handler in handlers:
        handler.setFormatter(formatter)
        if library_filter:
            handler.addFilter(library_filter)

    root_logger = logging.getLogger()
    root_logger.setLevel(numeric_level)
    root_logger.handlers.clear()
    for handler in handlers:
        root_logger.addHandler(handler)

    # Fitting loggers follow MODEL_LOG_LEVEL even when the base level is higher
    fitting_level = min(numeric_level, _numeric_level(model_log_level))
    for name in ('src.ensemble', 'src.linear', 'src.tuning', 'src.explain'):
        logging.getLogger(name).setLevel(fitting_level)

    if exclude_library_logs:
        for logger_name in LibraryLogFilter.excluded_loggers:
            logging.getLogger(logger_name).setLevel(logging.ERROR)


def get_model_logger(name: str) -> logging.Logger:
    """
    Get a logger configured for model-fitting progress.

    Args:
        name: Logger name (usually __name__)

    Returns:
        Logger instance with MODEL level support
    """
    add_model_log_level()
    return logging.getLogger(name)
