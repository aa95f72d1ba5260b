"""
Logging utilities for Telemetry Incognito.

This module provides logging configuration and helper functions.
"""

import logging
import os
import sys
from datetime import datetime

# Define log directory relative to the project root
LOG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "logs")

CONSOLE_FORMAT = '%(levelname)s: %(message)s'
FILE_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def setup_logger(level="INFO", log_dir=None):
    """
    Setup and return the root logger.

    Args:
        level (str): Logging level name for the root logger
        log_dir (str | bool | None): Directory for the log file. None uses LOG_DIR,
            False disables the file handler (console only).

    Returns:
        logging.Logger: The configured root logger
    """
    logger = logging.getLogger()
    logger.setLevel(getattr(logging, str(level).upper(), logging.INFO))

    # Remove existing handlers
    for handler in logger.handlers[:]:
        logger.removeHandler(handler)

    # File handler for detailed logs
    if log_dir is not False:
        directory = log_dir or LOG_DIR
        os.makedirs(directory, exist_ok=True)
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        log_file = os.path.join(directory, f"telemetry_incognito_{timestamp}.log")
        file_handler = logging.FileHandler(log_file, encoding='utf-8')
        file_handler.setFormatter(logging.Formatter(FILE_FORMAT))
        logger.addHandler(file_handler)

    # Console handler for basic info
    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setFormatter(logging.Formatter(CONSOLE_FORMAT))
    logger.addHandler(console_handler)

    return logger


def get_logger(name):
    """Get a logger for a specific module."""
    logger = logging.getLogger(name)

    # Return the existing logger if already configured
    if logger.handlers:
        return logger

    # Level is inherited from the root logger configured in setup_logger
    logger.setLevel(logging.NOTSET)

    return logger
