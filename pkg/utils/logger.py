"""Logging for the FU-net toolkit: one 'funet' logger tree, console plus optional run log."""

import logging
import os
import sys
from contextlib import contextmanager
from typing import Iterator, Optional

ROOT_LOGGER = 'funet'
RUN_LOG_FILE = 'run.log'
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'


class TqdmLoggingHandler(logging.Handler):
    """Writes records through tqdm so they do not tear the training bar."""

    def emit(self, record):
        try:
            from tqdm import tqdm
            # stdout carries command results
            tqdm.write(self.format(record), file=sys.stderr)
            self.flush()
        except Exception:
            self.handleError(record)


def _formatter() -> logging.Formatter:
    return logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT)


def setup_logger(verbose: bool = False) -> logging.Logger:
    """
    Configure the 'funet' logger; repeated calls only change the level.

    Args:
        verbose: Enable debug logging

    Returns:
        The configured root logger of the toolkit
    """
    logger = logging.getLogger(ROOT_LOGGER)
    level = logging.DEBUG if verbose else logging.INFO
    logger.setLevel(level)

    console = [h for h in logger.handlers if isinstance(h, TqdmLoggingHandler)]
    if console:
        for handler in console:
            handler.setLevel(level)
        return logger

    handler = TqdmLoggingHandler(level)
    handler.setFormatter(_formatter())
    logger.addHandler(handler)
    return logger


def get_logger(name: Optional[str] = None) -> logging.Logger:
    """
    Logger for a module, nested under 'funet' so setup_logger() reaches it.

    Args:
        name: Module name; None gives the toolkit root logger
    """
    if not name or name == ROOT_LOGGER:
        return logging.getLogger(ROOT_LOGGER)
    return logging.getLogger(f'{ROOT_LOGGER}.{name}')


@contextmanager
def run_log(directory: str) -> Iterator[str]:
    """
    Copy every record at the current level to <directory>/run.log while active.

    Yields:
        Path of the log file
    """
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, RUN_LOG_FILE)
    logger = logging.getLogger(ROOT_LOGGER)
    handler = logging.FileHandler(path, mode='w', encoding='utf-8')
    handler.setLevel(logger.level)
    handler.setFormatter(_formatter())
    logger.addHandler(handler)
    try:
        yield path
    finally:
        logger.removeHandler(handler)
        handler.close()
