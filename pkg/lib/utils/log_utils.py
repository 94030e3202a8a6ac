import logging
import sys
from typing import Type

from lib.utils.errors import ConduError

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def configure_logging(level: str = "WARNING") -> None:
    """
    Configure the root logger once for a CLI run.

    Records go to standard error so that reports printed on standard output
    stay machine-readable.

    Args:
        level (str): A logging level name such as ``INFO`` or ``debug``.
    """
    numeric_level = getattr(logging, level.upper(), None)
    if not isinstance(numeric_level, int):
        raise ValueError(f"Invalid log level: {level}")

    logging.basicConfig(
        level=numeric_level,
        format=LOG_FORMAT,
        stream=sys.stderr,
        force=True,
    )
    logger.debug(f"Logging configured at level {level.upper()}")


def log_error(error_cls: Type[ConduError], message: str, context: str = None) -> None:
    """
    Log an error message and raise the matching domain error.

    Args:
        error_cls: The ConduError subclass to raise.
        message (str): Human readable description.
        context (str): The operation or artifact the error belongs to.

    Raises:
        ConduError: Always, after logging, so callers fail fast.
    """
    if context:
        logger.error(f"{error_cls.code} in {context}: {message}")
    else:
        logger.error(f"{error_cls.code}: {message}")
    raise error_cls(message, context)
