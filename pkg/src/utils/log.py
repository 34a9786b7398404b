import sys
from pathlib import Path

from loguru import logger


def setup_logging(level: str = "INFO", log_file: str | Path | None = None, verbose: bool = False):
    """
    Configure loguru sinks for a command run

    Args:
        level: Console log level
        log_file: Optional file sink; always records DEBUG with timestamps
        verbose: If True, show DEBUG and above on the console
    """
    logger.remove()  # Remove existing handlers

    logger.add(sys.stderr, level="DEBUG" if verbose else level)

    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        logger.add(
            str(log_file),
            level="DEBUG",
            format="{time:YYYY-MM-DD HH:mm:ss} | {level} | {message}",
        )
