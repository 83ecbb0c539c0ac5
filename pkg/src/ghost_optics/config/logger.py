import logging
import sys
from typing import Optional

from ghost_optics.config.settings import setting

LOG_FORMAT = "%(asctime)s [%(levelname)s] [%(name)s] %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def setup_logging(level: Optional[str] = None) -> None:
    """Configure the package logger once; records go to stderr so artifacts stay reproducible."""
    level_name = (level or setting.GHOST_OPTICS_LOG_LEVEL).upper()
    logger = logging.getLogger("ghost_optics")
    logger.setLevel(level_name)
    if not any(getattr(h, "_ghost_optics", False) for h in logger.handlers):
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT))
        handler._ghost_optics = True
        logger.addHandler(handler)
