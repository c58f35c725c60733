import logging
import os

from dotenv import load_dotenv

logger = logging.getLogger(__name__)

THREADS_ENV = "SPHEREMIX_THREADS"
LOG_LEVEL_ENV = "SPHEREMIX_LOG_LEVEL"


def default_threads() -> int:
    """Thread count for metric parallelism, from the environment (or .env)."""
    load_dotenv()
    raw = os.getenv(THREADS_ENV, "1")
    try:
        threads = int(raw)
    except ValueError:
        logger.warning(f"Ignoring non-integer {THREADS_ENV}={raw!r}, using 1 thread.")
        return 1
    return max(threads, 1)


def log_level() -> int:
    load_dotenv()
    name = os.getenv(LOG_LEVEL_ENV, "INFO").upper()
    level = logging.getLevelName(name)
    return level if isinstance(level, int) else logging.INFO
