"""
Process-level settings loaded from the environment (and an optional .env file).

Nothing here changes numerical results; problem parameters come from problem
files only.
"""
import logging
import os
import sys

from dotenv import load_dotenv

load_dotenv()

LOG_LEVEL = os.getenv("BEAMLAB_LOG_LEVEL", "INFO").upper()
LOG_FILE = os.getenv("BEAMLAB_LOG_FILE")
LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s - %(message)s"

try:
    SWEEP_WORKERS = max(1, int(os.getenv("BEAMLAB_SWEEP_WORKERS", "1")))
except ValueError:
    SWEEP_WORKERS = 1


def configure_logging(level: str = None):
    """
    Configure the root logger once for a CLI process.

    Args:
        level: Overrides BEAMLAB_LOG_LEVEL when given
    """
    log_handlers = [logging.StreamHandler(sys.stderr)]
    logger = logging.getLogger(__name__)

    if LOG_FILE:
        try:
            log_dir = os.path.dirname(LOG_FILE)
            if log_dir and not os.path.exists(log_dir):
                os.makedirs(log_dir, exist_ok=True)
            log_handlers.append(logging.FileHandler(LOG_FILE, mode="a"))
        except (PermissionError, OSError) as e:
            logger.warning(f"Could not set up file logging: {e}. Using console only.")

    logging.basicConfig(
        level=getattr(logging, (level or LOG_LEVEL).upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=log_handlers,
        force=True,
    )
