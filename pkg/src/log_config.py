"""Package logger; records go to gds_mamba.log unless GDS_MAMBA_LOG_FILE names another file"""
import logging
import os

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(module)s - %(message)s"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")

logging.basicConfig(
    filename=os.environ.get("GDS_MAMBA_LOG_FILE", "gds_mamba.log"),
    level=logging.INFO,
    format=LOG_FORMAT,
    datefmt="%Y-%m-%d %H:%M:%S",
)

LOGGER = logging.getLogger("gds_mamba_logger")


def set_level(level: str) -> None:
    """Apply a level name from LOG_LEVELS to the package logger"""
    name = level.upper()
    if name not in LOG_LEVELS:
        raise ValueError(f"Unknown log level {level!r}. Allowed values: {', '.join(LOG_LEVELS)}.")
    LOGGER.setLevel(name)
