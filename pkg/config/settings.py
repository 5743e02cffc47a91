import logging
import os
import sys
from dotenv import load_dotenv

load_dotenv()

SERVER_NAME = os.getenv("KG_SERVER_NAME", "kgplanner")
LOG_LEVEL = os.getenv("KG_LOG_LEVEL", "INFO")

## server setup
HOST = os.getenv("KG_HOST", "0.0.0.0")
PORT = int(os.getenv("PORT", 8000))

## planning / execution defaults
DEFAULT_ENGINE = os.getenv("KG_ENGINE", "internal")
# the five-hour experimental timeout
DEFAULT_TIMEOUT = int(os.getenv("KG_TIMEOUT", 18000))
DEFAULT_RUN_DIR = os.getenv("KG_RUN_DIR", "run")
# 0 means min(#leaves, logical CPUs)
DEFAULT_PARALLELISM = int(os.getenv("KG_PARALLELISM", 0))
DR_MEMORY_LIMIT = int(os.getenv("KG_DR_MEMORY_LIMIT", 1_000_000))
ENUMERATION_LIMIT = int(os.getenv("KG_ENUMERATION_LIMIT", 7))
# TOML run configuration used when a command or tool names none
RUN_CONFIG = os.getenv("KG_CONFIG")


def configure_logging(level: str | None = None) -> None:
    """Send log records to stderr; stdout belongs to command output and the stdio transport."""
    logging.basicConfig(
        level=(level or LOG_LEVEL).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
