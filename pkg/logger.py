# logger.py
import logging
import os

_log_file = os.getenv("SYMHEAP_LOG_FILE", "bench.log")

logging.basicConfig(
    filename=_log_file or None,
    level=getattr(logging, os.getenv("SYMHEAP_LOG_LEVEL", "INFO").upper(), logging.INFO),
    format="%(asctime)s - %(levelname)s - %(message)s"
)

logger = logging.getLogger()
