# utils.py

import argparse
import logging
import time
from contextlib import contextmanager

# LOGGING CONFIGURATION - supports levels 0-3
VERBOSE_LEVEL = 0  # Default level, overridden by command line args

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

logger = logging.getLogger(__name__)


def parse_verbosity_args(argv=None):
    """Parse the --v verbosity flag ahead of the real command line parser."""
    global VERBOSE_LEVEL

    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument('--v', type=int, default=0, choices=[0, 1, 2, 3],
                        help='Verbosity level: 0=minimal, 1=basic, 2=detailed, 3=full debug')

    args, _ = parser.parse_known_args(argv)
    VERBOSE_LEVEL = args.v
    return VERBOSE_LEVEL


def configure_logging(verbose_level=None):
    if verbose_level is None:
        verbose_level = VERBOSE_LEVEL

    logging.basicConfig(
        level=logging.WARNING,
        format=LOG_FORMAT,
        handlers=[logging.StreamHandler()],
    )

    package_logger = logging.getLogger('isl_recognizer')
    if verbose_level == 0:
        package_logger.setLevel(logging.WARNING)
        logging.getLogger('asyncio').setLevel(logging.ERROR)
    elif verbose_level == 1:
        package_logger.setLevel(logging.INFO)
        logging.getLogger('asyncio').setLevel(logging.WARNING)
        logging.getLogger('isl_recognizer.pipeline').setLevel(logging.WARNING)
    elif verbose_level == 2:
        package_logger.setLevel(logging.INFO)
        logging.getLogger('asyncio').setLevel(logging.WARNING)
        logging.getLogger('isl_recognizer.pipeline').setLevel(logging.DEBUG)
    else:  # verbose_level >= 3
        package_logger.setLevel(logging.DEBUG)
        logging.getLogger('asyncio').setLevel(logging.INFO)


def log_critical_debug(message: str):
    """Promote a debug line to INFO when running with --v 3."""
    if VERBOSE_LEVEL >= 3:
        logger.info(f"[CRITICAL DEBUG] {message}")
    else:
        logger.debug(message)


class Colors:
    RESET, BOLD, UNDERLINE = "\033[0m", "\033[1m", "\033[4m"
    RED, GREEN, YELLOW = "\033[31m", "\033[32m", "\033[33m"
    BLUE, MAGENTA, CYAN, WHITE = "\033[34m", "\033[35m", "\033[36m", "\033[37m"


def print_colored(text: str, color: str = Colors.BLUE, bold: bool = False):
    """Print colored text to terminal"""
    format_start = color + (Colors.BOLD if bold else "")
    print(f"{format_start}{text}{Colors.RESET}")


class StageTimer:
    """Collects wall time per named stage, in milliseconds."""

    def __init__(self):
        self.timings = {}
        self._started = time.perf_counter()

    @contextmanager
    def stage(self, name: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            elapsed = (time.perf_counter() - start) * 1000.0
            self.timings[name] = self.timings.get(name, 0.0) + elapsed

    @property
    def total_ms(self) -> float:
        return (time.perf_counter() - self._started) * 1000.0
