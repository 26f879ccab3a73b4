"""
Logging for the CLI, the scripts and the spawned realization workers.

Records go to stderr so stdout stays clean for --json summaries and CSV output.
Spawned workers start with an unconfigured root logger; the pool initializer
gives them the parent's level and a format that names the process.
"""
import contextlib
import logging
import os
import sys
from pathlib import Path
from typing import Iterator, Optional

from dotenv import load_dotenv

LOG_FORMAT = "%(asctime)s %(levelname)s %(processName)s %(name)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"
RUN_LOG = "run.log"

# font discovery and PNG plugins
_NOISY = ("matplotlib", "PIL")


def _parse_level(level_str: Optional[str]) -> int:
	if not level_str:
		return logging.INFO
	level = logging.getLevelName(level_str.strip().upper())
	return level if isinstance(level, int) else logging.INFO


def _install(level: int) -> None:
	root = logging.getLogger()
	if not root.handlers:
		logging.basicConfig(level=level, format=LOG_FORMAT, datefmt=DATE_FORMAT, stream=sys.stderr)
	else:
		root.setLevel(level)
	for name in _NOISY:
		logging.getLogger(name).setLevel(max(logging.WARNING, level))


def configure_logging(verbose: bool = False) -> int:
	"""LOG_LEVEL from the environment (or .env); --verbose forces DEBUG. Returns the level."""
	load_dotenv()
	level = logging.DEBUG if verbose else _parse_level(os.getenv("LOG_LEVEL"))
	_install(level)
	return level


def worker_logging(level: int) -> None:
	"""ProcessPoolExecutor initializer for spawned realization workers."""
	_install(level)
	logging.getLogger("kubolab.worker").debug("Worker %s ready", os.getpid())


@contextlib.contextmanager
def run_log(run_dir: Optional[Path]) -> Iterator[None]:
	"""Append kubolab records to run.log in the run directory while the block runs."""
	if run_dir is None:
		yield
		return
	handler = logging.FileHandler(Path(run_dir) / RUN_LOG, encoding="utf-8")
	handler.setFormatter(logging.Formatter(LOG_FORMAT, DATE_FORMAT))
	package = logging.getLogger("kubolab")
	package.addHandler(handler)
	try:
		yield
	finally:
		package.removeHandler(handler)
		handler.close()
