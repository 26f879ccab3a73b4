import logging

from kubolab.logging_config import RUN_LOG, _parse_level, configure_logging, run_log


def test_parse_level() -> None:
	assert _parse_level(None) == logging.INFO
	assert _parse_level(" debug ") == logging.DEBUG
	assert _parse_level("nonsense") == logging.INFO


def test_verbose_switches_to_debug(monkeypatch) -> None:
	root = logging.getLogger()
	previous = root.level
	monkeypatch.setenv("LOG_LEVEL", "ERROR")
	try:
		assert configure_logging() == logging.ERROR
		assert root.level == logging.ERROR
		configure_logging(verbose=True)
		assert root.level == logging.DEBUG
		assert logging.getLogger("matplotlib").level == logging.WARNING
	finally:
		root.setLevel(previous)


def test_run_log_collects_package_records(tmp_path) -> None:
	package = logging.getLogger("kubolab")
	previous = package.level
	package.setLevel(logging.INFO)
	try:
		with run_log(tmp_path):
			logging.getLogger("kubolab.ensemble").info("inside %s", 1)
		logging.getLogger("kubolab.ensemble").info("outside")
	finally:
		package.setLevel(previous)
	text = (tmp_path / RUN_LOG).read_text(encoding="utf-8")
	assert "kubolab.ensemble - inside 1" in text
	assert "outside" not in text
	assert not package.handlers


def test_run_log_without_a_directory_is_a_no_op() -> None:
	with run_log(None):
		pass
	assert not logging.getLogger("kubolab").handlers
