import pytest

from conftest import make_config
from kubolab.checks import SuiteReport, identities_suite, require_pass, run_suite
from kubolab.diagnostics import CheckResult
from kubolab.errors import CheckFailure, ConfigurationError


def test_identities_suite_passes() -> None:
	report = run_suite("identities")
	assert report.passed, [(c.name, c.value, c.detail) for c in report.failures()]
	names = [c.name for c in report.checks]
	assert any(name.startswith("two_path_mass") for name in names)
	assert any(name.startswith("adiabatic_eta_limit") for name in names)
	assert report.to_dict()["passed"] is True


def test_free_suite_passes() -> None:
	report = require_pass(run_suite("free"))
	assert any(c.name.startswith("oracle_psi_at_zero") for c in report.checks)


def test_identities_need_a_dirichlet_box() -> None:
	with pytest.raises(ConfigurationError):
		identities_suite(make_config(lattice={"d": 1, "L": 16, "boundary": "periodic"}))


def test_unknown_suite() -> None:
	with pytest.raises(ConfigurationError) as e:
		run_suite("nonsense")
	assert e.value.field == "--suite"


def test_require_pass_raises_with_the_report() -> None:
	report = SuiteReport("x", [CheckResult("a", 1.0, 0.5, False), CheckResult("b", 0.0, 0.5, True)])
	with pytest.raises(CheckFailure) as e:
		require_pass(report)
	assert e.value.report is report
	assert "a" in str(e.value) and [c.name for c in report.failures()] == ["a"]
