"""
Check suites run by `kubolab check`.

identities: exact finite-volume identities on individual realizations
free:       the full pipeline for the free Laplacian against the plane-wave oracle
"""
import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Optional

import numpy as np

from .config import RunConfig
from .diagnostics import CheckResult, free_consistency, free_oracle
from .errors import CheckFailure, ConfigurationError
from .kubo import convolution_check, fermi_reconstruction_check, mass_two_path_check, sigma_decomposition
from .lattice import build_realization, position_operator
from .models import DisorderSpec, FermiParams, GaussianField, LatticeSpec, UniformDensity
from .response import adiabatic_current, in_phase_current
from .spectral import EigenSystem, diagonalize
from .tasks import frequency_edges, velocity_for

logger = logging.getLogger("kubolab.checks")

MASS_TOL = 1e-8
EVENNESS_TOL = 1e-12
CONVOLUTION_TOL = 1e-6
RECONSTRUCTION_TOL = 1e-10
REALITY_TOL = 1e-10
FREE_TOL = 1e-10
ORACLE_TOL = 1e-12
ETA_LADDER = (1.0, 0.3, 0.1, 0.03)
IDENTITY_TEMPERATURES = (0.0, 0.2)


@dataclass(frozen=True)
class SuiteReport:
	name: str
	checks: list[CheckResult]

	@property
	def passed(self) -> bool:
		return all(check.passed for check in self.checks)

	def failures(self) -> list[CheckResult]:
		return [check for check in self.checks if not check.passed]

	def to_dict(self) -> dict[str, Any]:
		return {
			"suite": self.name,
			"passed": self.passed,
			"checks": [
				{
					"name": c.name,
					"value": c.value,
					"tolerance": c.tolerance,
					"passed": c.passed,
					"detail": c.detail,
				}
				for c in self.checks
			],
		}


def default_identity_config() -> RunConfig:
	return RunConfig(
		lattice=LatticeSpec(d=1, L=64),
		disorder=DisorderSpec(density=UniformDensity(W=2.0), strength=1.0, master_seed=0),
		fermi=FermiParams(mu=0.0),
	)


def _check(name: str, value: float, tolerance: float, detail: str = "") -> CheckResult:
	return CheckResult(name, float(value), float(tolerance), bool(value <= tolerance), detail)


def _gap_support(eig: EigenSystem, velocity, tag: str) -> CheckResult:
	"""Fermi level in the widest gap of the middle half: Gamma^0 carries no mass below 0.99 g."""
	energies = eig.eigenvalues
	quarter = eig.size // 4
	gaps = np.diff(energies)
	k = quarter + int(np.argmax(gaps[quarter : eig.size - quarter]))
	gap = float(gaps[k])
	mu = 0.5 * (energies[k] + energies[k + 1])
	gamma = sigma_decomposition(eig, velocity, FermiParams(mu=mu, T=0.0)).gamma
	return _check(f"gap_support{tag}", gamma.mass_in(-0.99 * gap, 0.99 * gap), 0.0, f"(mu={mu:.6g}, gap={gap:.3e})")


def _eta_ladder(sigma, profile: GaussianField, times: np.ndarray, tag: str) -> CheckResult:
	reference = in_phase_current(sigma, profile, times).values
	gaps = [float(np.max(np.abs(adiabatic_current(sigma, profile, eta, times).values - reference))) for eta in ETA_LADDER]
	# increases beyond the quadrature floor count as violations
	worst = max(b - a for a, b in zip(gaps, gaps[1:]))
	detail = "(gaps " + ", ".join(f"{g:.3e}" for g in gaps) + ")"
	return _check(f"adiabatic_eta_limit{tag}", max(worst, 0.0), 1e-9, detail)


def _identity_checks(config: RunConfig, index: int) -> list[CheckResult]:
	if config.lattice.boundary != "dirichlet":
		raise ConfigurationError("the identities suite needs a dirichlet box", field="lattice.boundary")
	h = build_realization(config.lattice, config.disorder, index)
	eig = diagonalize(h)
	velocity = velocity_for(config, h)
	x1 = position_operator(config.lattice)
	edges = frequency_edges(config)
	tag = f"[r={index}]"
	checks = []
	for temperature in IDENTITY_TEMPERATURES:
		p = FermiParams(mu=config.fermi.mu, T=temperature)
		mass_a, mass_b = mass_two_path_check(eig, velocity, x1, p)
		checks.append(
			_check(
				f"two_path_mass{tag}[T={temperature:g}]",
				abs(mass_a - mass_b),
				MASS_TOL * (1.0 + abs(mass_a)),
				f"(A={mass_a:.12g}, B={mass_b:.12g})",
			)
		)
		sigma = sigma_decomposition(eig, velocity, p, bandwidth_factor=config.bandwidth_factor).sigma
		checks.append(_check(f"evenness{tag}[T={temperature:g}]", sigma.evenness_defect(edges), EVENNESS_TOL))
		trace = in_phase_current(sigma, config.current.field, config.current.times.values())
		checks.append(_check(f"current_reality{tag}[T={temperature:g}]", trace.imag_residual, REALITY_TOL))

	p = FermiParams(mu=config.fermi.mu, T=max(IDENTITY_TEMPERATURES))
	t_grid = np.linspace(p.mu - 10.0 * p.temperature, p.mu + 10.0 * p.temperature, 201)
	checks.append(_check(f"fermi_reconstruction{tag}", fermi_reconstruction_check(p, t_grid), RECONSTRUCTION_TOL))
	report = convolution_check(eig, velocity, p, edges=edges, tolerance=CONVOLUTION_TOL)
	checks.append(
		_check(
			f"convolution{tag}",
			report.max_discrepancy,
			CONVOLUTION_TOL,
			"(under-resolved)" if report.under_resolved else "",
		)
	)
	checks.append(_gap_support(eig, velocity, tag))
	sigma = sigma_decomposition(eig, velocity, p).sigma
	checks.append(_eta_ladder(sigma, GaussianField(), np.linspace(0.0, 5.0, 11), tag))
	return checks


def identities_suite(config: Optional[RunConfig] = None) -> SuiteReport:
	config = default_identity_config() if config is None else config
	checks = []
	for index in range(config.realizations):
		checks.extend(_identity_checks(config, index))
	return SuiteReport("identities", checks)


FREE_CASES = (
	(1, 64, 0.0, 0.0),
	(1, 64, 3.0, 0.0),
	(1, 64, 0.5, 0.2),
	(1, 256, 0.0, 0.0),
	(2, 12, 0.0, 0.0),
)


def free_suite(config: Optional[RunConfig] = None) -> SuiteReport:
	checks = []
	for d, L, mu, temperature in FREE_CASES:
		report = free_consistency(d, L, mu=mu, temperature=temperature, tolerance=FREE_TOL)
		tag = f"[d={d},L={L},mu={mu:g},T={temperature:g}]"
		checks.extend(CheckResult(c.name + tag, c.value, c.tolerance, c.passed, c.detail) for c in report.checks)

	small = free_oracle(1, 8)
	checks.append(_check("oracle_psi_at_zero[d=1,L=8]", abs(small.psi.mass_in(0.0, 0.0) - math.pi), ORACLE_TOL))
	for size in (8, 64):
		total = free_oracle(1, size).psi.total_mass
		checks.append(_check(f"oracle_psi_total[d=1,L={size}]", abs(total - 2.0 * math.pi), ORACLE_TOL))
	return SuiteReport("free", checks)


SUITES: dict[str, Callable[[Optional[RunConfig]], SuiteReport]] = {
	"identities": identities_suite,
	"free": free_suite,
}


def run_suite(name: str, config: Optional[RunConfig] = None) -> SuiteReport:
	try:
		suite = SUITES[name]
	except KeyError as e:
		raise ConfigurationError(f"unknown suite '{name}' (choose from {', '.join(SUITES)})", field="--suite") from e
	report = suite(config)
	for failure in report.failures():
		logger.warning("Check failed: %s value=%.3e tol=%.3e %s", failure.name, failure.value, failure.tolerance, failure.detail)
	logger.info("Suite %s: %s of %s checks passed", name, len(report.checks) - len(report.failures()), len(report.checks))
	return report


def require_pass(report: SuiteReport) -> SuiteReport:
	if not report.passed:
		names = ", ".join(check.name for check in report.failures())
		raise CheckFailure(f"suite {report.name} failed: {names}", report=report)
	return report
