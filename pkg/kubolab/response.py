import logging
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid

from .errors import InputError
from .kubo import sigma_decomposition, stieltjes_transform
from .lattice import SiteOperator
from .measures import SpectralMeasure
from .models import FermiParams, FieldProfile
from .spectral import EigenSystem

logger = logging.getLogger("kubolab.response")

NU_GRID_NODES = 8192
REALITY_TOL = 1e-10
SYMMETRY_TOL = 1e-12
COVERAGE_TOL = 1e-6
# nodes per field scale in the core of the default nu grid
GRID_RESOLUTION = 4.0
_CHUNK_ELEMENTS = 2_000_000


@dataclass(frozen=True)
class CurrentTrace:
	times: np.ndarray
	values: np.ndarray
	imag_values: np.ndarray
	provenance: dict[str, Any] = field(default_factory=dict)

	@property
	def imag_residual(self) -> float:
		return float(np.max(np.abs(self.imag_values))) if self.imag_values.size else 0.0


def _field_meta(profile: FieldProfile) -> dict[str, Any]:
	return profile.model_dump(mode="json")


def check_hermitian(profile: FieldProfile, nu: np.ndarray) -> None:
	"""E(-nu) = conj(E(nu)) on the given frequencies."""
	nu = np.asarray(nu, dtype=float)
	if nu.size == 0:
		return
	plus = profile.evaluate(nu)
	minus = profile.evaluate(-nu)
	scale = max(float(np.max(np.abs(plus))), 1.0)
	defect = float(np.max(np.abs(minus - np.conj(plus))))
	if defect > SYMMETRY_TOL * scale:
		raise InputError(f"field profile is not hermitian: max |E(-nu) - conj E(nu)| = {defect:.3e}")


def _to_trace(times: np.ndarray, complex_values: np.ndarray, provenance: dict[str, Any]) -> CurrentTrace:
	trace = CurrentTrace(times, complex_values.real.copy(), complex_values.imag.copy(), provenance)
	if trace.imag_residual > REALITY_TOL:
		logger.warning("Current has imaginary residue %.3e above %.0e", trace.imag_residual, REALITY_TOL)
	return trace


def in_phase_current(measure: SpectralMeasure, profile: FieldProfile, times: np.ndarray) -> CurrentTrace:
	"""J(t) = atom E(0) + sum_k w_k exp(i nu_k t) E(nu_k)."""
	times = np.asarray(times, dtype=float)
	points = measure.nonzero()
	check_hermitian(profile, points.locations)
	amplitudes = points.weights * profile.evaluate(points.locations)
	values = np.full(times.shape, measure.atom_at_zero * complex(profile.evaluate(np.zeros(1))[0]))
	chunk = max(1, _CHUNK_ELEMENTS // max(points.locations.size, 1))
	for start in range(0, times.size, chunk):
		block = times[start : start + chunk]
		phases = np.exp(1j * block[:, None] * points.locations[None, :])
		values[start : start + chunk] += phases @ amplitudes
	provenance = {"measure": dict(measure.meta), "field": _field_meta(profile), "kind": "in_phase"}
	return _to_trace(times, values, provenance)


def default_nu_grid(profile: FieldProfile, nodes: int = NU_GRID_NODES) -> np.ndarray:
	"""
	Symmetric grid over the support of the field. Heavy tails (Lorentzian) get a uniform
	core out to core_half_width and geometrically spaced nodes beyond it.
	"""
	half = profile.support_half_width()
	core = min(half, profile.core_half_width())
	if core >= half:
		grid = np.linspace(-half, half, nodes)
		spacing = 2.0 * half / (nodes - 1)
	else:
		inner = np.linspace(-core, core, max(2, nodes // 2))
		tail = np.geomspace(core, half, max(2, nodes // 4) + 1)[1:]
		grid = np.concatenate([-tail[::-1], inner, tail])
		spacing = 2.0 * core / (inner.size - 1)
	if spacing > profile.feature_scale() / GRID_RESOLUTION:
		logger.warning(
			"nu grid spacing %.3g is coarse against the field scale %.3g; raise current.nu_nodes",
			spacing,
			profile.feature_scale(),
		)
	return grid


def adiabatic_current(
	measure: SpectralMeasure,
	profile: FieldProfile,
	eta: float,
	times: np.ndarray,
	nu_grid: Optional[np.ndarray] = None,
	in_phase: bool = True,
) -> CurrentTrace:
	"""
	J_eta(t) = exp(eta t) integral dnu exp(i nu t) sigma(eta, nu) E(nu), trapezoidal in nu.
	The in-phase variant keeps Re sigma only.
	"""
	times = np.asarray(times, dtype=float)
	nu_grid = default_nu_grid(profile) if nu_grid is None else np.asarray(nu_grid, dtype=float)
	if nu_grid.size < 2:
		raise InputError("nu grid needs at least two nodes")
	uncovered = profile.tail_fraction(float(nu_grid[0]), float(nu_grid[-1]))
	if uncovered > COVERAGE_TOL:
		raise InputError(f"nu grid misses {uncovered:.3e} of the field profile mass")
	check_hermitian(profile, nu_grid)

	sigma = stieltjes_transform(measure, eta, nu_grid)
	if in_phase:
		sigma = sigma.real.astype(complex)
	integrand = sigma * profile.evaluate(nu_grid)
	values = np.empty(times.shape, dtype=complex)
	chunk = max(1, _CHUNK_ELEMENTS // nu_grid.size)
	for start in range(0, times.size, chunk):
		block = times[start : start + chunk]
		phases = np.exp(1j * block[:, None] * nu_grid[None, :])
		values[start : start + chunk] = np.exp(eta * block) * trapezoid(phases * integrand[None, :], nu_grid, axis=1)
	provenance = {
		"measure": dict(measure.meta),
		"field": _field_meta(profile),
		"kind": "adiabatic_in_phase" if in_phase else "adiabatic",
		"eta": eta,
	}
	return _to_trace(times, values, provenance)


@dataclass(frozen=True)
class TemperatureGap:
	temperature: float
	sup_gap: float


def t_limit_current_check(
	eig: EigenSystem,
	velocity: SiteOperator,
	profile: FieldProfile,
	mu: float,
	temperatures: Sequence[float],
	times: np.ndarray,
	bandwidth: Optional[float] = None,
) -> list[TemperatureGap]:
	"""sup_t |J^T(t) - J^0(t)| for each T, all measures sharing one Phi."""
	temperatures = list(temperatures)
	if not temperatures or min(temperatures) <= 0.0:
		raise InputError("temperatures must be positive")
	if any(b >= a for a, b in zip(temperatures, temperatures[1:])):
		raise InputError("temperatures must be strictly descending")
	zero = sigma_decomposition(eig, velocity, FermiParams(mu=mu, T=0.0), bandwidth=bandwidth)
	reference = in_phase_current(zero.sigma, profile, times).values
	rows = []
	for temperature in temperatures:
		finite = sigma_decomposition(eig, velocity, FermiParams(mu=mu, T=temperature), phi=zero.phi)
		current = in_phase_current(finite.sigma, profile, times).values
		rows.append(TemperatureGap(temperature, float(np.max(np.abs(current - reference)))))
		logger.debug("T=%s sup gap %.3e", temperature, rows[-1].sup_gap)
	return rows
