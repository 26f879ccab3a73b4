"""
Localization diagnostics and the free-Laplacian oracle.

The diagnostics report evidence only: a fitted decay rate or a bounded trend in L says
nothing rigorous about which region of energies a Fermi level belongs to.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Optional, Sequence

import numpy as np
from scipy import stats

from .errors import InputError
from .kubo import default_bandwidth, sigma_decomposition
from .lattice import assemble_hamiltonian, hopping_velocity, position_operator
from .measures import SpectralMeasure
from .models import FermiParams, LatticeSpec
from .spectral import EigenSystem, apply_function_of_H, diagonalize, fermi, fermi_derivative_weight

if TYPE_CHECKING:
	from .config import RunConfig

logger = logging.getLogger("kubolab.diagnostics")

R2_THRESHOLD = 0.9
NOISE_FLOOR = 1e-26


@dataclass(frozen=True)
class DecayFit:
	rate: float
	prefactor: float
	r_squared: float
	points: int
	ok: bool
	reason: str = ""
	# log-log fit on the same window; a polynomially decaying kernel fits it better
	power_r_squared: float = math.nan

	@property
	def localized_evidence(self) -> bool:
		if not (self.ok and self.rate > 0.0 and self.r_squared >= R2_THRESHOLD):
			return False
		return not self.power_r_squared > self.r_squared


@dataclass(frozen=True)
class DecayProfile:
	distances: np.ndarray
	values: np.ndarray
	stderr: np.ndarray
	left: np.ndarray
	right: np.ndarray
	fit: DecayFit
	meta: dict[str, Any] = field(default_factory=dict)


def axis_sites(lattice: LatticeSpec) -> tuple[np.ndarray, np.ndarray]:
	"""Sites at distance r = 0..R from the center along +x1 and -x1."""
	origin = lattice.origin
	radius = min(origin, lattice.L - 1 - origin)
	rest = (origin,) * (lattice.d - 1)
	right = np.array([lattice.index_of((origin + r,) + rest) for r in range(radius + 1)])
	left = np.array([lattice.index_of((origin - r,) + rest) for r in range(radius + 1)])
	return left, right


def fermi_kernel_profile(eig: EigenSystem, lattice: LatticeSpec, mu_grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
	"""sup over mu of |<delta_x, f_mu^0(H) delta_0>|^2 along both half axes of one realization."""
	center = lattice.center_index
	# column k holds the projection onto the k lowest eigenvectors applied to delta_0
	partial = np.cumsum(eig.eigenvectors * eig.eigenvectors[center, :][None, :], axis=1)
	partial = np.concatenate([np.zeros((eig.size, 1)), partial], axis=1)
	counts = np.searchsorted(eig.eigenvalues, np.asarray(mu_grid, dtype=float), side="right")
	left, right = axis_sites(lattice)
	kernels = np.abs(partial[:, counts]) ** 2
	return kernels[left].max(axis=1), kernels[right].max(axis=1)


def fit_exponential(
	distances: np.ndarray,
	values: np.ndarray,
	min_distance: int = 3,
	outer_fraction: float = 0.2,
	noise_floor: float = NOISE_FLOOR,
) -> DecayFit:
	"""Least squares of log(values) against distance on the middle of the range."""
	distances = np.asarray(distances, dtype=float)
	values = np.asarray(values, dtype=float)
	cutoff = distances.max() * (1.0 - outer_fraction) if distances.size else 0.0
	window = (distances >= min_distance) & (distances <= cutoff)
	use = window & (values > noise_floor)
	if use.sum() < 3:
		return DecayFit(math.nan, math.nan, math.nan, int(use.sum()), False, "fewer than 3 positive values above the noise floor")
	logs = np.log(values[use])
	regression = stats.linregress(distances[use], logs)
	power = stats.linregress(np.log(distances[use]), logs)
	return DecayFit(
		rate=float(-regression.slope),
		prefactor=float(math.exp(regression.intercept)),
		r_squared=float(regression.rvalue**2),
		points=int(use.sum()),
		ok=True,
		power_r_squared=float(power.rvalue**2),
	)


def fermi_kernel_decay(config: "RunConfig", workers: Optional[int] = None) -> DecayProfile:
	from .ensemble import run

	if config.lattice.boundary != "dirichlet":
		raise InputError("the Fermi kernel decay runs on a dirichlet box")
	estimate = run(config.model_copy(update={"task": "diag-decay"}), workers=workers)
	decay = estimate.series["decay"]
	distances = np.asarray(decay.axis, dtype=float)
	spec = config.diagnostics
	fit = fit_exponential(distances, decay.mean, noise_floor=spec.noise_floor)
	if not fit.ok:
		logger.warning("Decay fit failed: %s", fit.reason)
	else:
		logger.info(
			"Decay fit: m=%.4g C=%.4g R^2=%.4f (power law R^2=%.4f)",
			fit.rate,
			fit.prefactor,
			fit.r_squared,
			fit.power_r_squared,
		)
	return DecayProfile(
		distances=distances,
		values=decay.mean,
		stderr=decay.stderr,
		left=estimate.series["decay_left"].mean,
		right=estimate.series["decay_right"].mean,
		fit=fit,
		meta=dict(estimate.meta),
	)


def y_norm(eig: EigenSystem, lattice: LatticeSpec, p: FermiParams) -> float:
	"""||X1 f_mu^T(H) delta_0||^2 in one realization."""
	delta = np.zeros(eig.size)
	delta[lattice.center_index] = 1.0
	vector = apply_function_of_H(eig, lambda e: fermi(e, p), delta)
	positions = np.diag(position_operator(lattice).matrix)
	return float(np.sum(np.abs(positions * vector) ** 2))


@dataclass(frozen=True)
class GrowthRow:
	L: int
	mean: float
	stderr: float
	realizations: int


def y_norm_growth(config: "RunConfig", workers: Optional[int] = None) -> list[GrowthRow]:
	from .ensemble import run

	if config.lattice.boundary != "dirichlet":
		raise InputError("the Y-norm growth runs on a dirichlet box")
	rows = []
	for size in config.diagnostics.L_list:
		lattice = config.lattice.model_copy(update={"L": size})
		estimate = run(config.model_copy(update={"task": "diag-ynorm", "lattice": lattice}), workers=workers)
		scalar = estimate.scalars["y_norm"]
		rows.append(GrowthRow(size, scalar.mean, scalar.stderr, estimate.n_realizations))
		logger.info("L=%s E||X1 f(H) delta_0||^2 = %.6g +/- %.2g", size, scalar.mean, scalar.stderr)
	return rows


@dataclass(frozen=True)
class MottRow:
	nu: float
	low_mass: float
	ratio: float


def mott_scaling(measures: Sequence[SpectralMeasure], nu_grid: Sequence[float], d: int) -> list[MottRow]:
	"""nu -> [Sigma([0, nu]) / nu] / [nu^2 (log 1/nu)^(d+2)], Sigma averaged over the measures."""
	grid = np.asarray(nu_grid, dtype=float)
	if grid.size and (grid.min() <= 0.0 or grid.max() >= 1.0):
		raise InputError("the Mott scaling grid must lie in ]0, 1[")
	average = sum((m.scaled(1.0 / len(measures)) for m in measures), SpectralMeasure.zero())
	rows = []
	for nu in grid:
		low_mass = average.mass_in(0.0, float(nu))
		rows.append(MottRow(float(nu), low_mass, mott_ratio(low_mass, float(nu), d)))
	return rows


def mott_ratio(low_mass: float, nu: float, d: int) -> float:
	return (low_mass / nu) / (nu**2 * math.log(1.0 / nu) ** (d + 2))


def free_psi_density_1d(energy):
	"""Density of Psi for -Delta on Z: sqrt(4 - E^2) on ]-2, 2[, total mass 2 pi."""
	energy = np.asarray(energy, dtype=float)
	result = np.where(np.abs(energy) < 2.0, np.sqrt(np.clip(4.0 - energy**2, 0.0, None)), 0.0)
	return result if result.ndim else float(result)


@dataclass(frozen=True)
class FreeOracleResult:
	d: int
	L: int
	psi: SpectralMeasure
	dos: SpectralMeasure
	energy_grid: np.ndarray
	psi_smoothed: np.ndarray
	dos_smoothed: np.ndarray
	bandwidth: float

	def psi_at(self, mu: float, bandwidth: Optional[float] = None) -> float:
		h = self.bandwidth if bandwidth is None else bandwidth
		return float(_smoothed_on_hull(self.psi, np.array([mu]), h, self.d)[0])


def _smoothed_on_hull(measure: SpectralMeasure, grid: np.ndarray, bandwidth: float, d: int) -> np.ndarray:
	values = measure.smoothed_density(grid, bandwidth)
	lo, hi = measure.locations.min(), measure.locations.max()
	inside = (grid >= max(lo, -2.0 * d)) & (grid <= min(hi, 2.0 * d))
	return np.where(inside, values, 0.0)


def _aggregate(energies: np.ndarray, weights: np.ndarray, meta: dict[str, Any]) -> SpectralMeasure:
	keys = np.round(energies, 12)
	unique, inverse = np.unique(keys, return_inverse=True)
	return SpectralMeasure(0.0, unique, np.bincount(inverse, weights=weights), meta=meta)


def free_oracle(
	d: int, L: int, energy_grid: Optional[np.ndarray] = None, bandwidth: Optional[float] = None
) -> FreeOracleResult:
	"""
	Psi and the DOS of -Delta on the periodic cube from plane waves: mode k has energy
	sum_j 2 cos(2 pi k_j / L), velocity eigenvalue -2 sin(2 pi k_1 / L), so Psi puts
	(4 pi / L^d) sin^2(2 pi k_1 / L) there.
	"""
	n = L**d
	modes = np.indices((L,) * d).reshape(d, -1).T
	angles = 2.0 * math.pi * modes / L
	energies = (2.0 * np.cos(angles)).sum(axis=1)
	meta = {"d": d, "L": L, "boundary": "periodic", "lambda": 0.0}
	psi = _aggregate(energies, 4.0 * math.pi / n * np.sin(angles[:, 0]) ** 2, {**meta, "kind": "psi"})
	dos = _aggregate(energies, np.full(n, 1.0 / n), {**meta, "kind": "dos"})
	if bandwidth is None:
		bandwidth = (energies.max() - energies.min()) * n ** (-1.0 / 3.0)
	grid = np.linspace(-2.0 * d - 1.0, 2.0 * d + 1.0, 801) if energy_grid is None else np.asarray(energy_grid, dtype=float)
	return FreeOracleResult(
		d=d,
		L=L,
		psi=psi,
		dos=dos,
		energy_grid=grid,
		psi_smoothed=_smoothed_on_hull(psi, grid, bandwidth, d),
		dos_smoothed=_smoothed_on_hull(dos, grid, bandwidth, d),
		bandwidth=float(bandwidth),
	)


@dataclass(frozen=True)
class CheckResult:
	name: str
	value: float
	tolerance: float
	passed: bool
	detail: str = ""


@dataclass(frozen=True)
class FreeConsistencyReport:
	d: int
	L: int
	mu: float
	temperature: float
	checks: list[CheckResult]

	@property
	def passed(self) -> bool:
		return all(check.passed for check in self.checks)

	def mismatches(self) -> list[str]:
		return [
			f"{c.name}: value {c.value:.6g} exceeds tolerance {c.tolerance:.3g} {c.detail}".rstrip()
			for c in self.checks
			if not c.passed
		]


def free_consistency(
	d: int, L: int, mu: float = 0.0, temperature: float = 0.0, bandwidth: Optional[float] = None, tolerance: float = 1e-10
) -> FreeConsistencyReport:
	"""The full Sigma pipeline on -Delta with periodic boundary against the plane-wave oracle."""
	lattice = LatticeSpec(d=d, L=L, boundary="periodic")
	h = assemble_hamiltonian(lattice, np.zeros(lattice.n_sites), 0.0)
	eig = diagonalize(h)
	p = FermiParams(mu=mu, T=temperature)
	if temperature == 0.0 and bandwidth is None:
		bandwidth = default_bandwidth(eig)
	decomposition = sigma_decomposition(eig, hopping_velocity(lattice), p, bandwidth=bandwidth)
	sigma = decomposition.sigma

	oracle = free_oracle(d, L, bandwidth=bandwidth)
	if temperature > 0.0:
		expected = oracle.psi.integrate(lambda e: fermi_derivative_weight(e, p))
	else:
		expected = oracle.psi_at(mu, bandwidth)
	atom_tol = 1e-8 * (1.0 + expected)
	checks = [
		CheckResult("gamma_mass", decomposition.gamma.total_mass, tolerance, decomposition.gamma.total_mass <= tolerance),
		CheckResult(
			"sigma_minus_atom",
			abs(sigma.total_mass - sigma.atom_at_zero),
			tolerance,
			abs(sigma.total_mass - sigma.atom_at_zero) <= tolerance,
		),
		CheckResult(
			"atom_vs_oracle",
			abs(sigma.atom_at_zero - expected),
			atom_tol,
			abs(sigma.atom_at_zero - expected) <= atom_tol,
			f"(atom={sigma.atom_at_zero:.10g}, oracle={expected:.10g}, bandwidth={bandwidth})",
		),
	]
	if abs(mu) >= 2.0 * d:
		checks.append(
			CheckResult("sigma_mass_outside_band", sigma.total_mass, tolerance, sigma.total_mass <= tolerance)
		)
	if d == 1 and temperature == 0.0 and bandwidth < 2.0 - abs(mu):
		# smoothing bias of the density at mu is about h^2 / 4 at the band center
		limit = free_psi_density_1d(mu)
		gap = abs(sigma.atom_at_zero - limit)
		checks.append(
			CheckResult(
				"atom_vs_infinite_volume",
				gap,
				bandwidth**2,
				gap <= bandwidth**2,
				f"(atom={sigma.atom_at_zero:.6g}, sqrt(4 - mu^2)={limit:.6g})",
			)
		)
	report = FreeConsistencyReport(d, L, mu, temperature, checks)
	for line in report.mismatches():
		logger.warning("Free consistency d=%s L=%s mu=%s: %s", d, L, mu, line)
	return report
