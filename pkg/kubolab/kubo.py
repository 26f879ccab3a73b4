"""
Conductivity measures of one realization built from the eigen-pair weights of the
velocity operator.

Phi  : |<v_n, X1' v_m>|^2 / N at (E_n, E_m)
Psi  : pi * Phi restricted to the kernel of the Liouvillian, as a measure in energy
Gamma: pi * Phi * F(E_n, E_m) pushed to the frequency nu = E_n - E_m
Sigma: Psi((-f)') delta_0 + Gamma for T > 0, psi(mu) delta_0 + Gamma for T = 0
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .errors import DomainError, InputError
from .lattice import SiteOperator
from .measures import PairMeasure, SpectralMeasure, bin_indices
from .models import BinningSpec, FermiParams
from .spectral import EigenSystem, fermi, fermi_derivative_weight, function_matrix

logger = logging.getLogger("kubolab.kubo")

FERMI_WINDOW = 60.0
DEFAULT_BINS = 400
_CHUNK_ELEMENTS = 2_000_000


def _meta(eig: EigenSystem, p: Optional[FermiParams] = None, **extra: Any) -> dict[str, Any]:
	meta = dict(eig.meta)
	if p is not None:
		meta.update({"mu": p.mu, "T": p.temperature})
	meta.update(extra)
	return meta


def phi_measure(eig: EigenSystem, velocity: SiteOperator) -> PairMeasure:
	if velocity.matrix.shape != (eig.size, eig.size):
		raise InputError(f"velocity operator has shape {velocity.matrix.shape}, expected N={eig.size}")
	elements = eig.to_eigenbasis(velocity.matrix)
	weights = np.abs(elements) ** 2 / eig.size
	# |M_nm| = |M_mn| for Hermitian velocity; enforce it bitwise
	weights = 0.5 * (weights + weights.T)
	return PairMeasure(
		eig.eigenvalues,
		weights,
		volume=eig.size,
		degeneracy_tol=eig.degeneracy_tol,
		meta={"kind": "phi", "velocity": velocity.meta.get("form"), **eig.meta},
	)


def kernel_F(lam1, lam2, p: FermiParams, degeneracy_tol: float = 0.0):
	"""-(f(l1) - f(l2)) / (l1 - l2) off the diagonal, 0 on it."""
	lam1 = np.asarray(lam1, dtype=float)
	lam2 = np.asarray(lam2, dtype=float)
	diff = lam1 - lam2
	off = np.abs(diff) > degeneracy_tol
	safe = np.where(off, diff, 1.0)
	values = np.where(off, -(fermi(lam1, p) - fermi(lam2, p)) / safe, 0.0)
	values = np.maximum(values, 0.0)
	return values if values.ndim else float(values)


def gamma_measure(phi: PairMeasure, p: FermiParams) -> SpectralMeasure:
	nu = phi.frequencies()
	off = ~phi.kernel_mask()
	lam1 = np.broadcast_to(phi.energies[:, None], nu.shape)[off]
	lam2 = np.broadcast_to(phi.energies[None, :], nu.shape)[off]
	weights = math.pi * phi.weights[off] * kernel_F(lam1, lam2, p)
	keep = weights > 0.0
	meta = {**phi.meta, "kind": "gamma", "mu": p.mu, "T": p.temperature}
	return SpectralMeasure(0.0, nu[off][keep], weights[keep], even=True, meta=meta)


def psi_from_phi(phi: PairMeasure) -> SpectralMeasure:
	"""pi * Phi on the kernel pairs, deposited at the first energy of each pair."""
	weights = math.pi * np.where(phi.kernel_mask(), phi.weights, 0.0).sum(axis=1)
	return SpectralMeasure(0.0, phi.energies, weights, meta={**phi.meta, "kind": "psi"})


def psi_diagonal_measure(eig: EigenSystem, velocity: SiteOperator) -> SpectralMeasure:
	return psi_from_phi(phi_measure(eig, velocity))


def default_bandwidth(eig: EigenSystem, factor: float = 1.0) -> float:
	"""h = c * (spectral width) * N^(-1/3)."""
	return factor * max(eig.spectral_width, 1e-12) * eig.size ** (-1.0 / 3.0)


def atom_weight(psi: SpectralMeasure, p: FermiParams, bandwidth: Optional[float] = None) -> float:
	if p.temperature > 0.0:
		return psi.integrate(lambda e: fermi_derivative_weight(e, p))
	if bandwidth is None or bandwidth <= 0.0:
		raise DomainError("the T=0 atom needs a positive smoothing bandwidth")
	if psi.locations.size == 0:
		return 0.0
	# psi is supported by the spectrum
	if not psi.locations.min() <= p.mu <= psi.locations.max():
		return 0.0
	return float(psi.smoothed_density(np.array([p.mu]), bandwidth)[0])


@dataclass(frozen=True)
class SigmaDecomposition:
	phi: PairMeasure
	psi: SpectralMeasure
	gamma: SpectralMeasure
	sigma: SpectralMeasure
	bandwidth: Optional[float]


def sigma_decomposition(
	eig: EigenSystem,
	velocity: SiteOperator,
	p: FermiParams,
	bandwidth: Optional[float] = None,
	bandwidth_factor: float = 1.0,
	phi: Optional[PairMeasure] = None,
) -> SigmaDecomposition:
	phi = phi_measure(eig, velocity) if phi is None else phi
	psi = psi_from_phi(phi)
	gamma = gamma_measure(phi, p)
	if p.temperature == 0.0 and bandwidth is None:
		bandwidth = default_bandwidth(eig, bandwidth_factor)
	atom = atom_weight(psi, p, bandwidth)
	atom_part = SpectralMeasure(
		atom,
		np.empty(0),
		np.empty(0),
		even=True,
		meta=_meta(eig, p, kind="sigma", bandwidth=bandwidth if p.temperature == 0.0 else None),
	)
	sigma = atom_part + gamma
	return SigmaDecomposition(phi, psi, gamma, sigma, bandwidth)


def sigma_measure(
	eig: EigenSystem,
	velocity: SiteOperator,
	p: FermiParams,
	bandwidth: Optional[float] = None,
	bandwidth_factor: float = 1.0,
) -> SpectralMeasure:
	return sigma_decomposition(eig, velocity, p, bandwidth, bandwidth_factor).sigma


def _kernel_part(eig: EigenSystem, x_matrix: np.ndarray, f: np.ndarray) -> float:
	"""Contribution of the numerically degenerate pairs to the site-basis trace."""
	total = 0.0
	for group in eig.clusters():
		vectors = eig.eigenvectors[:, group]
		block = vectors.conj().T @ x_matrix @ vectors
		nu = eig.eigenvalues[group][:, None] - eig.eigenvalues[group][None, :]
		total += float(np.sum(nu * (f[group][None, :] - f[group][:, None]) * np.abs(block) ** 2))
	return total


def mass_two_path_check(
	eig: EigenSystem, velocity: SiteOperator, x1: SiteOperator, p: FermiParams
) -> tuple[float, float]:
	"""
	Off-zero conductivity mass computed twice:
	A from eigen-pairs of X1, (pi/N) sum (E_n - E_m)(f(E_m) - f(E_n)) |<v_n, X1 v_m>|^2;
	B from the site basis, (pi/N) tr(X1'^* i[X1, f(H)]) minus the kernel pairs.
	"""
	if x1.lattice.boundary != "dirichlet":
		raise InputError("the two-path mass check needs a dirichlet box")
	n = eig.size
	energies = eig.eigenvalues
	f = np.asarray(fermi(energies, p), dtype=float)

	x_eigen = eig.to_eigenbasis(x1.matrix)
	nu = energies[:, None] - energies[None, :]
	off = np.abs(nu) > eig.degeneracy_tol
	terms = nu * (f[None, :] - f[:, None]) * np.abs(x_eigen) ** 2
	mass_a = math.pi / n * float(np.sum(terms[off]))

	f_matrix = function_matrix(eig, lambda e: fermi(e, p))
	positions = np.diag(x1.matrix)
	commutator = 1j * (positions[:, None] * f_matrix - f_matrix * positions[None, :])
	trace = float(np.sum(velocity.matrix.conj() * commutator).real)
	mass_b = math.pi / n * (trace - _kernel_part(eig, x1.matrix, f))
	logger.debug("Two-path mass: A=%.12g B=%.12g", mass_a, mass_b)
	return mass_a, mass_b


def _fermi_window(p: FermiParams) -> tuple[float, float]:
	half = FERMI_WINDOW * p.temperature
	return p.mu - half, p.mu + half


def _panel_quadrature(
	p: FermiParams, breakpoints: np.ndarray, pieces_per_T: int = 4, order: int = 16
) -> tuple[np.ndarray, np.ndarray]:
	"""
	Gauss-Legendre integrals of (-f)' over the panels between consecutive breakpoints
	inside the Fermi window. Panels are cut into pieces no wider than T / pieces_per_T.
	"""
	lo, hi = _fermi_window(p)
	inner = np.asarray(breakpoints, dtype=float)
	inner = inner[(inner > lo) & (inner < hi)]
	points = np.unique(np.concatenate([[lo, hi], inner]))
	nodes, weights = np.polynomial.legendre.leggauss(order)
	step = p.temperature / pieces_per_T
	panel_mass = np.empty(points.size - 1)
	for j, (a, b) in enumerate(zip(points[:-1], points[1:])):
		pieces = max(1, int(math.ceil((b - a) / step)))
		cuts = np.linspace(a, b, pieces + 1)
		half = 0.5 * np.diff(cuts)
		mid = 0.5 * (cuts[:-1] + cuts[1:])
		s = mid[:, None] + half[:, None] * nodes[None, :]
		panel_mass[j] = float(np.sum(half[:, None] * weights[None, :] * fermi_derivative_weight(s, p)))
	return points, panel_mass


def fermi_reconstruction_check(p: FermiParams, t_grid: np.ndarray, pieces_per_T: int = 4) -> float:
	"""max_t |f(t) - integral ds (-f)'(s) 1[t <= s]| with the panel quadrature."""
	if p.temperature <= 0.0:
		raise DomainError("reconstruction needs T > 0")
	t_grid = np.asarray(t_grid, dtype=float)
	points, panel_mass = _panel_quadrature(p, t_grid, pieces_per_T)
	# mass of the panels lying to the right of each point
	right_mass = np.concatenate([np.cumsum(panel_mass[::-1])[::-1], [0.0]])
	position = np.clip(np.searchsorted(points, t_grid, side="left"), 0, points.size - 1)
	reconstructed = right_mass[position]
	return float(np.max(np.abs(reconstructed - fermi(t_grid, p))))


@dataclass(frozen=True)
class ConvolutionReport:
	max_discrepancy: float
	refinement_change: float
	under_resolved: bool
	edges: np.ndarray
	direct: np.ndarray
	convolved: np.ndarray
	atom: float
	meta: dict[str, Any] = field(default_factory=dict)


def _convolved_gamma(
	phi: PairMeasure, p: FermiParams, edges: np.ndarray, pieces_per_T: int
) -> np.ndarray:
	off = ~phi.kernel_mask()
	nu = phi.frequencies()[off]
	low = np.minimum.outer(phi.energies, phi.energies)[off]
	high = np.maximum.outer(phi.energies, phi.energies)[off]
	# Gamma at T=0 and Fermi level E: pi * Phi / |nu| on pairs with low <= E < high
	weights = math.pi * phi.weights[off] / np.abs(nu)
	idx = bin_indices(nu, edges)
	inside = idx >= 0
	nu, low, high, weights, idx = nu[inside], low[inside], high[inside], weights[inside], idx[inside]

	points, panel_mass = _panel_quadrature(p, phi.energies, pieces_per_T)
	spectrum_lo, spectrum_hi = phi.energies[0], phi.energies[-1]
	result = np.zeros(edges.size - 1)
	for a, b, q in zip(points[:-1], points[1:], panel_mass):
		mid = 0.5 * (a + b)
		if mid < spectrum_lo or mid >= spectrum_hi:
			continue
		straddle = (low <= mid) & (mid < high)
		result += q * np.bincount(idx[straddle], weights=weights[straddle], minlength=edges.size - 1)
	return result


def convolution_check(
	eig: EigenSystem,
	velocity: SiteOperator,
	p: FermiParams,
	edges: Optional[np.ndarray] = None,
	pieces_per_T: int = 4,
	tolerance: float = 1e-6,
) -> ConvolutionReport:
	"""
	Gamma_mu^T(B) against integral dE (-f_mu^T)'(E) Gamma_E^0(B), bin by bin. Gamma_E^0 is
	piecewise constant in E with jumps at the eigenvalues, which are therefore panel ends.
	"""
	if p.temperature <= 0.0:
		raise DomainError("the convolution identity is stated for T > 0")
	phi = phi_measure(eig, velocity)
	if edges is None:
		edges = BinningSpec(bins=DEFAULT_BINS).edges(eig.spectral_width)
	edges = np.asarray(edges, dtype=float)

	direct = gamma_measure(phi, p).histogram(edges)
	coarse = _convolved_gamma(phi, p, edges, pieces_per_T)
	fine = _convolved_gamma(phi, p, edges, 2 * pieces_per_T)
	refinement_change = float(np.max(np.abs(fine - coarse)))
	under_resolved = refinement_change > 0.1 * tolerance
	if under_resolved:
		logger.warning(
			"Convolution quadrature under-resolved: halving the step moved bins by %.3e", refinement_change
		)
	atom = atom_weight(psi_from_phi(phi), p)
	return ConvolutionReport(
		max_discrepancy=float(np.max(np.abs(direct - fine))),
		refinement_change=refinement_change,
		under_resolved=under_resolved,
		edges=edges,
		direct=direct,
		convolved=fine,
		atom=atom,
		meta=_meta(eig, p),
	)


def stieltjes_transform(measure: SpectralMeasure, eta: float, nu):
	"""sigma(eta, nu) = (i/pi) [atom / (nu + i eta) + sum_k w_k / (nu_k + nu + i eta)]."""
	if eta <= 0.0:
		raise DomainError("the Stieltjes transform needs eta > 0")
	nu = np.asarray(nu, dtype=float)
	grid = np.atleast_1d(nu)
	total = np.zeros(grid.shape, dtype=complex)
	if measure.atom_at_zero:
		total += measure.atom_at_zero / (grid + 1j * eta)
	chunk = max(1, _CHUNK_ELEMENTS // max(grid.size, 1))
	for start in range(0, measure.locations.size, chunk):
		locations = measure.locations[start : start + chunk]
		weights = measure.weights[start : start + chunk]
		total += (weights[None, :] / (locations[None, :] + grid[:, None] + 1j * eta)).sum(axis=1)
	result = 1j / math.pi * total
	return result if nu.ndim else complex(result[0])


@dataclass(frozen=True)
class DcConductivity:
	regular: float
	atom_part: float
	eta: float


def dc_conductivity(measure: SpectralMeasure, eta: float) -> DcConductivity:
	"""pi Re sigma(eta, 0), split into the point-mass part and atom / eta."""
	points = SpectralMeasure(0.0, measure.locations, measure.weights, measure.even)
	regular = math.pi * float(np.real(stieltjes_transform(points, eta, 0.0)))
	return DcConductivity(regular=regular, atom_part=measure.atom_at_zero / eta, eta=eta)
