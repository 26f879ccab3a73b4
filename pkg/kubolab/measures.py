"""
Finite positive measures on the line and on the plane, stored as weighted point masses.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
from scipy import stats

logger = logging.getLogger("kubolab.measures")


def bin_indices(points: np.ndarray, edges: np.ndarray) -> np.ndarray:
	"""
	Bin index of every point, -1 when outside the edges.
	Bins are closed on the side away from zero: (a, b] when a >= 0 and [a, b) when b <= 0,
	so a set of edges symmetric about zero maps nu and -nu to mirrored bins.
	"""
	points = np.asarray(points, dtype=float)
	edges = np.asarray(edges, dtype=float)
	right = np.searchsorted(edges, points, side="left") - 1
	left = np.searchsorted(edges, points, side="right") - 1
	idx = np.where(points > 0.0, right, left)
	nbins = edges.size - 1
	inside = (idx >= 0) & (idx < nbins)
	# the outermost edges themselves belong to the end bins
	inside |= (points == edges[0]) | (points == edges[-1])
	idx = np.clip(idx, 0, nbins - 1)
	return np.where(inside, idx, -1)


@dataclass(frozen=True)
class SpectralMeasure:
	atom_at_zero: float
	locations: np.ndarray
	weights: np.ndarray
	even: bool = False
	meta: dict[str, Any] = field(default_factory=dict)

	def __post_init__(self) -> None:
		locations = np.asarray(self.locations, dtype=float).ravel()
		weights = np.asarray(self.weights, dtype=float).ravel()
		if locations.shape != weights.shape:
			raise ValueError("locations and weights must have the same length")
		if self.atom_at_zero < 0.0 or (weights.size and weights.min() < 0.0):
			raise ValueError("measure weights must be non-negative")
		object.__setattr__(self, "locations", locations)
		object.__setattr__(self, "weights", weights)

	@classmethod
	def zero(cls, meta: Optional[dict[str, Any]] = None) -> "SpectralMeasure":
		return cls(0.0, np.empty(0), np.empty(0), even=True, meta=dict(meta or {}))

	@property
	def total_mass(self) -> float:
		return float(self.atom_at_zero + self.weights.sum())

	@property
	def point_mass(self) -> float:
		return float(self.weights.sum())

	def mass_in(self, lo: float, hi: float) -> float:
		"""Mass of the closed interval [lo, hi], atom included when 0 lies inside."""
		mask = (self.locations >= lo) & (self.locations <= hi)
		mass = float(self.weights[mask].sum())
		if lo <= 0.0 <= hi:
			mass += self.atom_at_zero
		return mass

	def integrate(self, g) -> float:
		"""Integral of a vectorised function g against the measure."""
		total = float(np.sum(self.weights * g(self.locations)))
		if self.atom_at_zero:
			total += self.atom_at_zero * float(g(np.zeros(1))[0])
		return total

	def histogram(self, edges: np.ndarray) -> np.ndarray:
		"""Point masses per bin; the atom at zero is kept out of the bins."""
		edges = np.asarray(edges, dtype=float)
		idx = bin_indices(self.locations, edges)
		keep = idx >= 0
		return np.bincount(idx[keep], weights=self.weights[keep], minlength=edges.size - 1)

	def outside_mass(self, edges: np.ndarray) -> float:
		idx = bin_indices(self.locations, edges)
		return float(self.weights[idx < 0].sum())

	def density(self, edges: np.ndarray) -> np.ndarray:
		return self.histogram(edges) / np.diff(edges)

	def smoothed_density(self, at: np.ndarray, bandwidth: float) -> np.ndarray:
		"""Gaussian kernel smoothing of the point masses."""
		at = np.atleast_1d(np.asarray(at, dtype=float))
		kernel = stats.norm.pdf(at[:, None], loc=self.locations[None, :], scale=bandwidth)
		return kernel @ self.weights

	def evenness_defect(self, edges: np.ndarray) -> float:
		"""max |M(B) - M(-B)| over the bins of a symmetric edge set."""
		edges = np.asarray(edges, dtype=float)
		if not np.allclose(edges, -edges[::-1], rtol=0.0, atol=1e-12 * max(1.0, np.abs(edges).max())):
			raise ValueError("evenness requires edges symmetric about zero")
		masses = self.histogram(edges)
		return float(np.max(np.abs(masses - masses[::-1]))) if masses.size else 0.0

	def scaled(self, factor: float) -> "SpectralMeasure":
		return SpectralMeasure(
			self.atom_at_zero * factor, self.locations, self.weights * factor, self.even, dict(self.meta)
		)

	def nonzero(self) -> "SpectralMeasure":
		keep = self.weights > 0.0
		return SpectralMeasure(
			self.atom_at_zero, self.locations[keep], self.weights[keep], self.even, dict(self.meta)
		)

	def __add__(self, other: "SpectralMeasure") -> "SpectralMeasure":
		return SpectralMeasure(
			self.atom_at_zero + other.atom_at_zero,
			np.concatenate([self.locations, other.locations]),
			np.concatenate([self.weights, other.weights]),
			self.even and other.even,
			{**other.meta, **self.meta},
		)


@dataclass(frozen=True)
class PairMeasure:
	"""
	Weighted point masses at (energies[n], energies[m]) for every ordered pair (n, m).
	weights is an N x N matrix, symmetric by construction.
	"""

	energies: np.ndarray
	weights: np.ndarray
	volume: int
	degeneracy_tol: float = 0.0
	meta: dict[str, Any] = field(default_factory=dict)

	def __post_init__(self) -> None:
		energies = np.asarray(self.energies, dtype=float)
		weights = np.asarray(self.weights, dtype=float)
		if weights.shape != (energies.size, energies.size):
			raise ValueError("pair weights must be a square matrix matching the energies")
		if weights.size and weights.min() < 0.0:
			raise ValueError("pair weights must be non-negative")
		object.__setattr__(self, "energies", energies)
		object.__setattr__(self, "weights", weights)

	def entries(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
		lam1 = np.repeat(self.energies, self.energies.size)
		lam2 = np.tile(self.energies, self.energies.size)
		return lam1, lam2, self.weights.ravel()

	@property
	def total_mass(self) -> float:
		return float(self.weights.sum())

	def frequencies(self) -> np.ndarray:
		"""nu = lambda1 - lambda2 for every pair, as an N x N matrix."""
		return self.energies[:, None] - self.energies[None, :]

	def kernel_mask(self) -> np.ndarray:
		"""Pairs treated as lying in the kernel of the Liouvillian."""
		return np.abs(self.frequencies()) <= self.degeneracy_tol

	def marginal(self, axis: int = 0) -> SpectralMeasure:
		weights = self.weights.sum(axis=1 - axis)
		return SpectralMeasure(0.0, self.energies, weights, meta=dict(self.meta))
