import logging
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy import linalg, special

from .errors import DomainError, InputError, NumericalError
from .lattice import HamiltonianRealization
from .measures import SpectralMeasure
from .models import FermiParams

logger = logging.getLogger("kubolab.spectral")

TOL_EIG = 1e-10
DEGENERACY_FACTOR = 1e-9


@dataclass(frozen=True)
class EigenSystem:
	eigenvalues: np.ndarray
	eigenvectors: np.ndarray
	meta: dict[str, Any] = field(default_factory=dict)

	@property
	def size(self) -> int:
		return int(self.eigenvalues.size)

	@property
	def spectral_width(self) -> float:
		return float(self.eigenvalues[-1] - self.eigenvalues[0]) if self.size else 0.0

	@property
	def degeneracy_tol(self) -> float:
		"""Eigenvalues closer than this are treated as equal."""
		return DEGENERACY_FACTOR * max(self.spectral_width, 1.0)

	def clusters(self) -> list[np.ndarray]:
		"""Index groups of numerically degenerate eigenvalues (size > 1 only)."""
		gaps = np.diff(self.eigenvalues)
		breaks = np.flatnonzero(gaps > self.degeneracy_tol) + 1
		groups = np.split(np.arange(self.size), breaks)
		return [g for g in groups if g.size > 1]

	def to_eigenbasis(self, matrix: np.ndarray) -> np.ndarray:
		return self.eigenvectors.conj().T @ matrix @ self.eigenvectors


def diagonalize(h: HamiltonianRealization) -> EigenSystem:
	matrix = h.matrix
	try:
		eigenvalues, eigenvectors = linalg.eigh(matrix)
	except (linalg.LinAlgError, ValueError) as e:
		logger.error("Eigensolver failed for realization %s: %s", h.realization_index, e)
		raise NumericalError(f"eigensolver failure: {e}", meta=h.meta) from e

	scale = max(float(np.max(np.abs(eigenvalues))), 1.0)
	residual = float(np.max(np.abs(matrix @ eigenvectors - eigenvectors * eigenvalues)))
	overlap = float(np.max(np.abs(eigenvectors.T @ eigenvectors - np.eye(eigenvalues.size))))
	if residual > TOL_EIG * scale or overlap > TOL_EIG:
		raise NumericalError(
			f"eigen decomposition outside tolerance (residual={residual:.3e}, overlap={overlap:.3e})",
			meta=h.meta,
		)
	logger.debug("Diagonalized N=%s, residual=%.2e", eigenvalues.size, residual)
	return EigenSystem(eigenvalues, eigenvectors, meta=h.meta)


def fermi(energy, p: FermiParams):
	"""Fermi function; the T=0 branch is the indicator of ]-inf, mu]."""
	energy = np.asarray(energy, dtype=float)
	if p.temperature == 0.0:
		result = np.where(energy <= p.mu, 1.0, 0.0)
	else:
		# expit only exponentiates non-positive arguments
		result = special.expit(-(energy - p.mu) / p.temperature)
	return result if result.ndim else float(result)


def fermi_derivative_weight(energy, p: FermiParams):
	"""(-f)'(E) = 1 / (4T cosh^2((E - mu) / 2T)), written as expit(x) expit(-x) / T."""
	if p.temperature <= 0.0:
		raise DomainError("the Fermi derivative weight needs T > 0")
	x = (np.asarray(energy, dtype=float) - p.mu) / p.temperature
	result = special.expit(x) * special.expit(-x) / p.temperature
	return result if result.ndim else float(result)


def function_matrix(eig: EigenSystem, g: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
	"""g(H) in the site basis."""
	values = np.asarray(g(eig.eigenvalues))
	return (eig.eigenvectors * values) @ eig.eigenvectors.conj().T


def apply_function_of_H(eig: EigenSystem, g: Callable[[np.ndarray], np.ndarray], vector: np.ndarray) -> np.ndarray:
	vector = np.asarray(vector)
	if vector.shape[0] != eig.size:
		raise InputError(f"vector has length {vector.shape[0]}, expected {eig.size}")
	coefficients = eig.eigenvectors.conj().T @ vector
	values = np.asarray(g(eig.eigenvalues))
	if vector.ndim > 1:
		values = values[:, None]
	return eig.eigenvectors @ (values * coefficients)


def dos_measure(eig: EigenSystem) -> SpectralMeasure:
	"""Weight 1/N at each eigenvalue."""
	weights = np.full(eig.size, 1.0 / eig.size)
	return SpectralMeasure(0.0, eig.eigenvalues, weights, meta={"kind": "dos", **eig.meta})
