"""
Finite-volume Anderson Hamiltonian H = A + lambda * diag(V) on a d-dimensional cube,
with A the adjacency matrix (the centered discrete Laplacian -Delta), the first
coordinate operator X1 and the velocity operator i[H, X1].
"""
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Any, Literal, Optional

import numpy as np
from dotenv import load_dotenv

from .errors import ConfigurationError, InputError
from .models import DiscreteDensity, DisorderSpec, LatticeSpec, UniformDensity

load_dotenv()

logger = logging.getLogger("kubolab.lattice")

MAX_SITES = int(os.getenv("KUBOLAB_MAX_SITES", "4000"))


@dataclass(frozen=True)
class HamiltonianRealization:
	lattice: LatticeSpec
	potential: np.ndarray
	matrix: np.ndarray
	strength: float
	realization_index: int = 0
	seed: Optional[int] = None

	@property
	def meta(self) -> dict[str, Any]:
		return {
			"d": self.lattice.d,
			"L": self.lattice.L,
			"boundary": self.lattice.boundary,
			"lambda": self.strength,
			"realization_index": self.realization_index,
			"seed": self.seed,
		}


@dataclass(frozen=True)
class SiteOperator:
	kind: Literal["position", "velocity"]
	matrix: np.ndarray
	lattice: LatticeSpec
	meta: dict[str, Any] = field(default_factory=dict)

	def apply(self, vector: np.ndarray) -> np.ndarray:
		return self.matrix @ vector


def realization_seed_sequence(master_seed: int, realization_index: int) -> np.random.SeedSequence:
	"""Independent stream per realization: spawn key = (realization_index,)."""
	if realization_index < 0:
		raise ConfigurationError("realization index must be non-negative", field="realization_index")
	return np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(realization_index),))


def derive_seed(master_seed: int, realization_index: int) -> int:
	state = realization_seed_sequence(master_seed, realization_index).generate_state(1, dtype=np.uint64)
	return int(state[0])


def _check_density(spec: DisorderSpec) -> None:
	density = spec.density
	if isinstance(density, UniformDensity):
		if not density.width > 0.0:
			raise ConfigurationError("uniform width W must be positive", field="disorder.density.W")
	elif isinstance(density, DiscreteDensity):
		probabilities = np.asarray(density.probabilities, dtype=float)
		if len(density.values) != probabilities.size or probabilities.size == 0:
			raise ConfigurationError(
				"values and probabilities must be non-empty and of equal length",
				field="disorder.density.probabilities",
			)
		if probabilities.min() < 0.0 or abs(math.fsum(probabilities) - 1.0) > 1e-9:
			raise ConfigurationError(
				"probabilities must be non-negative and sum to 1", field="disorder.density.probabilities"
			)
	else:
		raise ConfigurationError(f"unsupported density {density!r}", field="disorder.density")


def sample_potential(spec: DisorderSpec, lattice: LatticeSpec, realization_index: int) -> np.ndarray:
	"""
	N i.i.d. draws from the single-site density. The generator is Philox keyed by
	(master_seed, realization_index), so the draw does not depend on execution order.
	"""
	_check_density(spec)
	rng = np.random.Generator(np.random.Philox(realization_seed_sequence(spec.master_seed, realization_index)))
	n = lattice.n_sites
	density = spec.density
	if isinstance(density, UniformDensity):
		half = 0.5 * density.width
		return rng.uniform(-half, half, size=n)
	values = np.asarray(density.values, dtype=float)
	probabilities = np.asarray(density.probabilities, dtype=float)
	return rng.choice(values, size=n, p=probabilities / probabilities.sum())


def adjacency_matrix(lattice: LatticeSpec) -> np.ndarray:
	"""Nearest-neighbour adjacency; Dirichlet drops bonds leaving the box."""
	n = lattice.n_sites
	coords = lattice.coordinates()
	matrix = np.zeros((n, n))
	sites = np.arange(n)
	for axis in range(lattice.d):
		shifted = coords.copy()
		shifted[:, axis] += 1
		if lattice.boundary == "periodic":
			shifted[:, axis] %= lattice.L
			inside = np.ones(n, dtype=bool)
		else:
			inside = shifted[:, axis] < lattice.L
		neighbours = np.ravel_multi_index(tuple(shifted[inside].T), lattice.shape)
		matrix[sites[inside], neighbours] = 1.0
		matrix[neighbours, sites[inside]] = 1.0
	return matrix


def assemble_hamiltonian(
	lattice: LatticeSpec,
	potential: np.ndarray,
	strength: float,
	realization_index: int = 0,
	seed: Optional[int] = None,
	max_sites: Optional[int] = None,
) -> HamiltonianRealization:
	potential = np.asarray(potential, dtype=float)
	if potential.shape != (lattice.n_sites,):
		raise InputError(f"potential has shape {potential.shape}, expected ({lattice.n_sites},)")
	limit = MAX_SITES if max_sites is None else max_sites
	if lattice.n_sites > limit:
		raise ConfigurationError(
			f"{lattice.n_sites} sites exceed the dense eigensolver guard of {limit}"
			" (raise KUBOLAB_MAX_SITES to override)",
			field="lattice.L",
		)
	matrix = adjacency_matrix(lattice)
	matrix[np.diag_indices_from(matrix)] = strength * potential
	return HamiltonianRealization(
		lattice=lattice,
		potential=potential,
		matrix=matrix,
		strength=float(strength),
		realization_index=realization_index,
		seed=seed,
	)


def build_realization(lattice: LatticeSpec, disorder: DisorderSpec, realization_index: int) -> HamiltonianRealization:
	potential = sample_potential(disorder, lattice, realization_index)
	logger.debug("Sampled potential for realization %s (N=%s)", realization_index, lattice.n_sites)
	return assemble_hamiltonian(
		lattice,
		potential,
		disorder.strength,
		realization_index=realization_index,
		seed=derive_seed(disorder.master_seed, realization_index),
	)


def position_operator(lattice: LatticeSpec, offset: Optional[float] = None) -> SiteOperator:
	"""X1 as the diagonal of centered first coordinates x1 - floor(L/2)."""
	shift = lattice.origin if offset is None else offset
	x1 = lattice.coordinates()[:, 0] - shift
	return SiteOperator("position", np.diag(x1.astype(float)), lattice, {"offset": shift})


def velocity_operator(h: HamiltonianRealization, x1: SiteOperator) -> SiteOperator:
	"""i[H, X1], entrywise i * H[x, y] * (y1 - x1)."""
	if h.lattice.boundary != "dirichlet":
		raise InputError("commutator velocity needs a dirichlet box; use hopping_velocity on the torus")
	if x1.matrix.shape != h.matrix.shape:
		raise InputError("position operator and Hamiltonian have different dimensions")
	positions = np.diag(x1.matrix)
	matrix = 1j * h.matrix * (positions[None, :] - positions[:, None])
	return SiteOperator("velocity", matrix, h.lattice, {"form": "commutator", **h.meta})


def hopping_velocity(lattice: LatticeSpec) -> SiteOperator:
	"""+i on (x, x + e1) and -i on (x + e1, x), seam bond included on the torus."""
	n = lattice.n_sites
	coords = lattice.coordinates()
	shifted = coords.copy()
	shifted[:, 0] += 1
	if lattice.boundary == "periodic":
		shifted[:, 0] %= lattice.L
		inside = np.ones(n, dtype=bool)
	else:
		inside = shifted[:, 0] < lattice.L
	sites = np.arange(n)[inside]
	neighbours = np.ravel_multi_index(tuple(shifted[inside].T), lattice.shape)
	matrix = np.zeros((n, n), dtype=complex)
	matrix[sites, neighbours] = 1j
	matrix[neighbours, sites] = -1j
	return SiteOperator("velocity", matrix, lattice, {"form": "hopping"})
