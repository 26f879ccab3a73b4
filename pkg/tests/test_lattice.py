import numpy as np
import pytest

from kubolab.errors import ConfigurationError, InputError
from kubolab.lattice import (
	adjacency_matrix,
	assemble_hamiltonian,
	build_realization,
	derive_seed,
	hopping_velocity,
	position_operator,
	sample_potential,
	velocity_operator,
)
from kubolab.models import DiscreteDensity, DisorderSpec, LatticeSpec, UniformDensity


def test_adjacency_boundaries() -> None:
	dirichlet = adjacency_matrix(LatticeSpec(d=1, L=4))
	periodic = adjacency_matrix(LatticeSpec(d=1, L=4, boundary="periodic"))
	assert dirichlet[0, 1] == 1.0 and dirichlet[0, 3] == 0.0
	assert periodic[0, 3] == 1.0
	assert dirichlet.sum(axis=1).tolist() == [1.0, 2.0, 2.0, 1.0]
	torus = adjacency_matrix(LatticeSpec(d=2, L=3, boundary="periodic"))
	assert np.all(torus.sum(axis=1) == 4.0)
	np.testing.assert_array_equal(torus, torus.T)


def test_assemble_hamiltonian_places_potential_on_diagonal() -> None:
	lattice = LatticeSpec(d=1, L=5)
	potential = np.array([0.1, -0.2, 0.3, 0.0, 0.5])
	h = assemble_hamiltonian(lattice, potential, 2.0)
	np.testing.assert_allclose(np.diag(h.matrix), 2.0 * potential)
	assert h.matrix[1, 2] == 1.0


def test_assemble_hamiltonian_guards() -> None:
	lattice = LatticeSpec(d=1, L=64)
	with pytest.raises(InputError):
		assemble_hamiltonian(lattice, np.zeros(10), 1.0)
	with pytest.raises(ConfigurationError) as e:
		assemble_hamiltonian(lattice, np.zeros(64), 1.0, max_sites=10)
	assert e.value.field == "lattice.L"


def test_potential_is_reproducible_per_index() -> None:
	lattice = LatticeSpec(d=1, L=32)
	spec = DisorderSpec(density=UniformDensity(W=2.0), strength=1.0, master_seed=11)
	first = sample_potential(spec, lattice, 3)
	np.testing.assert_array_equal(first, sample_potential(spec, lattice, 3))
	assert not np.array_equal(first, sample_potential(spec, lattice, 4))
	assert np.all(np.abs(first) <= 1.0)


def test_derived_seeds_are_distinct() -> None:
	seeds = [derive_seed(5, i) for i in range(4)]
	assert len(set(seeds)) == 4
	assert seeds == [derive_seed(5, i) for i in range(4)]


def test_discrete_potential_values() -> None:
	lattice = LatticeSpec(d=1, L=50)
	spec = DisorderSpec(density=DiscreteDensity(values=[-1.0, 1.0], probabilities=[0.5, 0.5]))
	assert set(sample_potential(spec, lattice, 0).tolist()) <= {-1.0, 1.0}


def test_position_operator_is_centered() -> None:
	x1 = position_operator(LatticeSpec(d=1, L=5))
	assert np.diag(x1.matrix).tolist() == [-2.0, -1.0, 0.0, 1.0, 2.0]
	x1_2d = position_operator(LatticeSpec(d=2, L=3))
	assert np.diag(x1_2d.matrix).tolist() == [-1.0] * 3 + [0.0] * 3 + [1.0] * 3


def test_velocity_is_the_commutator() -> None:
	lattice = LatticeSpec(d=2, L=4)
	h = build_realization(lattice, DisorderSpec(density=UniformDensity(W=1.0), strength=0.7), 0)
	x1 = position_operator(lattice)
	velocity = velocity_operator(h, x1)
	np.testing.assert_allclose(velocity.matrix, 1j * (h.matrix @ x1.matrix - x1.matrix @ h.matrix), atol=1e-14)
	np.testing.assert_allclose(velocity.matrix, velocity.matrix.conj().T)
	np.testing.assert_allclose(velocity.matrix, hopping_velocity(lattice).matrix, atol=1e-14)


def test_velocity_rejects_periodic_box() -> None:
	lattice = LatticeSpec(d=1, L=6, boundary="periodic")
	h = assemble_hamiltonian(lattice, np.zeros(6), 0.0)
	with pytest.raises(InputError):
		velocity_operator(h, position_operator(lattice))


def test_hopping_velocity_includes_the_seam() -> None:
	velocity = hopping_velocity(LatticeSpec(d=1, L=4, boundary="periodic")).matrix
	assert velocity[0, 1] == 1j and velocity[1, 0] == -1j
	assert velocity[3, 0] == 1j and velocity[0, 3] == -1j
	np.testing.assert_array_equal(velocity, velocity.conj().T)


def test_commutator_velocity_ignores_the_position_offset() -> None:
	lattice = LatticeSpec(d=2, L=5)
	h = build_realization(lattice, DisorderSpec(density=UniformDensity(W=2.0), strength=1.3, master_seed=2), 1)
	centered = velocity_operator(h, position_operator(lattice))
	for offset in (0.0, 3.7, -11.25):
		shifted = velocity_operator(h, position_operator(lattice, offset=offset))
		np.testing.assert_allclose(shifted.matrix, centered.matrix, rtol=0.0, atol=1e-13)


@pytest.mark.parametrize("d,L", [(1, 7), (2, 4), (3, 3)])
def test_hopping_velocity_commutes_with_the_torus_adjacency(d, L) -> None:
	lattice = LatticeSpec(d=d, L=L, boundary="periodic")
	a = adjacency_matrix(lattice)
	v = hopping_velocity(lattice).matrix
	assert np.max(np.abs(a @ v - v @ a)) == 0.0


def test_binomial_potential_has_zero_mean() -> None:
	lattice = LatticeSpec(d=2, L=100)
	spec = DisorderSpec(density=DiscreteDensity(values=[-1.0, 1.0], probabilities=[0.5, 0.5]), master_seed=17)
	potential = sample_potential(spec, lattice, 0)
	assert potential.size == 10_000
	# variance 1, so the standard error of the mean is 1 / sqrt(N)
	assert abs(potential.mean()) <= 5.0 / np.sqrt(potential.size)
