import logging

import numpy as np
import pytest

from kubolab.errors import InputError
from kubolab.kubo import sigma_decomposition, sigma_measure
from kubolab.lattice import build_realization, position_operator, velocity_operator
from kubolab.measures import SpectralMeasure
from kubolab.models import (
	DisorderSpec,
	FermiParams,
	GaussianField,
	LatticeSpec,
	LorentzianField,
	TabulatedField,
	UniformDensity,
)
from kubolab.spectral import diagonalize
from kubolab.response import (
	adiabatic_current,
	check_hermitian,
	default_nu_grid,
	in_phase_current,
	t_limit_current_check,
)


def _pair(atom: float = 0.0) -> SpectralMeasure:
	return SpectralMeasure(atom, np.array([-1.0, 1.0]), np.array([0.5, 0.5]), even=True)


def test_in_phase_current_of_a_pair() -> None:
	field = GaussianField(center=0.0, width=1.0)
	times = np.linspace(0.0, 6.0, 13)
	trace = in_phase_current(_pair(atom=0.2), field, times)
	expected = 0.2 + np.cos(times) * np.exp(-0.5)
	np.testing.assert_allclose(trace.values, expected, atol=1e-14)
	assert trace.imag_residual <= 1e-14
	assert trace.provenance["kind"] == "in_phase"


def test_current_of_an_even_measure_is_real(realization64) -> None:
	_, eig, _, velocity = realization64
	sigma = sigma_measure(eig, velocity, FermiParams(mu=0.0, T=0.1))
	trace = in_phase_current(sigma, GaussianField(center=0.5, width=0.4), np.linspace(0.0, 20.0, 41))
	assert trace.imag_residual <= 1e-10


def test_non_hermitian_field_rejected() -> None:
	field = TabulatedField(nu=[-1.0, 0.0, 1.0], real=[0.0, 1.0, 0.0], imag=[0.5, 0.5, 0.5])
	with pytest.raises(InputError):
		check_hermitian(field, np.array([0.5]))
	with pytest.raises(InputError):
		in_phase_current(_pair(), field, np.zeros(1))


def test_adiabatic_grid_must_cover_the_field() -> None:
	field = GaussianField(center=0.0, width=1.0)
	with pytest.raises(InputError):
		adiabatic_current(_pair(), field, 0.1, np.zeros(1), nu_grid=np.linspace(-1.0, 1.0, 101))
	with pytest.raises(InputError):
		adiabatic_current(_pair(), field, 0.1, np.zeros(1), nu_grid=np.zeros(1))


def test_lorentzian_grid_keeps_its_core_fine(caplog) -> None:
	field = LorentzianField(center=0.0, gamma=0.5)
	with caplog.at_level(logging.WARNING, logger="kubolab.response"):
		grid = default_nu_grid(field)
	assert not caplog.records
	assert np.all(np.diff(grid) > 0.0)
	np.testing.assert_allclose(grid, -grid[::-1], rtol=0.0, atol=1e-9 * grid[-1])
	assert np.max(np.diff(grid[np.abs(grid) <= 50.0])) <= field.gamma / 4.0
	assert field.tail_fraction(float(grid[0]), float(grid[-1])) <= 1e-6


def test_coarse_nu_grid_is_reported(caplog) -> None:
	with caplog.at_level(logging.WARNING, logger="kubolab.response"):
		default_nu_grid(LorentzianField(center=0.0, gamma=0.5), nodes=64)
	assert "coarse" in caplog.text
	caplog.clear()
	with caplog.at_level(logging.WARNING, logger="kubolab.response"):
		grid = default_nu_grid(GaussianField(center=0.0, width=1.0))
	assert not caplog.records
	assert grid.size == 8192


def test_adiabatic_current_approaches_the_in_phase_current() -> None:
	field = GaussianField(center=0.0, width=1.0)
	times = np.linspace(0.0, 3.0, 7)
	reference = in_phase_current(_pair(), field, times).values
	gaps = []
	for eta in (1.0, 0.3, 0.1, 0.03):
		current = adiabatic_current(_pair(), field, eta, times, nu_grid=default_nu_grid(field))
		gaps.append(float(np.max(np.abs(current.values - reference))))
	assert all(b <= a for a, b in zip(gaps, gaps[1:]))

	fine = adiabatic_current(_pair(), field, 1e-3, times, nu_grid=np.linspace(-8.0, 8.0, 200001))
	# within 1% of the size of the current
	assert np.max(np.abs(fine.values - reference)) <= 1e-2 * np.max(np.abs(reference))
	assert fine.provenance["eta"] == 1e-3


def test_zero_temperature_limit_of_the_current(realization64) -> None:
	_, eig, _, velocity = realization64
	energies = eig.eigenvalues
	inner = (energies[:-1] >= -1.0) & (energies[1:] <= 1.0)
	k = int(np.argmax(np.where(inner, np.diff(energies), 0.0)))
	mu = 0.5 * (energies[k] + energies[k + 1])
	field = GaussianField(center=0.0, width=1.0)
	rows = t_limit_current_check(
		eig, velocity, field, mu, [0.5, 0.2, 0.1, 0.05, 0.02, 0.005, 0.001], np.linspace(0.0, 10.0, 21)
	)
	mass = sigma_measure(eig, velocity, FermiParams(mu=mu, T=0.0)).total_mass
	assert rows[-1].sup_gap <= 1e-3 * max(1.0, mass)
	assert rows[-1].sup_gap < rows[0].sup_gap


def test_t_limit_needs_descending_positive_temperatures(realization64) -> None:
	_, eig, _, velocity = realization64
	field = GaussianField()
	with pytest.raises(InputError):
		t_limit_current_check(eig, velocity, field, 0.0, [0.1, 0.2], np.zeros(1))
	with pytest.raises(InputError):
		t_limit_current_check(eig, velocity, field, 0.0, [0.1, 0.0], np.zeros(1))


def _strong_disorder_chain():
	lattice = LatticeSpec(d=1, L=256)
	disorder = DisorderSpec(density=UniformDensity(W=1.0), strength=5.0, master_seed=1)
	h = build_realization(lattice, disorder, 0)
	return diagonalize(h), velocity_operator(h, position_operator(lattice))


@pytest.mark.slow
def test_strong_disorder_gamma_bin_at_mid_band_as_t_drops() -> None:
	eig, velocity = _strong_disorder_chain()
	zero = sigma_decomposition(eig, velocity, FermiParams(mu=0.0, T=0.0))
	target = zero.gamma.mass_in(0.5, 1.0)
	gaps = []
	for temperature in (0.5, 0.2, 0.1, 0.05, 0.02):
		finite = sigma_decomposition(eig, velocity, FermiParams(mu=0.0, T=temperature), phi=zero.phi)
		gaps.append(abs(finite.gamma.mass_in(0.5, 1.0) - target))
	# one chain of 256 sites: the Fermi window holds only a few levels, and the gaps are not monotone in T
	assert gaps[-1] < gaps[0]
	assert gaps[-1] <= 5e-3 * zero.sigma.total_mass


@pytest.mark.slow
def test_strong_disorder_gamma_bin_converges_as_t_drops() -> None:
	eig, velocity = _strong_disorder_chain()
	energies = eig.eigenvalues
	inner = (energies[:-1] >= -1.0) & (energies[1:] <= 1.0)
	k = int(np.argmax(np.where(inner, np.diff(energies), 0.0)))
	mu = 0.5 * (energies[k] + energies[k + 1])

	zero = sigma_decomposition(eig, velocity, FermiParams(mu=mu, T=0.0))
	target = zero.gamma.mass_in(0.5, 1.0)
	gaps = []
	for temperature in (0.5, 0.2, 0.1, 0.05, 0.02, 0.005):
		finite = sigma_decomposition(eig, velocity, FermiParams(mu=mu, T=temperature), phi=zero.phi)
		gaps.append(abs(finite.gamma.mass_in(0.5, 1.0) - target))
	assert gaps[-1] < gaps[0]
	assert gaps[-1] <= 1e-3 * zero.sigma.total_mass


def test_current_is_linear_in_measure_and_field(realization64) -> None:
	_, eig, _, velocity = realization64
	first = sigma_measure(eig, velocity, FermiParams(mu=0.0, T=0.1))
	second = sigma_measure(eig, velocity, FermiParams(mu=-0.7, T=0.0))
	times = np.linspace(0.0, 15.0, 31)
	field = GaussianField(center=0.4, width=0.6)

	combined = in_phase_current(first + second, field, times).values
	separate = in_phase_current(first, field, times).values + in_phase_current(second, field, times).values
	np.testing.assert_allclose(combined, separate, rtol=0.0, atol=1e-12)

	nu = np.linspace(-10.0, 10.0, 401)
	low = np.exp(-0.5 * nu**2)
	high = 0.3 * np.exp(-0.5 * (np.abs(nu) - 2.0) ** 2)
	zeros = np.zeros_like(nu)

	def tabulated(values):
		return TabulatedField(nu=nu.tolist(), real=values.tolist(), imag=zeros.tolist())

	summed = in_phase_current(first, tabulated(low + high), times).values
	parts = in_phase_current(first, tabulated(low), times).values + in_phase_current(first, tabulated(high), times).values
	np.testing.assert_allclose(summed, parts, rtol=0.0, atol=1e-12)


def test_current_is_bounded_by_mass_times_field(realization64) -> None:
	_, eig, _, velocity = realization64
	sigma = sigma_measure(eig, velocity, FermiParams(mu=0.2, T=0.0))
	field = GaussianField(center=0.8, width=0.3, amplitude=2.0)
	trace = in_phase_current(sigma, field, np.linspace(0.0, 40.0, 81))
	peak = max(float(np.max(np.abs(field.evaluate(sigma.locations)))), abs(complex(field.evaluate(np.zeros(1))[0])))
	assert np.max(np.abs(trace.values)) <= sigma.total_mass * peak * (1.0 + 1e-12)
