"""
Per-realization work. Every task maps (config, realization index) to a plain dict of
named series (one value per axis point) and named scalars, which is what the ensemble
accumulates and what lands in units/NNNN.json.
"""
import logging
from typing import Any, Callable

import numpy as np

from .config import RunConfig
from .diagnostics import axis_sites, fermi_kernel_profile, mott_scaling, y_norm
from .errors import ConfigurationError
from .kubo import dc_conductivity, phi_measure, psi_from_phi, sigma_decomposition
from .lattice import build_realization, derive_seed, hopping_velocity, position_operator, velocity_operator
from .models import FermiParams
from .response import adiabatic_current, default_nu_grid, in_phase_current
from .spectral import EigenSystem, diagonalize, dos_measure, fermi, function_matrix

logger = logging.getLogger("kubolab.tasks")

UnitResult = dict[str, Any]


VELOCITY_TASKS = ("dos", "phi", "sigma", "sweep", "current", "diag-mott")


def check_velocity_boundary(config: RunConfig) -> None:
	"""Disordered runs need a globally defined X1, which the torus lacks; the torus serves the free case."""
	if config.task in VELOCITY_TASKS and config.lattice.boundary == "periodic" and config.disorder.strength > 0.0:
		raise ConfigurationError(
			f"task {config.task} on a periodic lattice needs lambda=0; use a dirichlet box for disordered runs",
			field="lattice.boundary",
		)


def velocity_for(config: RunConfig, h):
	"""i[H, X1] on a dirichlet box, the translation-invariant hopping form on the free torus."""
	if config.lattice.boundary == "periodic":
		check_velocity_boundary(config)
		return hopping_velocity(config.lattice)
	return velocity_operator(h, position_operator(config.lattice))


def energy_edges(config: RunConfig) -> np.ndarray:
	return config.binning.edges(config.energy_half_width)


def frequency_edges(config: RunConfig) -> np.ndarray:
	return config.binning.edges(config.frequency_half_width)


def _centers(edges: np.ndarray) -> np.ndarray:
	return 0.5 * (edges[:-1] + edges[1:])


def _realize(config: RunConfig, index: int) -> tuple[Any, EigenSystem]:
	h = build_realization(config.lattice, config.disorder, index)
	return h, diagonalize(h)


def _sigma_values(config: RunConfig, eig: EigenSystem, velocity, p: FermiParams, edges: np.ndarray, phi=None):
	decomposition = sigma_decomposition(eig, velocity, p, bandwidth_factor=config.bandwidth_factor, phi=phi)
	sigma = decomposition.sigma
	scalars = {
		"atom": sigma.atom_at_zero,
		"gamma_mass": decomposition.gamma.total_mass,
		"total_mass": sigma.total_mass,
		"outside_mass": sigma.outside_mass(edges),
	}
	if p.temperature == 0.0:
		scalars["bandwidth"] = decomposition.bandwidth
	for eta in config.dc_eta:
		scalars[f"dc[{eta:g}]"] = dc_conductivity(sigma, eta).regular
	return decomposition, sigma.histogram(edges), scalars


def dos_unit(config: RunConfig, index: int) -> UnitResult:
	h, eig = _realize(config, index)
	edges = energy_edges(config)
	widths = np.diff(edges)
	psi = psi_from_phi(phi_measure(eig, velocity_for(config, h)))
	dos = dos_measure(eig)
	return {
		"series": {
			"dos": dos.histogram(edges) / widths,
			"psi": psi.histogram(edges) / widths,
		},
		"scalars": {"dos_mass": dos.total_mass, "psi_mass": psi.total_mass},
	}


def phi_unit(config: RunConfig, index: int) -> UnitResult:
	h, eig = _realize(config, index)
	edges = energy_edges(config)
	phi = phi_measure(eig, velocity_for(config, h))
	marginal = phi.marginal(axis=0)
	return {
		"series": {"phi_marginal": marginal.histogram(edges) / np.diff(edges)},
		"scalars": {"phi_mass": phi.total_mass},
	}


def sigma_unit(config: RunConfig, index: int) -> UnitResult:
	h, eig = _realize(config, index)
	edges = frequency_edges(config)
	_, masses, scalars = _sigma_values(config, eig, velocity_for(config, h), config.fermi, edges)
	return {"series": {"sigma": masses}, "scalars": scalars}


def sweep_unit(config: RunConfig, index: int) -> UnitResult:
	"""Every (mu, T) grid point on the same realization, sharing one Phi."""
	h, eig = _realize(config, index)
	edges = frequency_edges(config)
	velocity = velocity_for(config, h)
	series: dict[str, np.ndarray] = {}
	scalars: dict[str, float] = {}
	phi = None
	for j, p in enumerate(config.sweep_points()):
		decomposition, masses, point_scalars = _sigma_values(config, eig, velocity, p, edges, phi=phi)
		phi = decomposition.phi
		series[f"sigma@{j}"] = masses
		for name, value in point_scalars.items():
			scalars[f"{name}@{j}"] = value
		for k, (lo, hi) in enumerate(config.sweep.select_bins):
			scalars[f"bin{k}@{j}"] = decomposition.gamma.mass_in(lo, hi)
	return {"series": series, "scalars": scalars}


def current_unit(config: RunConfig, index: int) -> UnitResult:
	h, eig = _realize(config, index)
	sigma = sigma_decomposition(eig, velocity_for(config, h), config.fermi, bandwidth_factor=config.bandwidth_factor).sigma
	spec = config.current
	times = spec.times.values()
	if spec.eta is None:
		trace = in_phase_current(sigma, spec.field, times)
	else:
		nu_grid = default_nu_grid(spec.field, spec.nu_nodes)
		trace = adiabatic_current(sigma, spec.field, spec.eta, times, nu_grid=nu_grid, in_phase=spec.in_phase)
	return {
		"series": {"current": trace.values, "current_imag": trace.imag_values},
		"scalars": {"imag_residual": trace.imag_residual},
	}


def decay_unit(config: RunConfig, index: int) -> UnitResult:
	_, eig = _realize(config, index)
	left, right = fermi_kernel_profile(eig, config.lattice, np.asarray(config.diagnostics.mu_grid()))
	return {"series": {"decay": 0.5 * (left + right), "decay_left": left, "decay_right": right}, "scalars": {}}


def ynorm_unit(config: RunConfig, index: int) -> UnitResult:
	_, eig = _realize(config, index)
	return {"series": {}, "scalars": {"y_norm": y_norm(eig, config.lattice, config.fermi)}}


def mott_unit(config: RunConfig, index: int) -> UnitResult:
	h, eig = _realize(config, index)
	p = FermiParams(mu=config.fermi.mu, T=0.0)
	sigma = sigma_decomposition(eig, velocity_for(config, h), p, bandwidth_factor=config.bandwidth_factor).sigma
	rows = mott_scaling([sigma], config.diagnostics.nu_grid, config.lattice.d)
	return {"series": {"low_mass": np.array([row.low_mass for row in rows])}, "scalars": {}}


def tuv_unit(config: RunConfig, index: int) -> UnitResult:
	"""Center-site value of f(H) against the two volume averages, which agree identically."""
	_, eig = _realize(config, index)
	f_matrix = function_matrix(eig, lambda e: fermi(e, config.fermi))
	diagonal = np.real(np.diag(f_matrix))
	# (1/N) tr f(H) summed over eigenvalues, the site average summed over the diagonal
	volume_trace = float(np.sum(fermi(eig.eigenvalues, config.fermi))) / eig.size
	site_average = float(np.mean(diagonal))
	return {
		"series": {},
		"scalars": {
			"center": float(diagonal[config.lattice.center_index]),
			"volume_trace": volume_trace,
			"site_average": site_average,
			"trace_gap": abs(volume_trace - site_average),
		},
	}


TASKS: dict[str, Callable[[RunConfig, int], UnitResult]] = {
	"dos": dos_unit,
	"phi": phi_unit,
	"sigma": sigma_unit,
	"sweep": sweep_unit,
	"current": current_unit,
	"diag-decay": decay_unit,
	"diag-ynorm": ynorm_unit,
	"diag-mott": mott_unit,
	"tuv": tuv_unit,
}


def series_axes(config: RunConfig) -> dict[str, dict[str, Any]]:
	"""Axis of every series a task emits: bin edges for measures, points otherwise."""
	task = config.task
	if task in ("dos", "phi"):
		edges = energy_edges(config)
		names = ["dos", "psi"] if task == "dos" else ["phi_marginal"]
		return {name: {"edges": edges, "axis": _centers(edges)} for name in names}
	if task == "sigma":
		edges = frequency_edges(config)
		return {"sigma": {"edges": edges, "axis": _centers(edges)}}
	if task == "sweep":
		edges = frequency_edges(config)
		return {f"sigma@{j}": {"edges": edges, "axis": _centers(edges)} for j in range(len(config.sweep_points()))}
	if task == "current":
		times = config.current.times.values()
		return {"current": {"axis": times}, "current_imag": {"axis": times}}
	if task == "diag-decay":
		left, _ = axis_sites(config.lattice)
		distances = np.arange(left.size, dtype=float)
		return {name: {"axis": distances} for name in ("decay", "decay_left", "decay_right")}
	if task == "diag-mott":
		return {"low_mass": {"axis": np.asarray(config.diagnostics.nu_grid, dtype=float)}}
	return {}


def run_unit(config: RunConfig, index: int) -> UnitResult:
	"""Entry point executed inside worker processes."""
	try:
		task = TASKS[config.task]
	except KeyError as e:
		raise ConfigurationError(f"unknown task '{config.task}'", field="task") from e
	result = task(config, index)
	logger.debug("Unit %s of task %s done", index, config.task)
	return {
		"index": index,
		"seed": derive_seed(config.disorder.master_seed, index),
		"series": {name: np.asarray(values, dtype=float).tolist() for name, values in result["series"].items()},
		"scalars": {name: float(value) for name, value in result["scalars"].items()},
	}
