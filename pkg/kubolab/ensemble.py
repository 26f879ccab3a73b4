"""
Disorder averages over independent realizations.

Work units run in a process pool (spawned, one BLAS thread each) and are reduced in
realization-index order, so the estimate does not depend on the worker count or on
the order in which units finish.
"""
import contextlib
import logging
import math
import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterator, Optional, Union

import numpy as np

from . import storage
from .config import ARTIFACT_VERSION, DEFAULT_THREADS, RunConfig, check_desk_scale, config_hash
from .errors import ConfigurationError, DomainError, InputError, PartialResultError
from .lattice import MAX_SITES, derive_seed
from .logging_config import run_log, worker_logging
from .models import FermiParams
from .spectral import fermi
from .tasks import check_velocity_boundary, run_unit, series_axes

logger = logging.getLogger("kubolab.ensemble")

_BLAS_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


@dataclass(frozen=True)
class WorkUnit:
	index: int
	seed: int


def plan(config: RunConfig) -> list[WorkUnit]:
	if config.realizations < 1:
		raise ConfigurationError("at least one realization is required", field="realizations")
	return [WorkUnit(i, derive_seed(config.disorder.master_seed, i)) for i in range(config.realizations)]


class Accumulator:
	"""Streaming count, mean and sum of squared deviations (M2), elementwise."""

	def __init__(self, shape: tuple[int, ...] = ()) -> None:
		self.count = 0
		self.mean = np.zeros(shape)
		self.m2 = np.zeros(shape)

	def add(self, values) -> None:
		values = np.asarray(values, dtype=float)
		self.count += 1
		delta = values - self.mean
		self.mean = self.mean + delta / self.count
		self.m2 = self.m2 + delta * (values - self.mean)

	def merge(self, other: "Accumulator") -> "Accumulator":
		merged = Accumulator(self.mean.shape)
		merged.count = self.count + other.count
		if merged.count == 0:
			return merged
		delta = other.mean - self.mean
		merged.mean = self.mean + delta * (other.count / merged.count)
		merged.m2 = self.m2 + other.m2 + delta**2 * (self.count * other.count / merged.count)
		return merged

	@property
	def stderr_defined(self) -> bool:
		return self.count > 1

	@property
	def stderr(self) -> np.ndarray:
		"""sqrt(M2 / (n (n - 1))); zero while undefined (n < 2)."""
		if not self.stderr_defined:
			return np.zeros_like(self.mean)
		return np.sqrt(np.maximum(self.m2, 0.0) / (self.count * (self.count - 1)))


@dataclass(frozen=True)
class SeriesEstimate:
	axis: np.ndarray
	mean: np.ndarray
	stderr: np.ndarray
	edges: Optional[np.ndarray] = None

	def to_dict(self) -> dict[str, Any]:
		data = {"axis": self.axis, "mean": self.mean, "stderr": self.stderr}
		if self.edges is not None:
			data["edges"] = self.edges
		return data


@dataclass(frozen=True)
class ScalarEstimate:
	mean: float
	stderr: float


@dataclass(frozen=True)
class EnsembleEstimate:
	task: str
	series: dict[str, SeriesEstimate]
	scalars: dict[str, ScalarEstimate]
	n_realizations: int
	stderr_defined: bool
	meta: dict[str, Any] = field(default_factory=dict)

	def to_dict(self) -> dict[str, Any]:
		return {
			"task": self.task,
			"n_realizations": self.n_realizations,
			"stderr_defined": self.stderr_defined,
			"meta": dict(self.meta),
			"series": {name: s.to_dict() for name, s in self.series.items()},
			"scalars": {name: {"mean": s.mean, "stderr": s.stderr} for name, s in self.scalars.items()},
		}


@contextlib.contextmanager
def _single_threaded_blas() -> Iterator[None]:
	"""Spawned workers inherit the environment, so BLAS starts with one thread there."""
	saved = {name: os.environ.get(name) for name in _BLAS_THREAD_VARS}
	try:
		for name in _BLAS_THREAD_VARS:
			os.environ[name] = "1"
		yield
	finally:
		for name, value in saved.items():
			if value is None:
				os.environ.pop(name, None)
			else:
				os.environ[name] = value


def _execute(
	config: RunConfig, units: list[WorkUnit], workers: int, run_dir: Optional[Path]
) -> tuple[dict[int, dict[str, Any]], list[int]]:
	results: dict[int, dict[str, Any]] = {}
	failed: list[int] = []
	if not units:
		return results, failed
	context = multiprocessing.get_context("spawn")
	level = logging.getLogger().getEffectiveLevel()
	with _single_threaded_blas(), ProcessPoolExecutor(
		max_workers=workers, mp_context=context, initializer=worker_logging, initargs=(level,)
	) as pool:
		futures = {pool.submit(run_unit, config, unit.index): unit for unit in units}
		for future in as_completed(futures):
			unit = futures[future]
			try:
				result = future.result()
			except (ConfigurationError, InputError, DomainError):
				# the same bad input fails every unit
				for pending in futures:
					pending.cancel()
				raise
			except Exception as e:
				logger.error("Realization %s failed: %s", unit.index, e)
				failed.append(unit.index)
				continue
			results[unit.index] = result
			if run_dir is not None:
				storage.save_unit(run_dir, result)
	return results, failed


def reduce_units(config: RunConfig, units: dict[int, dict[str, Any]]) -> EnsembleEstimate:
	"""Single-threaded reduction over the completed units in index order."""
	series_acc: dict[str, Accumulator] = {}
	scalar_acc: dict[str, Accumulator] = {}
	for index in sorted(units):
		unit = units[index]
		for name, values in unit["series"].items():
			series_acc.setdefault(name, Accumulator(np.shape(values))).add(values)
		for name, value in unit["scalars"].items():
			scalar_acc.setdefault(name, Accumulator()).add(value)

	axes = series_axes(config)
	series = {}
	for name, acc in series_acc.items():
		axis = axes.get(name, {})
		series[name] = SeriesEstimate(
			axis=np.asarray(axis.get("axis", np.arange(acc.mean.size, dtype=float))),
			mean=acc.mean,
			stderr=acc.stderr,
			edges=axis.get("edges"),
		)
	scalars = {name: ScalarEstimate(float(acc.mean), float(acc.stderr)) for name, acc in scalar_acc.items()}
	n = len(units)
	if n == 1:
		logger.info("Single realization: standard errors are undefined and reported as 0")
	meta = {
		"config_hash": config_hash(config),
		"master_seed": config.disorder.master_seed,
		"artifact_version": ARTIFACT_VERSION,
		"created_at": datetime.now(timezone.utc).isoformat(),
		"lattice": config.lattice.model_dump(mode="json"),
		"fermi": config.fermi.model_dump(mode="json", by_alias=True),
	}
	bandwidths = [name for name in scalars if name.split("@")[0] == "bandwidth"]
	if bandwidths:
		# smoothing bandwidth of the T=0 atom, per realization
		meta["atom_bandwidth"] = {
			"rule": "factor * spectral_width * N^(-1/3)",
			"factor": config.bandwidth_factor,
			"mean": {name: scalars[name].mean for name in sorted(bandwidths)},
		}
	return EnsembleEstimate(
		task=config.task,
		series=series,
		scalars=scalars,
		n_realizations=n,
		stderr_defined=n > 1,
		meta=meta,
	)


def run(
	config: RunConfig,
	workers: Optional[int] = None,
	run_dir: Optional[Union[str, Path]] = None,
	resume: bool = False,
) -> EnsembleEstimate:
	units = plan(config)
	workers = max(1, workers or DEFAULT_THREADS)
	if config.lattice.n_sites > MAX_SITES:
		raise ConfigurationError(
			f"N={config.lattice.n_sites} sites exceeds the dense-matrix guard {MAX_SITES}", field="lattice.L"
		)
	check_velocity_boundary(config)
	check_desk_scale(config)

	done: dict[int, dict[str, Any]] = {}
	if run_dir is not None:
		run_dir = storage.prepare_run_dir(Path(run_dir), config, resume=resume)
		if resume:
			done = {i: u for i, u in storage.load_units(run_dir).items() if i < config.realizations}
			logger.info("Resuming: %s of %s units already complete", len(done), len(units))
	pending = [unit for unit in units if unit.index not in done]

	with run_log(run_dir):
		logger.info(
			"Running task %s: %s realizations (%s pending) on %s workers",
			config.task,
			len(units),
			len(pending),
			workers,
		)
		results, failed = _execute(config, pending, workers, run_dir)
	if failed:
		raise PartialResultError(f"{len(failed)} of {len(units)} realizations failed", failed)
	results.update(done)
	estimate = reduce_units(config, results)
	if run_dir is not None:
		storage.save_result(run_dir, estimate)
		storage.save_result_csv(run_dir, estimate)
	return estimate


@dataclass(frozen=True)
class SweepResult:
	points: list[FermiParams]
	estimates: list[EnsembleEstimate]
	rows: list[dict[str, Any]]


def _point_estimate(estimate: EnsembleEstimate, j: int, p: FermiParams) -> EnsembleEstimate:
	suffix = f"@{j}"
	return EnsembleEstimate(
		task="sigma",
		series={"sigma": estimate.series[f"sigma{suffix}"]},
		scalars={k[: -len(suffix)]: v for k, v in estimate.scalars.items() if k.endswith(suffix)},
		n_realizations=estimate.n_realizations,
		stderr_defined=estimate.stderr_defined,
		meta={**estimate.meta, "fermi": p.model_dump(mode="json", by_alias=True)},
	)


def run_sweep(
	config: RunConfig,
	workers: Optional[int] = None,
	run_dir: Optional[Union[str, Path]] = None,
	resume: bool = False,
) -> SweepResult:
	"""One estimate per (mu, T) grid point, all computed on the same realizations."""
	if not (config.sweep.mu_grid or config.sweep.T_grid):
		raise ConfigurationError("sweep grids are empty", field="sweep.mu_grid")
	config = config.model_copy(update={"task": "sweep"})
	estimate = run(config, workers=workers, run_dir=run_dir, resume=resume)
	points = config.sweep_points()
	estimates = [_point_estimate(estimate, j, p) for j, p in enumerate(points)]
	rows = []
	for p, point in zip(points, estimates):
		row: dict[str, Any] = {"mu": p.mu, "T": p.temperature}
		for name in ("total_mass", "atom", "gamma_mass"):
			row[name] = point.scalars[name].mean
			row[f"{name}_stderr"] = point.scalars[name].stderr
		for k, (lo, hi) in enumerate(config.sweep.select_bins):
			row[f"gamma[{lo:g},{hi:g}]"] = point.scalars[f"bin{k}"].mean
			row[f"gamma[{lo:g},{hi:g}]_stderr"] = point.scalars[f"bin{k}"].stderr
		for eta in config.dc_eta:
			row[f"dc[{eta:g}]"] = point.scalars[f"dc[{eta:g}]"].mean
		rows.append(row)
	if run_dir is not None:
		storage.write_table_csv(Path(run_dir) / "sweep.csv", rows)
	return SweepResult(points, estimates, rows)


@dataclass(frozen=True)
class TraceRow:
	L: int
	center: float
	center_stderr: float
	volume_trace: float
	trace_gap: float
	fourier: Optional[float]


@dataclass(frozen=True)
class TraceConvergence:
	rows: list[TraceRow]
	meta: dict[str, Any]


def free_trace_per_volume(config: RunConfig, size: int) -> float:
	"""(1/N) tr f(-Delta) from the closed-form eigenvalues of the box or torus."""
	if config.lattice.boundary == "periodic":
		angles = 2.0 * math.pi * np.arange(size) / size
	else:
		angles = math.pi * np.arange(1, size + 1) / (size + 1)
	line = 2.0 * np.cos(angles)
	grids = np.meshgrid(*([line] * config.lattice.d), indexing="ij")
	energies = np.sum(grids, axis=0).ravel()
	return float(np.mean(fermi(energies, config.fermi)))


def trace_per_unit_volume_convergence(
	config: RunConfig, L_list: Optional[list[int]] = None, workers: Optional[int] = None
) -> TraceConvergence:
	"""Center-site value of f(H) against the volume average, per L; checked against Fourier when lambda = 0."""
	sizes = list(L_list if L_list is not None else config.diagnostics.L_list)
	free = config.disorder.strength == 0.0
	rows = []
	for size in sizes:
		lattice = config.lattice.model_copy(update={"L": size})
		estimate = run(config.model_copy(update={"task": "tuv", "lattice": lattice}), workers=workers)
		scalars = estimate.scalars
		rows.append(
			TraceRow(
				L=size,
				center=scalars["center"].mean,
				center_stderr=scalars["center"].stderr,
				volume_trace=scalars["volume_trace"].mean,
				trace_gap=scalars["trace_gap"].mean,
				fourier=free_trace_per_volume(config.model_copy(update={"lattice": lattice}), size) if free else None,
			)
		)
		logger.info("L=%s center %.8g volume %.8g", size, rows[-1].center, rows[-1].volume_trace)
	meta = {
		"L_list": sizes,
		"config_hash": config_hash(config),
		"master_seed": config.disorder.master_seed,
		"fermi": config.fermi.model_dump(mode="json", by_alias=True),
	}
	return TraceConvergence(rows, meta)
