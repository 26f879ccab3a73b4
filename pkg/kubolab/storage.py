import csv
import json
import logging
from pathlib import Path
from typing import Any, Iterable, Optional

import numpy as np

from .config import RunConfig, canonical_json, config_hash
from .errors import ConfigurationError

logger = logging.getLogger("kubolab.storage")

UNITS_DIR = "units"
CONFIG_FILE = "config.json"
RESULT_JSON = "result.json"
RESULT_CSV = "result.csv"


def _unit_filename(index: int) -> str:
	"""
	Generate the checkpoint filename of one realization.
	Format: NNNN.json, zero padded to four digits (wider indices keep all their digits)
	"""
	return f"{index:04d}.json"


def jsonable(value: Any) -> Any:
	if isinstance(value, dict):
		return {str(k): jsonable(v) for k, v in value.items()}
	if isinstance(value, (list, tuple)):
		return [jsonable(v) for v in value]
	if isinstance(value, np.ndarray):
		return jsonable(value.tolist())
	if isinstance(value, np.generic):
		return value.item()
	if isinstance(value, float) and not np.isfinite(value):
		# JSON has no inf or nan
		return None
	return value


def dump_json(path: Path, data: Any) -> str:
	path = Path(path)
	path.parent.mkdir(parents=True, exist_ok=True)
	with open(path, "w", encoding="utf-8") as f:
		json.dump(jsonable(data), f, indent=2, ensure_ascii=False, sort_keys=True, allow_nan=False)
		f.write("\n")
	return str(path)


def load_json(path: Path) -> Optional[Any]:
	path = Path(path)
	if not path.exists():
		return None
	with open(path, "r", encoding="utf-8") as f:
		return json.load(f)


def write_csv(path: Path, header: list[str], rows: Iterable[Iterable[Any]]) -> str:
	path = Path(path)
	path.parent.mkdir(parents=True, exist_ok=True)
	with open(path, "w", encoding="utf-8", newline="") as f:
		writer = csv.writer(f, lineterminator="\n")
		writer.writerow(header)
		for row in rows:
			writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
	return str(path)


def write_table_csv(path: Path, rows: list[dict[str, Any]]) -> str:
	"""Rows of equal keys, columns in first-row order."""
	header = list(rows[0].keys()) if rows else []
	return write_csv(path, header, ([row[name] for name in header] for row in rows))


# run directory


def prepare_run_dir(run_dir: Path, config: RunConfig, resume: bool = False) -> Path:
	"""
	Create the run directory and write config.json. A directory that already holds
	completed units is only reused with resume, and only for the same config.
	"""
	run_dir = Path(run_dir)
	(run_dir / UNITS_DIR).mkdir(parents=True, exist_ok=True)
	config_path = run_dir / CONFIG_FILE
	stored = load_json(config_path)
	if stored is not None:
		stored_hash = config_hash(RunConfig.model_validate(stored))
		if stored_hash != config_hash(config):
			raise ConfigurationError(f"run directory {run_dir} belongs to a different config", field="--out")
	if completed_indices(run_dir) and not resume:
		raise ConfigurationError(f"run directory {run_dir} already holds completed units; pass --resume", field="--out")
	if stored is None:
		with open(config_path, "w", encoding="utf-8") as f:
			f.write(json.dumps(json.loads(canonical_json(config)), indent=2, ensure_ascii=False, sort_keys=True))
			f.write("\n")
		logger.info("Run directory prepared: %s", run_dir)
	return run_dir


def completed_indices(run_dir: Path) -> list[int]:
	units = Path(run_dir) / UNITS_DIR
	if not units.exists():
		return []
	return sorted(int(p.stem) for p in units.glob("*.json") if p.stem.isdigit())


def save_unit(run_dir: Path, unit: dict[str, Any]) -> str:
	"""Write units/NNNN.json once; an existing unit file is never rewritten."""
	file_path = Path(run_dir) / UNITS_DIR / _unit_filename(unit["index"])
	if file_path.exists():
		logger.debug("Unit %s already on disk, keeping it", unit["index"])
		return str(file_path)
	tmp_path = file_path.with_suffix(".json.tmp")
	dump_json(tmp_path, unit)
	tmp_path.replace(file_path)
	logger.debug("Unit saved to: %s", file_path)
	return str(file_path)


def load_units(run_dir: Path) -> dict[int, dict[str, Any]]:
	units = {}
	for index in completed_indices(run_dir):
		units[index] = load_json(Path(run_dir) / UNITS_DIR / _unit_filename(index))
	return units


# result files


def save_result(run_dir: Path, estimate) -> str:
	file_path = dump_json(Path(run_dir) / RESULT_JSON, estimate.to_dict())
	logger.info("Result saved to: %s", file_path)
	return file_path


def save_result_csv(run_dir: Path, estimate) -> str:
	"""Every series in long form: series, left, right, mean, stderr (left = right off bins)."""
	rows = []
	for name, series in sorted(estimate.series.items()):
		if series.edges is not None:
			lefts, rights = series.edges[:-1], series.edges[1:]
		else:
			lefts = rights = series.axis
		for left, right, mean, err in zip(lefts, rights, series.mean, series.stderr):
			rows.append((name, float(left), float(right), float(mean), float(err)))
	return write_csv(Path(run_dir) / RESULT_CSV, ["series", "left", "right", "mean", "stderr"], rows)


def write_measure_csv(path: Path, edges: np.ndarray, mass: np.ndarray, stderr: Optional[np.ndarray] = None) -> str:
	stderr = np.zeros_like(mass) if stderr is None else stderr
	rows = zip(edges[:-1], edges[1:], mass, stderr)
	return write_csv(path, ["bin_left", "bin_right", "mass", "stderr"], ((float(a), float(b), float(m), float(s)) for a, b, m, s in rows))


def measure_envelope(
	kind: str,
	edges: np.ndarray,
	mass: np.ndarray,
	stderr: Optional[np.ndarray] = None,
	atom: float = 0.0,
	atom_stderr: float = 0.0,
	meta: Optional[dict[str, Any]] = None,
) -> dict[str, Any]:
	"""JSON form of a binned measure; the atom at zero is stored apart from the bins."""
	return {
		"kind": kind,
		"atom_at_zero": {"mean": atom, "stderr": atom_stderr},
		"bins": {
			"edges": edges,
			"mass": mass,
			"stderr": np.zeros_like(mass) if stderr is None else stderr,
		},
		"meta": dict(meta or {}),
	}


def write_current_csv(
	path: Path, times: np.ndarray, values: np.ndarray, imag_values: np.ndarray, meta: dict[str, Any]
) -> tuple[str, str]:
	"""t, J, imag_residual plus a .json sidecar with the provenance."""
	path = Path(path)
	rows = ((float(t), float(j), float(abs(r))) for t, j, r in zip(times, values, imag_values))
	csv_path = write_csv(path, ["t", "J", "imag_residual"], rows)
	sidecar = dump_json(path.with_suffix(".json"), meta)
	return csv_path, sidecar
