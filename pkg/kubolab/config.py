import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Annotated, Any, Literal, Optional, Union

from dotenv import load_dotenv
from pydantic import Field, ValidationError, model_validator

from . import __version__ as ARTIFACT_VERSION
from .errors import ConfigurationError
from .models import (
	BinningSpec,
	DisorderSpec,
	FermiParams,
	FieldProfile,
	GaussianField,
	LatticeSpec,
	TimeGrid,
	_Spec,
)

load_dotenv()

logger = logging.getLogger("kubolab.config")

DEFAULT_THREADS = max(1, int(os.getenv("KUBOLAB_THREADS", "1") or "1"))

# desk-scale envelopes per dimension: largest L before a warning
DESK_SCALE_L = {1: 1024, 2: 40, 3: 12}

Task = Literal["dos", "phi", "sigma", "current", "sweep", "diag-decay", "diag-ynorm", "diag-mott", "tuv"]


class CurrentSpec(_Spec):
	field: FieldProfile = GaussianField()
	times: TimeGrid = TimeGrid()
	eta: Optional[float] = Field(None, gt=0.0)
	in_phase: bool = True
	nu_nodes: int = Field(8192, ge=2)


class SweepSpec(_Spec):
	mu_grid: list[float] = Field(default_factory=list)
	T_grid: list[float] = Field(default_factory=list)
	select_bins: list[tuple[float, float]] = Field(default_factory=lambda: [(0.5, 1.0)])

	@model_validator(mode="after")
	def _check_grids(self) -> "SweepSpec":
		for name in ("mu_grid", "T_grid"):
			grid = getattr(self, name)
			if any(b < a for a, b in zip(grid, grid[1:])) and any(b > a for a, b in zip(grid, grid[1:])):
				raise ValueError(f"{name} must be sorted")
		if any(t < 0.0 for t in self.T_grid):
			raise ValueError("T_grid entries must be non-negative")
		return self


class DiagnosticsSpec(_Spec):
	mu_interval: tuple[float, float] = (-0.5, 0.5)
	mu_grid_count: int = Field(21, ge=1)
	noise_floor: float = Field(1e-26, ge=0.0)
	L_list: list[int] = Field(default_factory=lambda: [64, 128, 256, 512])
	nu_grid: list[float] = Field(default_factory=lambda: [0.02, 0.05, 0.1, 0.2, 0.4])

	@model_validator(mode="after")
	def _check_lists(self) -> "DiagnosticsSpec":
		if any(b <= a for a, b in zip(self.L_list, self.L_list[1:])):
			raise ValueError("L_list must be strictly increasing")
		if any(size < 3 for size in self.L_list):
			raise ValueError("L_list entries must be at least 3")
		if self.mu_interval[1] < self.mu_interval[0]:
			raise ValueError("mu_interval must be ordered")
		return self

	def mu_grid(self) -> list[float]:
		lo, hi = self.mu_interval
		if self.mu_grid_count == 1:
			return [0.5 * (lo + hi)]
		step = (hi - lo) / (self.mu_grid_count - 1)
		return [lo + i * step for i in range(self.mu_grid_count)]


class RunConfig(_Spec):
	task: Task = "sigma"
	lattice: LatticeSpec
	disorder: DisorderSpec = DisorderSpec()
	fermi: FermiParams = FermiParams()
	realizations: int = Field(1, ge=1)
	binning: BinningSpec = BinningSpec()
	bandwidth_factor: float = Field(1.0, gt=0.0)
	# eta values at which sigma and sweep units report the regularized dc conductivity
	dc_eta: list[Annotated[float, Field(gt=0.0)]] = Field(default_factory=list)
	current: CurrentSpec = CurrentSpec()
	sweep: SweepSpec = SweepSpec()
	diagnostics: DiagnosticsSpec = DiagnosticsSpec()

	@model_validator(mode="after")
	def _check_task(self) -> "RunConfig":
		if self.task == "sweep" and not (self.sweep.mu_grid or self.sweep.T_grid):
			raise ValueError("a sweep needs a non-empty mu_grid or T_grid")
		return self

	@property
	def energy_half_width(self) -> float:
		"""Bound on |E| for every realization: 2d + lambda * max |V|."""
		return 2.0 * self.lattice.d + self.disorder.potential_bound

	@property
	def frequency_half_width(self) -> float:
		return 2.0 * self.energy_half_width

	def sweep_points(self) -> list[FermiParams]:
		mus = self.sweep.mu_grid or [self.fermi.mu]
		temperatures = self.sweep.T_grid or [self.fermi.temperature]
		return [FermiParams(mu=mu, T=t) for mu in mus for t in temperatures]


def _field_path(error: dict[str, Any]) -> str:
	return ".".join(str(part) for part in error.get("loc", ()))


def validate_config(raw: dict[str, Any]) -> RunConfig:
	try:
		return RunConfig.model_validate(raw)
	except ValidationError as e:
		first = e.errors()[0]
		field = _field_path(first)
		logger.debug("Config validation failed: %s", e)
		raise ConfigurationError(first.get("msg", "invalid value"), field=field) from e


def _parse_value(text: str) -> Any:
	try:
		return json.loads(text)
	except json.JSONDecodeError:
		return text


def apply_overrides(raw: dict[str, Any], overrides: list[str]) -> dict[str, Any]:
	"""Apply dotted-path assignments such as 'fermi.T=0.2' to a raw config dict."""
	result = json.loads(json.dumps(raw))
	for item in overrides:
		if "=" not in item:
			raise ConfigurationError(f"override '{item}' is not of the form key=value", field=item)
		key, _, text = item.partition("=")
		parts = [part for part in key.strip().split(".") if part]
		if not parts:
			raise ConfigurationError("override has an empty key", field=item)
		node: Union[dict[str, Any], Any] = result
		for depth, part in enumerate(parts[:-1]):
			child = node.get(part)
			if child is None:
				child = node[part] = {}
			if not isinstance(child, dict):
				raise ConfigurationError("cannot descend into a non-object value", field=".".join(parts[: depth + 1]))
			node = child
		node[parts[-1]] = _parse_value(text.strip())
	return result


def load_raw_config(path: Union[str, Path]) -> dict[str, Any]:
	path = Path(path)
	if not path.exists():
		raise ConfigurationError(f"config file not found: {path}", field="--config")
	try:
		with open(path, "r", encoding="utf-8") as f:
			raw = json.load(f)
	except json.JSONDecodeError as e:
		raise ConfigurationError(f"invalid JSON in config file: {e}", field="--config") from e
	if not isinstance(raw, dict):
		raise ConfigurationError("config file must hold a JSON object", field="--config")
	return raw


def load_config(
	path: Optional[Union[str, Path]] = None,
	overrides: Optional[list[str]] = None,
	base: Optional[dict[str, Any]] = None,
) -> RunConfig:
	raw = load_raw_config(path) if path is not None else dict(base or {})
	return validate_config(apply_overrides(raw, overrides or []))


def canonical_json(config: RunConfig) -> str:
	return json.dumps(config.model_dump(mode="json", by_alias=True), sort_keys=True, ensure_ascii=False)


def config_hash(config: RunConfig) -> str:
	return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def check_desk_scale(config: RunConfig) -> None:
	limit = DESK_SCALE_L.get(config.lattice.d)
	if limit is not None and config.lattice.L > limit:
		logger.warning(
			"L=%s exceeds the desk-scale envelope L<=%s for d=%s", config.lattice.L, limit, config.lattice.d
		)
