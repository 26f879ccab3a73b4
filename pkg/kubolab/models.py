import math
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import special
from scipy.integrate import trapezoid


class _Spec(BaseModel):
	model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)


class LatticeSpec(_Spec):
	"""Cube of side L in d dimensions, sites indexed in C order with x1 slowest."""

	d: int = Field(1, ge=1)
	L: int = Field(..., ge=3)
	boundary: Literal["dirichlet", "periodic"] = "dirichlet"

	@property
	def n_sites(self) -> int:
		return self.L**self.d

	@property
	def shape(self) -> tuple[int, ...]:
		return (self.L,) * self.d

	@property
	def origin(self) -> int:
		return self.L // 2

	def coordinates(self) -> np.ndarray:
		"""Integer coordinates in [0, L), one row per site."""
		return np.stack(np.unravel_index(np.arange(self.n_sites), self.shape), axis=1)

	def index_of(self, coords: tuple[int, ...]) -> int:
		return int(np.ravel_multi_index(tuple(int(c) for c in coords), self.shape))

	@property
	def center_index(self) -> int:
		return self.index_of((self.origin,) * self.d)


class UniformDensity(_Spec):
	kind: Literal["uniform"] = "uniform"
	width: float = Field(..., gt=0.0, alias="W")

	@property
	def sup_norm(self) -> float:
		return 1.0 / self.width

	@property
	def max_abs_value(self) -> float:
		return 0.5 * self.width


class DiscreteDensity(_Spec):
	kind: Literal["discrete"] = "discrete"
	values: list[float] = Field(..., min_length=1)
	probabilities: list[float] = Field(..., min_length=1)

	@model_validator(mode="after")
	def _check_probabilities(self) -> "DiscreteDensity":
		if len(self.values) != len(self.probabilities):
			raise ValueError("values and probabilities must have the same length")
		if any(p < 0.0 for p in self.probabilities):
			raise ValueError("probabilities must be non-negative")
		if abs(math.fsum(self.probabilities) - 1.0) > 1e-9:
			raise ValueError("probabilities must sum to 1")
		return self

	@property
	def sup_norm(self) -> float:
		# point masses have no bounded density
		return math.inf

	@property
	def max_abs_value(self) -> float:
		return max(abs(v) for v in self.values)


Density = Annotated[Union[UniformDensity, DiscreteDensity], Field(discriminator="kind")]


class DisorderSpec(_Spec):
	density: Density = UniformDensity(W=1.0)
	strength: float = Field(1.0, ge=0.0, alias="lambda")
	master_seed: int = Field(0, ge=0, lt=2**64)

	@property
	def potential_bound(self) -> float:
		return self.strength * self.density.max_abs_value

	@property
	def wegner_bound(self) -> float:
		"""Sup norm of the density of strength * V."""
		if self.strength == 0.0:
			return math.inf
		return self.density.sup_norm / self.strength


class FermiParams(_Spec):
	mu: float = 0.0
	temperature: float = Field(0.0, ge=0.0, alias="T")


class BinningSpec(_Spec):
	bins: int = Field(400, ge=1)
	range: Optional[tuple[float, float]] = None

	@model_validator(mode="after")
	def _check_range(self) -> "BinningSpec":
		if self.range is not None and not self.range[0] < self.range[1]:
			raise ValueError("range must be increasing")
		return self

	def edges(self, default_half_width: float) -> np.ndarray:
		"""Explicit range as given; the default range is symmetric about zero to the last bit."""
		if self.range is not None:
			return np.linspace(self.range[0], self.range[1], self.bins + 1)
		edges = np.linspace(-default_half_width, default_half_width, self.bins + 1)
		return 0.5 * (edges - edges[::-1])


class TimeGrid(_Spec):
	start: float = 0.0
	stop: float = 20.0
	count: int = Field(201, ge=1)

	def values(self) -> np.ndarray:
		return np.linspace(self.start, self.stop, self.count)


# Field amplitudes are even in nu: each profile is the symmetric pair of bumps at +/-center.

_COVERAGE_LEVEL = 1e-12


class GaussianField(_Spec):
	kind: Literal["gaussian"] = "gaussian"
	center: float = Field(0.0, ge=0.0)
	width: float = Field(1.0, gt=0.0)
	amplitude: float = 1.0

	def evaluate(self, nu: np.ndarray) -> np.ndarray:
		nu = np.asarray(nu, dtype=float)
		right = np.exp(-0.5 * ((nu - self.center) / self.width) ** 2)
		left = np.exp(-0.5 * ((nu + self.center) / self.width) ** 2)
		return (0.5 * self.amplitude * (right + left)).astype(complex)

	def support_half_width(self) -> float:
		return self.center + self.width * math.sqrt(2.0 * math.log(1.0 / _COVERAGE_LEVEL))

	def feature_scale(self) -> float:
		return self.width

	def core_half_width(self) -> float:
		return self.support_half_width()

	def tail_fraction(self, lo: float, hi: float) -> float:
		"""Share of the L1 mass of |E(nu)| lying outside [lo, hi]."""
		s = self.width * math.sqrt(2.0)

		def outside(c: float) -> float:
			return 0.5 * (special.erfc((hi - c) / s) + special.erfc((c - lo) / s))

		return 0.5 * (outside(self.center) + outside(-self.center))


class LorentzianField(_Spec):
	kind: Literal["lorentzian"] = "lorentzian"
	center: float = Field(0.0, ge=0.0)
	gamma: float = Field(1.0, gt=0.0)
	amplitude: float = 1.0

	def evaluate(self, nu: np.ndarray) -> np.ndarray:
		nu = np.asarray(nu, dtype=float)
		g2 = self.gamma**2
		right = g2 / ((nu - self.center) ** 2 + g2)
		left = g2 / ((nu + self.center) ** 2 + g2)
		return (0.5 * self.amplitude * (right + left)).astype(complex)

	def support_half_width(self) -> float:
		return self.center + self.gamma * math.sqrt(1.0 / _COVERAGE_LEVEL)

	def feature_scale(self) -> float:
		return self.gamma

	def core_half_width(self) -> float:
		"""Past center + 100 gamma the profile is its 1/nu^2 tail."""
		return self.center + 100.0 * self.gamma

	def tail_fraction(self, lo: float, hi: float) -> float:
		def outside(c: float) -> float:
			inside = math.atan((hi - c) / self.gamma) - math.atan((lo - c) / self.gamma)
			return 1.0 - inside / math.pi

		return 0.5 * (outside(self.center) + outside(-self.center))


class TabulatedField(_Spec):
	kind: Literal["tabulated"] = "tabulated"
	nu: list[float] = Field(..., min_length=2)
	real: list[float]
	imag: list[float]

	@model_validator(mode="after")
	def _check_grid(self) -> "TabulatedField":
		if not (len(self.nu) == len(self.real) == len(self.imag)):
			raise ValueError("nu, real and imag must have the same length")
		if any(b <= a for a, b in zip(self.nu, self.nu[1:])):
			raise ValueError("nu must be strictly increasing")
		return self

	def evaluate(self, nu: np.ndarray) -> np.ndarray:
		nu = np.asarray(nu, dtype=float)
		re = np.interp(nu, self.nu, self.real, left=0.0, right=0.0)
		im = np.interp(nu, self.nu, self.imag, left=0.0, right=0.0)
		return re + 1j * im

	def support_half_width(self) -> float:
		values = np.hypot(self.real, self.imag)
		keep = values > _COVERAGE_LEVEL * values.max() if values.max() > 0 else values >= 0
		grid = np.asarray(self.nu)[keep]
		return float(np.max(np.abs(grid))) if grid.size else float(np.max(np.abs(self.nu)))

	def feature_scale(self) -> float:
		return float(np.min(np.diff(self.nu)))

	def core_half_width(self) -> float:
		return self.support_half_width()

	def tail_fraction(self, lo: float, hi: float) -> float:
		grid = np.asarray(self.nu)
		values = np.hypot(self.real, self.imag)
		total = trapezoid(values, grid)
		if total <= 0.0:
			return 0.0
		inside = (grid >= lo) & (grid <= hi)
		if inside.sum() < 2:
			return 1.0
		return float(max(0.0, 1.0 - trapezoid(values[inside], grid[inside]) / total))


FieldProfile = Annotated[
	Union[GaussianField, LorentzianField, TabulatedField], Field(discriminator="kind")
]
