import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from kubolab.config import RunConfig  # noqa: E402
from kubolab.lattice import build_realization, position_operator, velocity_operator  # noqa: E402
from kubolab.models import DisorderSpec, FermiParams, LatticeSpec, UniformDensity  # noqa: E402
from kubolab.spectral import diagonalize  # noqa: E402


def pytest_addoption(parser):
	parser.addoption("--runslow", action="store_true", default=False, help="run slow ensemble tests")


def pytest_collection_modifyitems(config, items):
	if config.getoption("--runslow"):
		return
	skip_slow = pytest.mark.skip(reason="needs --runslow")
	for item in items:
		if "slow" in item.keywords:
			item.add_marker(skip_slow)


def make_config(**updates) -> RunConfig:
	"""d=1, L=64 dirichlet box, uniform(W=2), lambda=1, seed 7."""
	raw = {
		"lattice": {"d": 1, "L": 64},
		"disorder": {"density": {"kind": "uniform", "W": 2.0}, "lambda": 1.0, "master_seed": 7},
	}
	for key, value in updates.items():
		raw[key] = value
	return RunConfig.model_validate(raw)


@pytest.fixture
def box64():
	return LatticeSpec(d=1, L=64)


@pytest.fixture
def realization64(box64):
	"""One disordered realization with its eigen system, X1 and velocity."""
	disorder = DisorderSpec(density=UniformDensity(W=2.0), strength=1.0, master_seed=7)
	h = build_realization(box64, disorder, 0)
	x1 = position_operator(box64)
	return h, diagonalize(h), x1, velocity_operator(h, x1)


@pytest.fixture
def fermi_zero():
	return FermiParams(mu=0.0, T=0.0)


@pytest.fixture
def rng():
	return np.random.default_rng(12345)
