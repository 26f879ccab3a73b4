import json

import pytest

from conftest import make_config
from kubolab.config import (
	apply_overrides,
	canonical_json,
	config_hash,
	load_config,
	validate_config,
)
from kubolab.errors import ConfigurationError


BASE = {"lattice": {"d": 1, "L": 32}}


def test_overrides_parse_json_with_string_fallback() -> None:
	config = load_config(
		base=BASE,
		overrides=["fermi.T=0.2", "lattice.boundary=periodic", 'disorder.density={"kind": "uniform", "W": 3}'],
	)
	assert config.fermi.temperature == 0.2
	assert config.lattice.boundary == "periodic"
	assert config.disorder.density.width == 3.0


def test_overrides_do_not_touch_the_input() -> None:
	raw = {"lattice": {"d": 1, "L": 32}}
	updated = apply_overrides(raw, ["lattice.L=64", "sweep.T_grid=[0.5, 0.1]"])
	assert raw == {"lattice": {"d": 1, "L": 32}}
	assert updated["lattice"]["L"] == 64
	assert updated["sweep"] == {"T_grid": [0.5, 0.1]}


@pytest.mark.parametrize("override", ["fermi.T", "=3"])
def test_malformed_overrides(override) -> None:
	with pytest.raises(ConfigurationError):
		apply_overrides(BASE, [override])


def test_override_cannot_descend_into_a_value() -> None:
	with pytest.raises(ConfigurationError) as e:
		apply_overrides(BASE, ["lattice.L.x=1"])
	assert e.value.field == "lattice.L"


@pytest.mark.parametrize(
	"overrides,field",
	[
		(["lattice.L=2"], "lattice.L"),
		(["foo=1"], "foo"),
		(["fermi.T=-0.1"], "fermi.T"),
		(["realizations=0"], "realizations"),
		(["dc_eta=[0.1, -0.1]"], "dc_eta.1"),
	],
)
def test_validation_errors_name_the_field(overrides, field) -> None:
	with pytest.raises(ConfigurationError) as e:
		load_config(base=BASE, overrides=overrides)
	assert e.value.field == field


def test_density_needs_a_kind() -> None:
	with pytest.raises(ConfigurationError) as e:
		validate_config({"lattice": {"L": 8}, "disorder": {"density": {"W": 2.0}}})
	assert e.value.field.startswith("disorder.density")


def test_sweep_grids_must_be_sorted() -> None:
	with pytest.raises(ConfigurationError) as e:
		load_config(base=BASE, overrides=["sweep.T_grid=[0.1, 0.5, 0.2]"])
	assert e.value.field.startswith("sweep")
	config = load_config(base=BASE, overrides=["sweep.T_grid=[0.5, 0.2, 0.0]", "sweep.mu_grid=[-0.5, 0.5]"])
	assert [(p.mu, p.temperature) for p in config.sweep_points()][:3] == [(-0.5, 0.5), (-0.5, 0.2), (-0.5, 0.0)]
	assert len(config.sweep_points()) == 6


def test_sweep_task_needs_a_grid() -> None:
	with pytest.raises(ConfigurationError):
		load_config(base=BASE, overrides=["task=sweep"])


def test_config_file(tmp_path) -> None:
	path = tmp_path / "c.json"
	path.write_text(json.dumps({"lattice": {"d": 2, "L": 6}, "fermi": {"mu": 0.3}}), encoding="utf-8")
	config = load_config(path, ["realizations=3"])
	assert config.lattice.n_sites == 36
	assert config.realizations == 3
	assert config.fermi.mu == 0.3

	with pytest.raises(ConfigurationError) as e:
		load_config(tmp_path / "missing.json")
	assert e.value.field == "--config"
	(tmp_path / "bad.json").write_text("{not json", encoding="utf-8")
	with pytest.raises(ConfigurationError):
		load_config(tmp_path / "bad.json")


def test_hash_is_stable_and_sensitive() -> None:
	first = make_config()
	assert config_hash(first) == config_hash(make_config())
	assert config_hash(first) != config_hash(make_config(fermi={"mu": 0.1}))
	canonical = json.loads(canonical_json(first))
	assert canonical["disorder"]["lambda"] == 1.0
	assert canonical["fermi"]["T"] == 0.0


def test_half_widths() -> None:
	config = make_config(lattice={"d": 2, "L": 8})
	assert config.energy_half_width == pytest.approx(4.0 + 1.0)
	assert config.frequency_half_width == pytest.approx(10.0)


def test_diagnostics_mu_grid() -> None:
	grid = make_config().diagnostics.mu_grid()
	assert len(grid) == 21
	assert grid[0] == -0.5 and grid[-1] == pytest.approx(0.5)
	assert grid[10] == pytest.approx(0.0)
