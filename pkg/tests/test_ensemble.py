import json

import numpy as np
import pytest

from conftest import make_config
from kubolab import ensemble
from kubolab.ensemble import Accumulator, plan, reduce_units, run, run_sweep, trace_per_unit_volume_convergence
from kubolab.errors import ConfigurationError
from kubolab.tasks import run_unit, series_axes


def _small(**updates):
	return make_config(lattice={"d": 1, "L": 16}, **updates)


def _without_timestamp(estimate) -> dict:
	data = estimate.to_dict()
	data["meta"].pop("created_at")
	return json.loads(json.dumps(data, default=lambda v: np.asarray(v).tolist()))


def test_plan_is_deterministic() -> None:
	config = _small(realizations=4)
	units = plan(config)
	assert [u.index for u in units] == [0, 1, 2, 3]
	assert len({u.seed for u in units}) == 4
	assert units == plan(config)
	with pytest.raises(ConfigurationError):
		plan(config.model_copy(update={"realizations": 0}))


def test_accumulator_statistics() -> None:
	acc = Accumulator()
	for value in (1.0, 2.0, 3.0, 4.0):
		acc.add(value)
	assert float(acc.mean) == pytest.approx(2.5)
	assert float(acc.stderr) == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2.0)

	single = Accumulator((2,))
	single.add([1.0, 5.0])
	assert not single.stderr_defined
	assert single.stderr.tolist() == [0.0, 0.0]


def test_accumulator_merge_matches_one_pass(rng) -> None:
	values = rng.normal(size=(9, 3))
	whole, first, second = Accumulator((3,)), Accumulator((3,)), Accumulator((3,))
	for row in values:
		whole.add(row)
	for row in values[:4]:
		first.add(row)
	for row in values[4:]:
		second.add(row)
	merged = first.merge(second)
	assert merged.count == 9
	np.testing.assert_allclose(merged.mean, whole.mean, rtol=1e-12)
	np.testing.assert_allclose(merged.stderr, whole.stderr, rtol=1e-10)
	np.testing.assert_allclose(whole.stderr, values.std(axis=0, ddof=1) / 3.0, rtol=1e-10)


def test_unit_shapes_match_their_axes() -> None:
	for task in ("dos", "phi", "sigma", "current", "diag-decay", "diag-mott"):
		config = _small(task=task, current={"times": {"stop": 2.0, "count": 5}})
		unit = run_unit(config, 0)
		axes = series_axes(config)
		assert set(unit["series"]) >= set(axes)
		for name, axis in axes.items():
			assert len(unit["series"][name]) == len(axis["axis"])
	dos = run_unit(_small(task="dos"), 0)
	assert dos["scalars"]["dos_mass"] == pytest.approx(1.0)


def test_reduction_follows_index_order() -> None:
	config = _small(realizations=3)
	units = {i: run_unit(config, i) for i in range(3)}
	reversed_units = {i: units[i] for i in (2, 0, 1)}
	a = reduce_units(config, units)
	b = reduce_units(config, reversed_units)
	np.testing.assert_array_equal(a.series["sigma"].mean, b.series["sigma"].mean)
	np.testing.assert_array_equal(a.series["sigma"].stderr, b.series["sigma"].stderr)
	assert a.stderr_defined and a.n_realizations == 3


def test_single_realization_reports_zero_stderr() -> None:
	config = _small()
	estimate = reduce_units(config, {0: run_unit(config, 0)})
	assert not estimate.stderr_defined
	assert estimate.scalars["total_mass"].stderr == 0.0
	assert estimate.meta["master_seed"] == 7


def test_estimate_does_not_depend_on_worker_count() -> None:
	config = _small(realizations=3, fermi={"mu": 0.1, "T": 0.1})
	one = run(config, workers=1)
	two = run(config, workers=2)
	assert _without_timestamp(one) == _without_timestamp(two)


def test_resume_reproduces_the_result(tmp_path) -> None:
	config = _small(realizations=3)
	first = run(config, workers=1, run_dir=tmp_path)
	unit_text = (tmp_path / "units" / "0001.json").read_text(encoding="utf-8")
	# lose one unit and pick up the rest
	(tmp_path / "units" / "0002.json").unlink()
	resumed = run(config, workers=1, run_dir=tmp_path, resume=True)
	assert _without_timestamp(first) == _without_timestamp(resumed)
	assert (tmp_path / "units" / "0001.json").read_text(encoding="utf-8") == unit_text
	assert (tmp_path / "result.json").exists()
	assert (tmp_path / "run.log").exists()
	assert (tmp_path / "result.csv").read_text(encoding="utf-8").startswith("series,left,right,mean,stderr\n")
	with pytest.raises(ConfigurationError):
		run(config, workers=1, run_dir=tmp_path)


def test_site_guard_is_checked_before_running(monkeypatch) -> None:
	monkeypatch.setattr(ensemble, "MAX_SITES", 10)
	with pytest.raises(ConfigurationError) as e:
		run(_small())
	assert e.value.field == "lattice.L"


def test_sweep_rows(tmp_path) -> None:
	config = _small(sweep={"T_grid": [0.5, 0.2, 0.05, 0.0], "select_bins": [[0.1, 1.0]]}, realizations=2)
	result = run_sweep(config, workers=1, run_dir=tmp_path)
	assert [row["T"] for row in result.rows] == [0.5, 0.2, 0.05, 0.0]
	assert "gamma[0.1,1]" in result.rows[0]
	assert all(e.series["sigma"].mean.size == 400 for e in result.estimates)
	assert result.estimates[-1].meta["fermi"]["T"] == 0.0
	assert (tmp_path / "sweep.csv").read_text(encoding="utf-8").startswith("mu,T,total_mass,")


def test_sweep_needs_a_grid() -> None:
	with pytest.raises(ConfigurationError):
		run_sweep(_small())


def test_free_trace_per_volume_matches_fourier() -> None:
	config = make_config(
		lattice={"d": 1, "L": 8, "boundary": "periodic"},
		disorder={"lambda": 0.0},
		fermi={"mu": 0.3, "T": 0.3},
	)
	convergence = trace_per_unit_volume_convergence(config, L_list=[8, 12], workers=1)
	assert [row.L for row in convergence.rows] == [8, 12]
	assert convergence.meta["L_list"] == [8, 12]
	for row in convergence.rows:
		assert row.trace_gap <= 1e-12
		assert row.volume_trace == pytest.approx(row.fourier, abs=1e-12)
		# translation invariance puts every site on the volume average
		assert row.center == pytest.approx(row.fourier, abs=1e-10)


@pytest.mark.slow
def test_sigma_mass_stays_bounded_under_disorder() -> None:
	config = make_config(
		lattice={"d": 1, "L": 256},
		realizations=100,
		sweep={"mu_grid": [-1.0, 0.0, 1.0], "T_grid": [0.5, 0.1, 0.0]},
	)
	result = run_sweep(config, workers=4)
	assert len(result.rows) == 9
	for row in result.rows:
		assert row["total_mass"] <= np.sqrt(2.0) * np.pi + 3.0 * row["total_mass_stderr"]


@pytest.mark.slow
def test_dos_obeys_the_wegner_bound() -> None:
	config = make_config(task="dos", lattice={"d": 1, "L": 512}, realizations=200)
	estimate = run(config, workers=4)
	dos = estimate.series["dos"]
	assert np.all(dos.mean <= 0.5 + 5.0 * dos.stderr)
	assert estimate.scalars["dos_mass"].mean == pytest.approx(1.0, abs=1e-12)
	# smoothed Psi stays under 4 pi times the DOS
	psi = estimate.series["psi"]
	assert np.all(psi.mean <= 4.0 * np.pi * dos.mean + 5.0 * (psi.stderr + dos.stderr))


def test_zero_temperature_bandwidth_and_dc_values_are_reported() -> None:
	estimate = run(_small(realizations=2, dc_eta=[0.1, 0.01]), workers=1)
	bandwidth = estimate.scalars["bandwidth"]
	assert bandwidth.mean > 0.0
	assert estimate.meta["atom_bandwidth"]["factor"] == 1.0
	assert estimate.meta["atom_bandwidth"]["mean"] == {"bandwidth": bandwidth.mean}
	assert estimate.scalars["dc[0.1]"].mean > 0.0
	assert estimate.scalars["dc[0.01]"].mean > 0.0

	finite = run(_small(fermi={"mu": 0.0, "T": 0.1}), workers=1)
	assert "bandwidth" not in finite.scalars
	assert "atom_bandwidth" not in finite.meta


def test_sweep_rows_carry_dc_values() -> None:
	config = _small(sweep={"T_grid": [0.2, 0.0]}, dc_eta=[0.05])
	result = run_sweep(config, workers=1)
	assert all("dc[0.05]" in row for row in result.rows)
	assert "bandwidth" in result.estimates[-1].scalars
	assert "bandwidth" not in result.estimates[0].scalars
	assert set(result.estimates[0].meta["atom_bandwidth"]["mean"]) == {"bandwidth@1"}


def test_disordered_torus_is_rejected_for_velocity_tasks() -> None:
	torus = {"d": 1, "L": 16, "boundary": "periodic"}
	config = make_config(lattice=torus)
	with pytest.raises(ConfigurationError) as e:
		run(config, workers=1)
	assert e.value.field == "lattice.boundary"
	with pytest.raises(ConfigurationError):
		run_unit(config, 0)

	free = run(make_config(lattice=torus, disorder={"lambda": 0.0}), workers=1)
	assert free.scalars["gamma_mass"].mean <= 1e-10
	assert run(make_config(task="tuv", lattice=torus), workers=1).scalars["trace_gap"].mean <= 1e-12
