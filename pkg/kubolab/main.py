"""
Command-line entry point: `python -m kubolab <subcommand> [options]`.

Exit codes: 0 success, 1 configuration or input error, 2 numerical failure,
3 check-suite failure.
"""
import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import storage
from .checks import SUITES, default_identity_config, require_pass, run_suite
from .config import DEFAULT_THREADS, RunConfig, load_config
from .diagnostics import fermi_kernel_decay, free_oracle, mott_ratio, y_norm_growth
from .ensemble import EnsembleEstimate, run, run_sweep, trace_per_unit_volume_convergence
from .errors import CheckFailure, ConfigurationError, DomainError, InputError, NumericalError, PartialResultError
from .logging_config import configure_logging

logger = logging.getLogger("kubolab.main")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_CHECK = 3

PIPELINES = ("dos", "phi", "sigma", "current", "sweep")
DIAG_TASKS = {"decay": "diag-decay", "ynorm": "diag-ynorm", "mott": "diag-mott", "tuv": "tuv"}


class UsageError(Exception):
	pass


class _Parser(argparse.ArgumentParser):
	"""argparse exits with 2 on bad flags; here that is a configuration error."""

	def error(self, message: str):
		raise UsageError(f"{self.prog}: {message}")


def _common_options() -> argparse.ArgumentParser:
	common = argparse.ArgumentParser(add_help=False)
	common.add_argument("--config", type=str, default=None, help="Run configuration (JSON)")
	common.add_argument(
		"--set",
		dest="overrides",
		action="append",
		default=[],
		metavar="KEY=VALUE",
		help="Dotted-path override, e.g. fermi.T=0.2 (repeatable)",
	)
	common.add_argument("--out", type=str, default=None, help="Run directory for CSV/JSON outputs")
	common.add_argument("--seed", type=int, default=None, help="Master seed (overrides disorder.master_seed)")
	common.add_argument(
		"--threads",
		type=int,
		default=DEFAULT_THREADS,
		help=f"Worker processes (default: KUBOLAB_THREADS or {DEFAULT_THREADS})",
	)
	common.add_argument("--resume", action="store_true", help="Reuse completed units in --out")
	common.add_argument("--json", action="store_true", help="Machine-readable output and errors")
	common.add_argument("--svg", action="store_true", help="Also render SVG charts into --out")
	common.add_argument("--verbose", action="store_true", help="Debug logging")
	return common


def build_parser() -> argparse.ArgumentParser:
	common = _common_options()
	parser = _Parser(
		prog="kubolab",
		description="Finite-volume Kubo conductivity measures of the Anderson model.",
		formatter_class=argparse.RawDescriptionHelpFormatter,
		epilog="""
Examples:
  # Conductivity measure with a temperature override
  python -m kubolab sigma --config c.json --set fermi.T=0.2 --out runs/sigma

  # Per-realization identity checks
  python -m kubolab check --suite identities

  # Plane-wave oracle for the free Laplacian
  python -m kubolab free-oracle --d 1 --L 8
		""",
	)
	sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
	for name in PIPELINES:
		sub.add_parser(name, parents=[common], help=f"Run the {name} pipeline over the ensemble")
	diag = sub.add_parser("diag", parents=[common], help="Localization diagnostics")
	diag.add_argument("--kind", choices=sorted(DIAG_TASKS), required=True)
	oracle = sub.add_parser("free-oracle", parents=[common], help="Plane-wave Psi and DOS tables")
	oracle.add_argument("--d", type=int, required=True)
	oracle.add_argument("--L", type=int, required=True)
	oracle.add_argument("--points", type=int, default=801, help="Points of the smoothed energy grid")
	check = sub.add_parser("check", parents=[common], help="Run a check suite")
	check.add_argument("--suite", choices=sorted(SUITES), required=True)
	return parser


def resolve_config(args: argparse.Namespace, task: Optional[str]) -> RunConfig:
	overrides = list(args.overrides)
	if task is not None:
		overrides.insert(0, f"task={json.dumps(task)}")
	if args.seed is not None:
		overrides.append(f"disorder.master_seed={args.seed}")
	return load_config(args.config, overrides)


def _print(args: argparse.Namespace, summary: dict[str, Any], title: str) -> None:
	if args.json:
		print(json.dumps(storage.jsonable(summary), indent=2, ensure_ascii=False, sort_keys=True))
		return
	print(f"=== {title} ===")
	for key, value in summary.items():
		if isinstance(value, float):
			value = f"{value:.10g}"
		print(f"{key:<20}: {value}")


def _out_dir(args: argparse.Namespace) -> Optional[Path]:
	if args.svg and not args.out:
		raise ConfigurationError("--svg needs --out", field="--svg")
	return Path(args.out) if args.out else None


def _scalar_summary(estimate: EnsembleEstimate) -> dict[str, Any]:
	summary: dict[str, Any] = {"realizations": estimate.n_realizations, "config_hash": estimate.meta["config_hash"]}
	for name, scalar in sorted(estimate.scalars.items()):
		summary[name] = scalar.mean
		summary[f"{name}_stderr"] = scalar.stderr
	return summary


DENSITY_SERIES = ("dos", "psi", "phi_marginal")


def _write_measures(out: Path, estimate: EnsembleEstimate, svg: bool) -> None:
	atom = estimate.scalars.get("atom")
	for name, series in estimate.series.items():
		if series.edges is None:
			continue
		storage.write_measure_csv(out / f"{name}.csv", series.edges, series.mean, series.stderr)
		atom_mean, atom_stderr = (atom.mean, atom.stderr) if name.startswith("sigma") and atom is not None else (0.0, 0.0)
		envelope = storage.measure_envelope(
			name, series.edges, series.mean, series.stderr, atom=atom_mean, atom_stderr=atom_stderr, meta=estimate.meta
		)
		storage.dump_json(out / f"{name}.json", envelope)
		if svg:
			from . import plotting

			# dos, psi and phi are stored as densities
			scale = np.diff(series.edges) if name in DENSITY_SERIES else 1.0
			plotting.measure_step_chart(
				out / f"{name}.svg",
				series.edges,
				series.mean * scale,
				series.stderr * scale,
				atom=atom_mean,
				title=name,
				xlabel="nu" if name.startswith("sigma") else "E",
			)


def cmd_pipeline(args: argparse.Namespace) -> int:
	out = _out_dir(args)
	if args.command == "sweep":
		config = resolve_config(args, "sweep")
		result = run_sweep(config, workers=args.threads, run_dir=out, resume=args.resume)
		if out is not None:
			for j, estimate in enumerate(result.estimates):
				series = estimate.series["sigma"]
				storage.write_measure_csv(out / f"sigma_{j:03d}.csv", series.edges, series.mean, series.stderr)
		if args.json:
			_print(args, {"rows": result.rows}, "Sweep")
		else:
			print("=== Sweep ===")
			for row in result.rows:
				print("  ".join(f"{k}={v:.6g}" for k, v in row.items()))
		return EXIT_OK

	config = resolve_config(args, args.command)
	estimate = run(config, workers=args.threads, run_dir=out, resume=args.resume)
	if out is not None:
		if args.command == "current":
			series = estimate.series["current"]
			imag = estimate.series["current_imag"]
			storage.write_current_csv(out / "current.csv", series.axis, series.mean, imag.mean, estimate.meta)
			if args.svg:
				from . import plotting

				plotting.current_line_chart(out / "current.svg", series.axis, series.mean, title="in-phase current")
		else:
			_write_measures(out, estimate, args.svg)
	_print(args, _scalar_summary(estimate), f"{args.command} ({estimate.n_realizations} realizations)")
	return EXIT_OK


def cmd_diag(args: argparse.Namespace) -> int:
	out = _out_dir(args)
	config = resolve_config(args, DIAG_TASKS[args.kind])
	if args.kind == "decay":
		profile = fermi_kernel_decay(config, workers=args.threads)
		fit = profile.fit
		summary = {
			"rate": fit.rate,
			"prefactor": fit.prefactor,
			"r_squared": fit.r_squared,
			"power_r_squared": fit.power_r_squared,
			"fit_points": fit.points,
			"fit_ok": fit.ok,
			"reason": fit.reason,
			"localized_evidence": fit.localized_evidence,
			"value_at_origin": float(profile.values[0]),
		}
		if out is not None:
			rows = zip(profile.distances, profile.values, profile.stderr, profile.left, profile.right)
			storage.write_csv(out / "decay.csv", ["distance", "mean", "stderr", "left", "right"], rows)
			storage.dump_json(out / "decay.json", {"fit": summary, "meta": profile.meta})
			if args.svg:
				from . import plotting

				positive = profile.values > 0
				plotting.series_line_chart(
					out / "decay.svg", profile.distances[positive], profile.values[positive], "Fermi kernel", "|x|", log_y=True
				)
	elif args.kind == "ynorm":
		rows = [asdict(row) for row in y_norm_growth(config, workers=args.threads)]
		summary = {"rows": rows}
		if out is not None:
			storage.write_table_csv(out / "ynorm.csv", rows)
	elif args.kind == "mott":
		estimate = run(config, workers=args.threads, run_dir=out, resume=args.resume)
		low = estimate.series["low_mass"]
		rows = [
			{"nu": float(nu), "low_mass": float(m), "stderr": float(s), "ratio": mott_ratio(float(m), float(nu), config.lattice.d)}
			for nu, m, s in zip(low.axis, low.mean, low.stderr)
		]
		summary = {"rows": rows}
		if out is not None:
			storage.write_table_csv(out / "mott.csv", rows)
	else:
		table = trace_per_unit_volume_convergence(config, workers=args.threads)
		rows = [asdict(row) for row in table.rows]
		summary = {"rows": rows, "meta": table.meta}
		if out is not None:
			storage.write_table_csv(out / "tuv.csv", rows)
			storage.dump_json(out / "tuv.json", table.meta)
	_print(args, summary, f"diag {args.kind}")
	return EXIT_OK


def cmd_free_oracle(args: argparse.Namespace) -> int:
	out = _out_dir(args)
	if args.d < 1 or args.L < 3:
		raise ConfigurationError("need d >= 1 and L >= 3", field="--L" if args.L < 3 else "--d")
	grid = np.linspace(-2.0 * args.d - 1.0, 2.0 * args.d + 1.0, args.points)
	result = free_oracle(args.d, args.L, energy_grid=grid)
	psi_rows = list(zip(result.psi.locations, result.psi.weights))
	if out is not None:
		storage.write_csv(out / "psi.csv", ["energy", "psi"], psi_rows)
		storage.write_csv(out / "dos.csv", ["energy", "dos"], zip(result.dos.locations, result.dos.weights))
		storage.write_csv(
			out / "smoothed.csv",
			["energy", "psi", "dos"],
			zip(result.energy_grid, result.psi_smoothed, result.dos_smoothed),
		)
	if args.json:
		_print(
			args,
			{"d": args.d, "L": args.L, "psi": [list(r) for r in psi_rows], "psi_total": result.psi.total_mass},
			"free oracle",
		)
	else:
		print("energy,psi")
		for energy, weight in psi_rows:
			print(f"{float(energy)!r},{float(weight)!r}")
	return EXIT_OK


def cmd_check(args: argparse.Namespace) -> int:
	config = None
	if args.config is not None or args.overrides or args.seed is not None:
		base = default_identity_config().model_dump(mode="json", by_alias=True)
		overrides = list(args.overrides)
		if args.seed is not None:
			overrides.append(f"disorder.master_seed={args.seed}")
		config = load_config(args.config, overrides, base=base)
	report = run_suite(args.suite, config)
	if args.out:
		storage.dump_json(Path(args.out) / f"check_{args.suite}.json", report.to_dict())
	if args.json:
		_print(args, report.to_dict(), f"check {args.suite}")
	else:
		print(f"=== Check suite: {args.suite} ===")
		for c in report.checks:
			status = "ok  " if c.passed else "FAIL"
			print(f"{status} {c.name:<48} {c.value:.3e} <= {c.tolerance:.3e} {c.detail}".rstrip())
	require_pass(report)
	return EXIT_OK


def _report_error(args_json: bool, error: BaseException, code: int) -> int:
	if args_json:
		payload = {"error": type(error).__name__, "message": str(error), "field": getattr(error, "field", None)}
		failed = getattr(error, "failed_indices", None)
		if failed is not None:
			payload["failed_indices"] = failed
		print(json.dumps(payload, ensure_ascii=False, sort_keys=True), file=sys.stderr)
	else:
		print(f"ERROR: {error}", file=sys.stderr)
	return code


COMMANDS = {
	"diag": cmd_diag,
	"free-oracle": cmd_free_oracle,
	"check": cmd_check,
	**{name: cmd_pipeline for name in PIPELINES},
}


def main(argv: Optional[list[str]] = None) -> int:
	argv = list(sys.argv[1:] if argv is None else argv)
	wants_json = "--json" in argv
	try:
		args = build_parser().parse_args(argv)
	except UsageError as e:
		return _report_error(wants_json, e, EXIT_CONFIG)

	configure_logging(args.verbose)
	try:
		return COMMANDS[args.command](args)
	except (ConfigurationError, InputError, DomainError) as e:
		logger.debug("Configuration or input error", exc_info=True)
		return _report_error(args.json, e, EXIT_CONFIG)
	except CheckFailure as e:
		return _report_error(args.json, e, EXIT_CHECK)
	except (NumericalError, PartialResultError) as e:
		logger.error("Numerical failure: %s", e)
		return _report_error(args.json, e, EXIT_NUMERICAL)
	except Exception as e:
		logger.exception("Unexpected failure")
		return _report_error(args.json, e, EXIT_NUMERICAL)


if __name__ == "__main__":
	raise SystemExit(main())
