#!/usr/bin/env python3
"""
Scan the total mass of Psi (the zero-frequency weight carried by degenerate
eigen-pairs) against the box size L for a disordered ensemble.

Under disorder the spectrum is simple and Psi collapses to the diagonal pairs;
with real eigenvectors the diagonal of the velocity operator vanishes, so the
scan should sit at round-off. The free Laplacian on a torus keeps Psi at 2 pi in d = 1.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from kubolab import storage  # noqa: E402
from kubolab.config import DEFAULT_THREADS, load_config  # noqa: E402
from kubolab.ensemble import run  # noqa: E402
from kubolab.errors import KubolabError  # noqa: E402
from kubolab.logging_config import configure_logging  # noqa: E402


def psi_volume_scan(config, sizes: list[int], workers: int) -> list[dict]:
	rows = []
	for size in sizes:
		lattice = config.lattice.model_copy(update={"L": size})
		estimate = run(config.model_copy(update={"task": "dos", "lattice": lattice}), workers=workers)
		psi = estimate.scalars["psi_mass"]
		rows.append({"L": size, "psi_mass": psi.mean, "stderr": psi.stderr, "realizations": estimate.n_realizations})
	return rows


def main(argv: Optional[list[str]] = None) -> int:
	parser = argparse.ArgumentParser(
		description="Total Psi mass against L for a disordered ensemble.",
		formatter_class=argparse.RawDescriptionHelpFormatter,
		epilog="""
Examples:
  # Strong disorder in d = 1
  python scripts/psi_volume_scan.py --set disorder.lambda=5 --set realizations=50 --sizes 32 64 128 256

  # From a config file, CSV into a directory
  python scripts/psi_volume_scan.py --config c.json --out runs/psi_scan
		""",
	)
	parser.add_argument("--config", type=str, default=None, help="Run configuration (JSON)")
	parser.add_argument("--set", dest="overrides", action="append", default=[], help="Dotted-path override")
	parser.add_argument("--sizes", type=int, nargs="+", default=[32, 64, 128, 256], help="Box sizes L")
	parser.add_argument("--threads", type=int, default=DEFAULT_THREADS, help="Worker processes")
	parser.add_argument("--out", type=str, default=None, help="Directory for psi_scan.csv")
	parser.add_argument("--json", action="store_true", help="Output result as JSON")

	args = parser.parse_args(argv)

	load_dotenv()
	configure_logging()

	base = {"lattice": {"d": 1, "L": args.sizes[0]}, "disorder": {"lambda": 5.0}}
	try:
		config = load_config(args.config, args.overrides, base=base)
		rows = psi_volume_scan(config, args.sizes, args.threads)
	except KubolabError as e:
		print(f"ERROR: {e}", file=sys.stderr)
		return 1

	if args.out:
		storage.write_table_csv(Path(args.out) / "psi_scan.csv", rows)

	if args.json:
		print(json.dumps(rows, indent=2, ensure_ascii=False))
		return 0

	print("=== Psi mass vs L ===")
	for row in rows:
		print(f"L={row['L']:<6} psi_mass={row['psi_mass']:.6e} +/- {row['stderr']:.2e}")
	return 0


if __name__ == "__main__":
	raise SystemExit(main())
