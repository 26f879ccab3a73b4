import logging
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "kubolab"

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

logger = logging.getLogger("kubolab.plotting")


def _save(fig, path: Path) -> str:
	path = Path(path)
	path.parent.mkdir(parents=True, exist_ok=True)
	# no date, so reruns give identical files
	fig.savefig(path, format="svg", metadata={"Date": None})
	plt.close(fig)
	logger.info("Figure written: %s", path)
	return str(path)


def measure_step_chart(
	path: Path,
	edges: np.ndarray,
	mass: np.ndarray,
	stderr: Optional[np.ndarray] = None,
	atom: float = 0.0,
	title: str = "",
	xlabel: str = "nu",
) -> str:
	"""Binned density as a step chart; the atom at zero is drawn as a stem."""
	density = np.asarray(mass) / np.diff(edges)
	fig, ax = plt.subplots(figsize=(7, 4))
	ax.stairs(density, edges, label="density")
	if stderr is not None and np.any(stderr):
		centers = 0.5 * (edges[:-1] + edges[1:])
		ax.fill_between(
			centers,
			density - stderr / np.diff(edges),
			density + stderr / np.diff(edges),
			step="mid",
			alpha=0.25,
			linewidth=0,
		)
	if atom:
		ax.vlines(0.0, 0.0, atom, colors="C3", label=f"atom at 0 ({atom:.4g})")
	ax.set_xlabel(xlabel)
	ax.set_title(title)
	ax.legend(loc="upper right")
	return _save(fig, path)


def current_line_chart(path: Path, times: np.ndarray, values: np.ndarray, title: str = "") -> str:
	fig, ax = plt.subplots(figsize=(7, 4))
	ax.plot(times, values)
	ax.set_xlabel("t")
	ax.set_ylabel("J")
	ax.set_title(title)
	return _save(fig, path)


def series_line_chart(
	path: Path, x: np.ndarray, y: np.ndarray, title: str = "", xlabel: str = "", log_y: bool = False
) -> str:
	fig, ax = plt.subplots(figsize=(7, 4))
	ax.plot(x, y, marker=".")
	if log_y:
		ax.set_yscale("log")
	ax.set_xlabel(xlabel)
	ax.set_title(title)
	return _save(fig, path)
