"""Scaling benchmark: pivots, stored amplitudes, peak bytes and wall time versus cutoff.

Four strategies are compared on the same lossy, displaced circuit:

``statevector``  full walk of the lossless state vector (``C^M`` cells)
``alg1``         detection probabilities through diagonal and bridge pivots
``alg2``         conditional states of mode 1 given the other modes
``naive``        full walk of the density matrix (``C^{2M}`` cells)

The naive walk is executed only while its lattice fits ``budget`` cells. Beyond
that its pivots are counted exactly from :func:`fockwalk.vanilla.count_full_pivots`
and its wall time is left empty.
"""

from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from fockwalk.conditional import run_conditional
from fockwalk.gaussian_core import CircuitSpec, build_complex_state, to_density_params, to_statevector_params
from fockwalk.gbs import run_gbs
from fockwalk.lattice import BYTES_PER_COMPLEX, Local
from fockwalk.vanilla import count_full_pivots, fill_full

__all__ = [
    "STRATEGIES",
    "CSV_COLUMNS",
    "BenchRow",
    "bench_circuit",
    "run_bench",
    "write_csv",
    "write_dat",
    "read_csv",
    "fit_slopes",
    "buffer_curve",
    "write_buffer_curve",
]

STRATEGIES = ("statevector", "alg1", "alg2", "naive")
CSV_COLUMNS = ("strategy", "M", "C", "pivots", "amplitudes", "peak_bytes", "wall_time_s", "executed")
DEFAULT_BUDGET = 1_000_000


@dataclass
class BenchRow:
    strategy: str
    M: int
    C: int
    pivots: int
    amplitudes: int
    peak_bytes: int
    wall_time_s: float | None
    executed: bool


def random_unitary(M: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.normal(size=(M, M)) + 1j * rng.normal(size=(M, M))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def bench_circuit(M: int, C: int, *, lossless: bool = False, seed: int = 7) -> CircuitSpec:
    """Squeezed, mixed, slightly displaced ``M``-mode circuit with cutoff ``C``."""
    rng = np.random.default_rng(seed)
    U = random_unitary(M, rng)
    return CircuitSpec(
        modes=M,
        squeeze_params=tuple((0.4, 0.3 * j) for j in range(M)),
        interferometer=U,
        loss_transmissivity=(1.0 if lossless else 0.9,) * M,
        displacements=tuple(0.1 * (1 + 1j) for _ in range(M)),
        cutoffs=(C,) * M,
    )


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def _row(strategy: str, M: int, C: int, budget: int) -> BenchRow:
    cut = (C,) * M
    if strategy == "statevector":
        params = to_statevector_params(build_complex_state(bench_circuit(M, C, lossless=True)))
        fill, dt = _timed(lambda: fill_full(params, Local(cut)))
        return BenchRow(strategy, M, C, fill.pivots, fill.written, fill.written * BYTES_PER_COMPLEX, dt, True)
    params = to_density_params(build_complex_state(bench_circuit(M, C)))
    if strategy == "alg1":
        res, dt = _timed(lambda: run_gbs(params, cut, buffered=True))
        return BenchRow(strategy, M, C, res.pivots_applied, res.amplitudes_written, res.peak_buffer_bytes, dt, True)
    if strategy == "alg2":
        res, dt = _timed(lambda: run_conditional(params, cut, [1]))
        amplitudes = sum(res.written_blocks.values()) * res.block_size
        return BenchRow(strategy, M, C, res.fine_pivots, amplitudes, res.peak_buffer_bytes, dt, True)
    if strategy == "naive":
        cells = C ** (2 * M)
        if cells <= budget:
            fill, dt = _timed(lambda: fill_full(params, Local(cut)))
            return BenchRow(strategy, M, C, fill.pivots, fill.written, cells * BYTES_PER_COMPLEX, dt, True)
        return BenchRow(
            strategy, M, C, count_full_pivots((C,) * (2 * M)), cells, cells * BYTES_PER_COMPLEX, None, False
        )
    raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")


def run_bench(
    M: int,
    cutoffs: Iterable[int],
    strategies: Sequence[str] = STRATEGIES,
    *,
    budget: int = DEFAULT_BUDGET,
) -> list[BenchRow]:
    return [_row(s, M, C, budget) for s in strategies for C in cutoffs]


def write_csv(rows: Sequence[BenchRow], path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            d = asdict(row)
            d["wall_time_s"] = "" if row.wall_time_s is None else f"{row.wall_time_s:.6f}"
            d["executed"] = int(row.executed)
            writer.writerow(d)
    return path


def read_csv(path) -> list[BenchRow]:
    rows = []
    with open(path, newline="") as fh:
        for d in csv.DictReader(fh):
            rows.append(
                BenchRow(
                    d["strategy"], int(d["M"]), int(d["C"]), int(d["pivots"]), int(d["amplitudes"]),
                    int(d["peak_bytes"]), float(d["wall_time_s"]) if d["wall_time_s"] else None,
                    bool(int(d["executed"])),
                )
            )
    return rows


def write_dat(rows: Sequence[BenchRow], directory) -> list[Path]:
    """One whitespace-separated block per strategy, blank-line separated (gnuplot ``index``)."""
    directory = Path(directory)
    path = directory / "bench.dat"
    lines = []
    for s in dict.fromkeys(r.strategy for r in rows):
        lines.append(f"# {s}: C pivots amplitudes peak_bytes wall_time_s")
        for r in rows:
            if r.strategy == s:
                wt = "nan" if r.wall_time_s is None else f"{r.wall_time_s:.6f}"
                lines.append(f"{r.C} {r.pivots} {r.amplitudes} {r.peak_bytes} {wt}")
        lines += ["", ""]
    path.write_text("\n".join(lines))
    return [path]


def fit_slopes(rows: Sequence[BenchRow], column: str = "pivots") -> dict[str, float]:
    """Least-squares slope of ``log(column)`` against ``log(C)`` per strategy."""
    slopes = {}
    for s in dict.fromkeys(r.strategy for r in rows):
        pts = [(r.C, getattr(r, column)) for r in rows if r.strategy == s and getattr(r, column)]
        if len(pts) >= 2:
            x, y = np.log(np.array(pts, dtype=float)).T
            slopes[s] = float(np.polyfit(x, y, 1)[0])
    return slopes


def buffer_curve(M: int, C: int):
    """Buffered detection run on the benchmark circuit; ``history`` is the curve."""
    params = to_density_params(build_complex_state(bench_circuit(M, C)))
    return run_gbs(params, (C,) * M, buffered=True)


def write_buffer_curve(res, path) -> Path:
    """CSV ``pivot, stored, step_end``; ``step_end`` marks the last pivot of each photon sum."""
    ends = set(int(e) for e in res.step_ends)
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pivot", "stored", "step_end"])
        for i, s in enumerate(res.history):
            writer.writerow([i + 1, int(s), int(i in ends)])
    return path
