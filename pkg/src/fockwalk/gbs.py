"""Detection probabilities of a fully detected Gaussian circuit.

Only the diagonal density-matrix amplitudes ``G[n1, n1, n2, n2, ...]`` are
wanted, so the schedule applies two kinds of pivots for every photon sum ``S``:

* diagonal pivots ``[a, a, b, b, ...]`` of weight ``2S`` (only while ``a < C_1 - 1``),
* off-diagonal pivots ``diag + 1_{2K-1}`` of weight ``2S + 1`` for the first mode
  ``K`` that may still grow (all earlier modes must be empty).

An off-diagonal pivot for mode ``K`` writes only in directions of mode ``K`` and
later, and a write is performed only for diagonal targets and for targets some
later pivot actually reads. With these rules every off-diagonal amplitude is
written exactly once, and the planned read count lets :class:`BufferedStore`
drop it after its last read.

Without displacement only the odd-weight (off-diagonal) pivots are applied and
no pivot value is ever read.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import comb, prod
from typing import Sequence

import numpy as np

from fockwalk.gaussian_core import GaussianData, Representation, ValidationError, select_modes
from fockwalk.lattice import (
    BYTES_PER_COMPLEX,
    OFFSET_TYPES,
    BufferedStore,
    SchedulerError,
    compositions,
    split_diagonal,
)
from fockwalk.vanilla import bundle_size, hypercross

__all__ = [
    "Pivot",
    "PivotPlan",
    "plan_pivots",
    "GBSResult",
    "run_gbs",
    "run_gbs_global_cutoff",
    "count_written",
    "pivot_count_local",
    "pivot_count_global",
    "pivot_count_global_sum",
    "written_closed_form",
    "IMAG_TOL",
]

IMAG_TOL = 1e-12


@dataclass(frozen=True)
class Pivot:
    """One planned hypercross.

    ``mode`` is ``None`` for a diagonal pivot and the 1-based mode ``K`` of an
    off-diagonal pivot ``diag + 1_{2K-1}``.
    """

    S: int
    diag: tuple[int, ...]
    mode: int | None = None

    @property
    def is_diagonal(self) -> bool:
        return self.mode is None

    @property
    def index(self) -> tuple[int, ...]:
        if self.mode is None:
            return self.diag
        k = list(self.diag)
        k[2 * self.mode - 2] += 1
        return tuple(k)

    @property
    def weight(self) -> int:
        return 2 * self.S + (self.mode is not None)

    @property
    def first_dir(self) -> int:
        """Lowest write direction (0-based)."""
        return 0 if self.mode is None else 2 * (self.mode - 1)


@dataclass
class _Step:
    pivot: Pivot
    k: tuple[int, ...]
    reads: tuple[tuple[int, tuple[int, ...]], ...]
    dirs: tuple[int, ...]
    targets: tuple[tuple[int, ...], ...]
    target_reads: tuple[int, ...]
    reads_pivot: bool


@dataclass
class PivotPlan:
    """Ordered pivots plus the write/read bookkeeping the executor needs."""

    M: int
    cutoffs: tuple[int, ...] | None
    n_max: int | None
    displaced: bool
    pivots: list[Pivot]
    steps: list[_Step] = field(repr=False)
    groups: list[tuple[int, bool, int, int]] = field(repr=False)

    def __len__(self) -> int:
        return len(self.pivots)

    @property
    def pivot_count(self) -> int:
        return len(self.pivots)

    @property
    def diag_shape(self) -> tuple[int, ...]:
        return self.cutoffs if self.cutoffs is not None else (self.n_max,) * self.M


def _patterns(S: int, M: int, cutoffs, n_max) -> list[tuple[int, ...]]:
    upper = cutoffs if cutoffs is not None else (S + 1,) * M
    if n_max is not None and S >= n_max:
        return []
    return [tuple(int(x) for x in row) for row in compositions(S, upper)]


def plan_pivots(
    M: int,
    cutoffs: Sequence[int] | None = None,
    *,
    n_max: int | None = None,
    displaced: bool = True,
) -> PivotPlan:
    """Pivot schedule for ``M`` detected modes.

    Give either per-mode ``cutoffs`` or a total-photon bound ``n_max`` (patterns
    with fewer than ``n_max`` photons). With a total-photon bound the per-mode
    guards on diagonal and off-diagonal pivots are dropped and writes are kept
    below weight ``2 n_max``. ``displaced=False`` plans the odd-weight pivots only.
    """
    if M < 1:
        raise ValidationError("at least one mode is required")
    if (cutoffs is None) == (n_max is None):
        raise ValidationError("give exactly one of cutoffs and n_max")
    if cutoffs is not None:
        cutoffs = tuple(int(c) for c in cutoffs)
        if len(cutoffs) != M or min(cutoffs) < 1:
            raise ValidationError(f"need {M} cutoffs >= 1, got {cutoffs}")
        s_range = range(sum(cutoffs))
    else:
        if n_max < 1:
            raise ValidationError("n_max must be >= 1")
        s_range = range(n_max)

    pivots: list[Pivot] = []
    groups = []
    for S in s_range:
        diag_set = [tuple(x for a in n for x in (a, a)) for n in _patterns(S, M, cutoffs, n_max)]
        start = len(pivots)
        for d in diag_set:
            if cutoffs is None or d[0] < cutoffs[0] - 1:
                pivots.append(Pivot(S, d))
        if displaced:
            groups.append((S, True, start, len(pivots)))
        else:
            del pivots[start:]
        start = len(pivots)
        for d in diag_set:
            for K in range(1, M + 1):
                if any(d[: 2 * (K - 1)]):
                    continue
                if cutoffs is None or d[2 * K - 1] < cutoffs[K - 1] - 1:
                    pivots.append(Pivot(S, d, K))
        groups.append((S, False, start, len(pivots)))

    # A pivot whose every target is out of bounds or unused does no work. Dropping
    # it can leave another pivot idle, so prune to a fixed point.
    while True:
        steps = _plan_steps(pivots, M, cutoffs, n_max, displaced)
        idle = [i for i, st in enumerate(steps) if not st.dirs]
        if not idle:
            break
        idle_set = set(idle)
        pivots = [p for i, p in enumerate(pivots) if i not in idle_set]
        groups = _regroup(groups, idle_set)
    return PivotPlan(M, cutoffs, n_max, displaced, pivots, steps, groups)


def _regroup(groups, dropped: set) -> list:
    out, shift = [], 0
    for S, diag, start, stop in groups:
        gone = sum(1 for i in dropped if start <= i < stop)
        out.append((S, diag, start - shift, stop - shift - gone))
        shift += gone
    return out


def _plan_steps(pivots, M, cutoffs, n_max, displaced) -> list:
    D = 2 * M
    uses: dict[tuple[int, ...], int] = {}
    read_lists = []
    for p in pivots:
        k = p.index
        reads = []
        for l in range(D):
            if k[l] > 0:
                r = k[:l] + (k[l] - 1,) + k[l + 1 :]
                reads.append((l, r))
                uses[r] = uses.get(r, 0) + 1
        if displaced and not p.is_diagonal:
            uses[k] = uses.get(k, 0) + 1
        read_lists.append(tuple(reads))

    steps = []
    for p, reads in zip(pivots, read_lists):
        k = p.index
        dirs, targets, target_reads = [], [], []
        for i in range(p.first_dir, D):
            t = k[:i] + (k[i] + 1,) + k[i + 1 :]
            if cutoffs is not None and t[i] >= cutoffs[i // 2]:
                continue
            if n_max is not None and sum(t) >= 2 * n_max:
                continue
            is_diag = not any(split_diagonal(t)[1])
            if is_diag or uses.get(t, 0):
                dirs.append(i)
                targets.append(t)
                target_reads.append(uses.get(t, 0))
        steps.append(
            _Step(p, k, reads, tuple(dirs), tuple(targets), tuple(target_reads),
                  displaced and not p.is_diagonal)
        )
    return steps


@dataclass
class GBSResult:
    """Output of :func:`run_gbs`.

    ``diagonal`` is the complex diagonal; ``probabilities`` its real part after the
    imaginary residue has been checked. ``history`` is the number of stored
    cells after every pivot and ``step_ends`` indexes the last pivot of each
    photon sum ``S``. Gradient runs add ``db`` and ``dA`` on trailing axes.
    """

    diagonal: np.ndarray
    pivots_applied: int
    written: dict[str, int]
    peak_stored: int
    peak_offdiag: int
    final_offdiag: int
    unbuffered_total: int
    cell_size: int
    history: np.ndarray
    step_ends: np.ndarray
    buffered: bool
    db: np.ndarray | None = None
    dA: np.ndarray | None = None

    @property
    def probabilities(self) -> np.ndarray:
        return self.diagonal.real

    @property
    def amplitudes_written(self) -> int:
        return sum(self.written.values())

    @property
    def peak_buffer(self) -> int:
        """Peak number of stored cells (diagonal plus buffered off-diagonal)."""
        return self.peak_stored

    @property
    def peak_buffer_bytes(self) -> int:
        return self.peak_stored * self.cell_size * BYTES_PER_COMPLEX

    @property
    def unbuffered_bytes(self) -> int:
        return self.unbuffered_total * self.cell_size * BYTES_PER_COMPLEX

    def counters(self) -> dict:
        return {
            "pivots_applied": self.pivots_applied,
            "amplitudes_written": dict(self.written),
            "peak_buffer": self.peak_stored,
            "peak_buffer_bytes": self.peak_buffer_bytes,
            "final_offdiag": self.final_offdiag,
            "unbuffered_total": self.unbuffered_total,
        }


def _compute(params: GaussianData, store: BufferedStore, step: _Step, fast: bool, grad: bool, P: int):
    D = params.D
    reads = np.zeros((D, P), dtype=np.complex128)
    for l, r in step.reads:
        reads[l] = np.sqrt(step.k[l]) * store.peek(r)
    pivot = None if fast else np.asarray(store.peek(step.k)).reshape(P)
    return hypercross(params.A, params.b, step.k, pivot, reads, step.dirs, grad)


def _commit(store: BufferedStore, step: _Step, out: np.ndarray) -> None:
    for _, r in step.reads:
        store.consume(r)
    if step.reads_pivot:
        store.consume(step.k)
    for t, v, n in zip(step.targets, out, step.target_reads):
        store.write(t, v, reads=n)


def execute_plan(
    params: GaussianData,
    plan: PivotPlan,
    *,
    buffered: bool = True,
    threads: int = 1,
    grad: bool = False,
) -> tuple[BufferedStore, list[int], list[int]]:
    """Run ``plan`` on ``params`` and return the store with its occupancy history.

    Pivots of one ``(S, group)`` only read cells written by earlier groups, so they
    are computed from a frozen store (in parallel when ``threads > 1``) and
    committed in plan order.
    """
    if params.representation is not Representation.DENSITY_MATRIX:
        raise ValidationError("detection probabilities need density-matrix parameters")
    if params.D != 2 * plan.M:
        raise ValidationError(f"parameters have D={params.D}, plan expects {2 * plan.M}")
    fast = not plan.displaced
    if fast and (params.displaced or grad):
        raise ValidationError("the no-displacement plan needs b = 0 and no gradients")
    P = bundle_size(params.D, grad)
    store = BufferedStore(plan.diag_shape, (P,), evict=buffered)
    seed = np.zeros(P, dtype=np.complex128)
    seed[0] = params.G0
    store.write((0,) * params.D, seed)
    history: list[int] = []
    ends: dict[int, int] = {}
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        for S, _, lo, hi in plan.groups:
            group = plan.steps[lo:hi]
            if pool is None or len(group) < 2:
                for step in group:
                    _commit(store, step, _compute(params, store, step, fast, grad, P))
                    history.append(store.stored)
            else:
                outs = list(pool.map(lambda s: _compute(params, store, s, fast, grad, P), group))
                for step, out in zip(group, outs):
                    _commit(store, step, out)
                    history.append(store.stored)
            # a later group of the same S overwrites the entry
            ends[S] = len(history) - 1
    finally:
        if pool is not None:
            pool.shutdown()
    return store, history, [e for e in ends.values() if e >= 0]


def run_gbs(
    params: GaussianData,
    cutoffs: Sequence[int],
    buffered: bool = True,
    *,
    threads: int = 1,
    fast: bool | None = None,
    grad: bool = False,
    check_real: bool = True,
) -> GBSResult:
    """Probabilities ``p(n)`` for all patterns below ``cutoffs``.

    ``fast`` selects the odd-weight-only schedule and defaults to ``b == 0`` without
    gradients. With ``buffered`` every off-diagonal amplitude is dropped after its
    last planned read, so the store ends up holding the diagonal only.
    """
    M = params.modes
    cutoffs = tuple(int(c) for c in cutoffs)
    if len(cutoffs) != M or min(cutoffs, default=0) < 1:
        raise ValidationError(f"need {M} cutoffs >= 1, got {cutoffs}")
    if fast is None:
        fast = not params.displaced and not grad
    keep = [j for j, c in enumerate(cutoffs) if c > 1]
    if len(keep) < M:
        return _with_vacuum_modes(params, cutoffs, keep, buffered, threads, fast, grad, check_real)
    plan = plan_pivots(M, cutoffs, displaced=not fast)
    return _run(params, plan, buffered, threads, grad, check_real)


def _with_vacuum_modes(params, cutoffs, keep, buffered, threads, fast, grad, check_real) -> GBSResult:
    # A unit cutoff pins its mode to vacuum, where the diagonal guard admits no
    # pivot that could seed the next mode. Those index pairs never enter the
    # recurrence, so the walk runs on the remaining modes and unit axes are
    # re-inserted afterwards.
    D = params.D
    if keep:
        res = run_gbs(select_modes(params, keep), [cutoffs[j] for j in keep], buffered,
                      threads=threads, fast=fast, grad=grad, check_real=check_real)
    else:
        res = GBSResult(
            diagonal=np.array(params.G0, dtype=np.complex128), pivots_applied=0,
            written={k: int(k == "offset0") for k in OFFSET_TYPES}, peak_stored=1,
            peak_offdiag=0, final_offdiag=0, unbuffered_total=1,
            cell_size=bundle_size(D, grad), history=np.array([1]),
            step_ends=np.zeros(0, dtype=np.int64), buffered=buffered,
        )
        if grad:
            res.db = np.zeros(D, dtype=np.complex128)
            res.dA = np.zeros((D, D), dtype=np.complex128)
    res.diagonal = res.diagonal.reshape(cutoffs)
    if grad:
        idx = np.array([x for j in keep for x in (2 * j, 2 * j + 1)], dtype=np.int64)
        db = np.zeros(cutoffs + (D,), dtype=np.complex128)
        dA = np.zeros(cutoffs + (D, D), dtype=np.complex128)
        if keep:
            db[..., idx] = res.db.reshape(cutoffs + (len(idx),))
            dA[..., idx[:, None], idx[None, :]] = res.dA.reshape(cutoffs + (len(idx), len(idx)))
        res.db, res.dA = db, dA
    return res


def _run(params, plan, buffered, threads, grad, check_real) -> GBSResult:
    store, history, step_ends = execute_plan(
        params, plan, buffered=buffered, threads=threads, grad=grad
    )
    if buffered and store.n_offdiag:
        raise SchedulerError(f"{store.n_offdiag} off-diagonal amplitudes were never read")
    values = store.diagonal
    diag = values[..., 0]
    if check_real and not grad:
        scale = max(1.0, float(np.max(np.abs(diag), initial=0.0)))
        resid = float(np.max(np.abs(diag.imag), initial=0.0))
        if resid > IMAG_TOL * scale:
            raise SchedulerError(f"probabilities carry an imaginary residue of {resid:.3e}")
    D = params.D
    result = GBSResult(
        diagonal=diag.copy(),
        pivots_applied=plan.pivot_count,
        written=dict(store.written),
        peak_stored=store.peak_stored,
        peak_offdiag=store.peak_offdiag,
        final_offdiag=store.n_offdiag,
        unbuffered_total=store.total_written,
        cell_size=store.cell_size,
        history=np.asarray(history, dtype=np.int64),
        step_ends=np.asarray(step_ends, dtype=np.int64),
        buffered=buffered,
    )
    if grad:
        result.db = values[..., 1 : 1 + D].copy()
        result.dA = values[..., 1 + D :].reshape(values.shape[:-1] + (D, D)).copy()
    return result


def run_gbs_global_cutoff(
    params: GaussianData,
    n_max: int,
    *,
    buffered: bool = True,
    threads: int = 1,
    fast: bool | None = None,
) -> tuple[dict[tuple[int, ...], float], GBSResult]:
    """Probabilities of all patterns with fewer than ``n_max`` photons in total."""
    if fast is None:
        fast = not params.displaced
    plan = plan_pivots(params.modes, n_max=n_max, displaced=not fast)
    result = _run(params, plan, buffered, threads, False, True)
    probs = {}
    for S in range(n_max):
        for n in compositions(S, (S + 1,) * params.modes):
            n = tuple(int(x) for x in n)
            probs[n] = float(result.probabilities[n])
    return probs, result


def pivot_count_local(cutoffs: Sequence[int]) -> int:
    """``(C_1 - 1) prod_{i>1} C_i + sum_K (C_K - 1) prod_{i>K} C_i``."""
    c = [int(x) for x in cutoffs]
    total = (c[0] - 1) * prod(c[1:])
    for K in range(len(c)):
        total += (c[K] - 1) * prod(c[K + 1 :])
    return total


def pivot_count_global(M: int, n_max: int) -> int:
    """Binomial closed form ``C(N+M-1, N) + C(N+M, N) - 1`` as usually quoted."""
    return comb(n_max + M - 1, n_max) + comb(n_max + M, n_max) - 1


def pivot_count_global_sum(M: int, n_max: int) -> int:
    """Pivots that do work under a total-photon bound, summed over photon numbers.

    Pivots at photon number ``n_max - 1`` would only write beyond the bound, so
    the sum stops one level earlier and equals ``C(N+M-2, N-2) + C(N+M-1, N-1) - 1``.
    For ``M = 1`` this is the local count ``2N - 2``; it never equals
    :func:`pivot_count_global`.
    """
    total = 0
    for N in range(n_max - 1):
        total += comb(N + M - 1, N)
        total += sum(comb(N + M - K, N) for K in range(1, M + 1))
    return total


def written_closed_form(M: int, C: int) -> dict[str, int]:
    """Written amplitudes per offset type for ``M`` modes with equal cutoff ``C``."""
    off1 = (C - 1) * C ** (M - 1) + (C - 2) * C ** (M - 1)
    if M >= 2:
        off1 += (2 * M - 2) * (C - 1) ** 2 * C ** (M - 2)
    cross = (C - 1) ** 2 * sum((M - K - 1) * C ** (M - K - 2) for K in range(M - 1))
    return {
        "offset1": off1,
        "offset0": C**M,
        "offset2": (C - 2) * sum(C ** (M - K - 1) for K in range(M)),
        "offset1010": cross,
        "offset1001": cross,
    }


def _dry_params(M: int) -> GaussianData:
    D = 2 * M
    return GaussianData(
        A=np.zeros((D, D), complex), b=np.zeros(D, complex), G0=1.0,
        representation=Representation.DENSITY_MATRIX, modes=M,
    )


def count_written(M: int, cutoffs: Sequence[int]) -> dict[str, int]:
    """Measured written-amplitude counts of the general schedule.

    For equal cutoffs the measurement is checked against :func:`written_closed_form`
    and a mismatch raises :class:`SchedulerError`.
    """
    cutoffs = tuple(int(c) for c in cutoffs)
    plan = plan_pivots(M, cutoffs, displaced=True)
    store, _, _ = execute_plan(_dry_params(M), plan, buffered=True)
    measured = {k: store.written[k] for k in OFFSET_TYPES}
    if len(set(cutoffs)) == 1:
        expected = written_closed_form(M, cutoffs[0])
        if measured != expected:
            raise SchedulerError(f"written counts {measured} differ from {expected}")
    return measured
