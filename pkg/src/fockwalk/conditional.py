"""Conditional density matrices of undetected modes, one per detection pattern.

The undetected modes are moved to the front of the Fock index. The block of
amplitudes with no detected photons is filled first by a plain walk over the
undetected indices only. After that the detection-probability schedule of
:mod:`fockwalk.gbs` runs over the detected modes with whole blocks as values:
a coarse pivot ``X`` stands for every fine pivot ``[f, X]`` inside its block,
and one coarse write in detected direction ``d`` evaluates all fine writes
``[f, X + 1_d]`` at once.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import prod
from typing import Iterator, Sequence

import numpy as np

from fockwalk.gaussian_core import GaussianData, Representation, ValidationError, select_modes
from fockwalk.gbs import plan_pivots
from fockwalk.lattice import BYTES_PER_COMPLEX, BufferedStore, Local
from fockwalk.vanilla import bundle_size, fill_full, hypercross

__all__ = ["ConditionalBatch", "run_conditional", "complexity_counter", "split_modes"]


@dataclass
class ConditionalBatch:
    """Unnormalized conditional states for every detection pattern.

    ``blocks`` has shape ``detected_cutoffs + block_shape`` where ``block_shape``
    pairs the bra and ket index of each undetected mode, ``(C_u1, C_u1, C_u2, ...)``.
    Modes are 1-based and listed in ascending order on both sides.
    """

    detected_modes: tuple[int, ...]
    undetected_modes: tuple[int, ...]
    detected_cutoffs: tuple[int, ...]
    undetected_cutoffs: tuple[int, ...]
    blocks: np.ndarray
    step1_pivots: int
    coarse_pivots: int
    written_blocks: dict[str, int]
    peak_stored_blocks: int
    cell_size: int
    db: np.ndarray | None = None
    dA: np.ndarray | None = None

    @property
    def detected_pattern_shape(self) -> tuple[int, ...]:
        return self.detected_cutoffs

    @property
    def block_size(self) -> int:
        return prod(self.undetected_cutoffs) ** 2

    @property
    def fine_pivots(self) -> int:
        return self.step1_pivots + self.block_size * self.coarse_pivots

    @property
    def peak_buffer_bytes(self) -> int:
        return self.peak_stored_blocks * self.cell_size * BYTES_PER_COMPLEX

    def matrix(self, pattern: Sequence[int]) -> np.ndarray:
        """Block of ``pattern`` as a ``rho[m, n]`` matrix over the undetected modes."""
        return _as_matrix(self.blocks[tuple(pattern)], len(self.undetected_cutoffs))

    def probabilities(self) -> np.ndarray:
        """Trace of every block; equals the probability of the detection pattern."""
        mats = _as_matrix(self.blocks, len(self.undetected_cutoffs), batch=len(self.detected_cutoffs))
        return np.trace(mats, axis1=-2, axis2=-1).real

    def records(self) -> Iterator[tuple[tuple[int, ...], float, np.ndarray]]:
        probs = self.probabilities()
        for pattern in np.ndindex(*self.detected_cutoffs):
            yield pattern, float(probs[pattern]), self.matrix(pattern)


def _as_matrix(block: np.ndarray, u: int, batch: int = 0) -> np.ndarray:
    lead = tuple(range(batch))
    bra = tuple(batch + 2 * j for j in range(u))
    ket = tuple(batch + 2 * j + 1 for j in range(u))
    t = np.transpose(block, lead + bra + ket)
    n = prod(block.shape[batch + 2 * j] for j in range(u))
    return t.reshape(block.shape[:batch] + (n, n))


def split_modes(M: int, undetected: Sequence[int]) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Sorted 1-based ``(undetected, detected)`` mode tuples, validated."""
    und = tuple(sorted({int(x) for x in undetected}))
    if not und:
        raise ValidationError("no undetected modes: use the detection-probability schedule")
    if len(und) == M:
        raise ValidationError("no detected modes: use the full walk")
    if und[0] < 1 or und[-1] > M:
        raise ValidationError(f"undetected modes {und} outside 1..{M}")
    det = tuple(j for j in range(1, M + 1) if j not in und)
    return und, det


def _shifted(block: np.ndarray, axis: int) -> np.ndarray:
    """``sqrt(f_axis) * block[f - e_axis]`` with zero where ``f_axis == 0``."""
    out = np.zeros_like(block)
    n = block.shape[axis]
    if n < 2:
        return out
    scale = np.sqrt(np.arange(1, n, dtype=float)).reshape((-1,) + (1,) * (block.ndim - axis - 1))
    src = [slice(None)] * block.ndim
    dst = [slice(None)] * block.ndim
    src[axis] = slice(0, n - 1)
    dst[axis] = slice(1, n)
    out[tuple(dst)] = scale * block[tuple(src)]
    return out


def run_conditional(
    params: GaussianData,
    cutoffs: Sequence[int],
    undetected: Sequence[int],
    *,
    buffered: bool = True,
    grad: bool = False,
) -> ConditionalBatch:
    """Unnormalized conditional states of the ``undetected`` (1-based) modes."""
    if params.representation is not Representation.DENSITY_MATRIX:
        raise ValidationError("conditional states need density-matrix parameters")
    M = params.modes
    cutoffs = tuple(int(c) for c in cutoffs)
    if len(cutoffs) != M:
        raise ValidationError(f"need {M} cutoffs, got {len(cutoffs)}")
    und, det = split_modes(M, undetected)
    cu = tuple(cutoffs[j - 1] for j in und)
    cd = tuple(cutoffs[j - 1] for j in det)
    # detected modes with a unit cutoff stay in vacuum and drop out of the walk
    walked = tuple(j for j in det if cutoffs[j - 1] > 1)
    order = [j - 1 for j in und + walked]
    data = select_modes(params, order)
    cw = tuple(cutoffs[j - 1] for j in walked)
    u, D = len(und), data.D
    F = 2 * u
    P = bundle_size(D, grad)

    # block without detected photons: walk the undetected indices only
    sub = GaussianData(
        data.A[:F, :F], data.b[:F], data.G0, Representation.DENSITY_MATRIX, u, flags=data.flags
    )
    first = fill_full(sub, Local(cu), grad=grad)
    seed = np.zeros(first.tensor.shape + (P,), dtype=np.complex128)
    seed[..., 0] = first.tensor
    if grad:
        for m in range(F):
            seed[..., 1 + m] = first.db[..., m]
            seed[..., 1 + D + m * D : 1 + D + m * D + F] = first.dA[..., m, :]
    block_shape = first.tensor.shape

    plan = plan_pivots(len(walked), cw, displaced=True) if walked else None
    store = BufferedStore(cw, block_shape + (P,), evict=buffered)
    store.write((0,) * (2 * len(walked)), seed)
    for step in plan.steps if plan else ():
        X = step.k
        pivot = np.asarray(store.peek(X))
        reads = np.zeros((D,) + pivot.shape, dtype=np.complex128)
        for l in range(F):
            reads[l] = _shifted(pivot, l)
        for l, r in step.reads:
            reads[F + l] = np.sqrt(X[l]) * store.peek(r)
        if step.dirs:
            out = hypercross(
                data.A, data.b, (0,) * F + X, pivot, reads, [F + d for d in step.dirs], grad
            )
        for _, r in step.reads:
            store.consume(r)
        if step.reads_pivot:
            store.consume(X)
        for n, (t, uses) in enumerate(zip(step.targets, step.target_reads)):
            store.write(t, out[n], reads=uses)

    values = store.diagonal
    batch = ConditionalBatch(
        detected_modes=det,
        undetected_modes=und,
        detected_cutoffs=cd,
        undetected_cutoffs=cu,
        blocks=values[..., 0].reshape(cd + block_shape).copy(),
        step1_pivots=first.pivots,
        coarse_pivots=plan.pivot_count if plan else 0,
        written_blocks=dict(store.written),
        peak_stored_blocks=store.peak_stored,
        cell_size=store.cell_size,
    )
    if grad:
        values = values.reshape(cd + values.shape[len(cw):])
        batch.db, batch.dA = _unpermute_grad(values, D, order, params.D)
    return batch


def _unpermute_grad(values: np.ndarray, D: int, order: Sequence[int], full_D: int):
    """Gradient channels in the caller's parameter order; dropped modes get zeros."""
    fock = np.array([2 * j + s for j in order for s in (0, 1)], dtype=np.int64)
    lead = values.shape[:-1]
    db = np.zeros(lead + (full_D,), dtype=np.complex128)
    dA = np.zeros(lead + (full_D, full_D), dtype=np.complex128)
    db[..., fock] = values[..., 1 : 1 + D]
    dA[..., fock[:, None], fock[None, :]] = values[..., 1 + D :].reshape(lead + (D, D))
    return db, dA


def complexity_counter(run: ConditionalBatch) -> int:
    """Fine-grained pivots applied by a conditional run."""
    return run.fine_pivots
