"""Full-lattice application of the Fock recurrence.

Every amplitude ``G[k + 1_i]`` follows from the pivot ``G[k]`` and its lower
neighbours ``G[k - 1_l]``::

    G[k + 1_i] = (b_i G[k] + sum_l sqrt(k_l) A_il G[k - 1_l]) / sqrt(k_i + 1)

This module holds the kernel shared by every scheduler in the package, the
single-pivot operations, and :func:`fill_full`, which walks the whole bounded
lattice weight by weight. ``fill_full`` is the production state-vector path and
the brute-force reference for the selective density-matrix schedules.

Inside one weight class every target cell is owned by exactly one pivot,
``t - 1_j`` with ``j`` the first non-zero entry of ``t``, so the walk is free of
write conflicts and gives bit-identical results for any thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import MutableMapping, Sequence

import numpy as np

from fockwalk.gaussian_core import GaussianData, ValidationError
from fockwalk.lattice import (
    CutoffSpec,
    GlobalWeight,
    Local,
    ProbabilityMass,
    SchedulerError,
    compositions,
    in_bounds,
    index_bounds,
)

__all__ = [
    "HypercrossStep",
    "hypercross_step",
    "hypercross",
    "bundle_size",
    "apply_pivot",
    "apply_pivot_no_displacement",
    "fill_by_pivots",
    "Fill",
    "fill_full",
    "count_full_pivots",
]


def bundle_size(D: int, grad: bool) -> int:
    """Complex values per lattice cell: 1, or ``1 + D + D**2`` with gradients."""
    return 1 + D + D * D if grad else 1


def hypercross(A, b, k, pivot, reads, dirs, grad: bool = False) -> np.ndarray:
    """Values written by one hypercross in directions ``dirs``.

    Args:
        A, b: recurrence parameters (Fock-index order).
        k: pivot index, length ``D``.
        pivot: pivot value with trailing bundle axis ``(..., P)``, or ``None`` to
            drop the ``b`` term (no displacement).
        reads: ``(D, ..., P)`` lower neighbours already multiplied by ``sqrt(k_l)``;
            rows with ``k_l == 0`` are zero.
        dirs: write directions.
        grad: whether the bundles carry ``dG/db`` and ``dG/dA`` after the value.

    Returns:
        array ``(len(dirs), ..., P)``.
    """
    dirs = np.asarray(dirs, dtype=np.int64)
    k = np.asarray(k)
    out = np.tensordot(A[dirs], reads, axes=(1, 0))
    if pivot is not None:
        out += b[dirs].reshape((-1,) + (1,) * pivot.ndim) * pivot[None]
    if grad:
        D = len(b)
        for n, i in enumerate(dirs):
            out[n, ..., 1 + i] += pivot[..., 0]
            out[n, ..., 1 + D + i * D : 1 + D + (i + 1) * D] += np.moveaxis(reads[..., 0], 0, -1)
    out /= np.sqrt(k[dirs] + 1.0).reshape((-1,) + (1,) * (out.ndim - 1))
    return out


@dataclass(frozen=True)
class HypercrossStep:
    pivot: tuple[int, ...]
    read: tuple[tuple[int, ...], ...]
    write: tuple[tuple[int, ...], ...]
    write_dirs: tuple[int, ...]


def hypercross_step(pivot: Sequence[int], bounds: CutoffSpec, dirs=None) -> HypercrossStep:
    """Read and write groups of ``pivot``, restricted to in-bounds indices."""
    k = tuple(int(x) for x in pivot)
    D = len(k)
    read = tuple(k[:l] + (k[l] - 1,) + k[l + 1 :] for l in range(D) if k[l] > 0)
    write, write_dirs = [], []
    for i in range(D) if dirs is None else dirs:
        t = k[:i] + (k[i] + 1,) + k[i + 1 :]
        if in_bounds(t, bounds):
            write.append(t)
            write_dirs.append(i)
    return HypercrossStep(k, read, tuple(write), tuple(write_dirs))


def _reads_from(store, k, D, P=1):
    reads = np.zeros((D, P), dtype=np.complex128)
    for l in range(D):
        if k[l] > 0:
            r = k[:l] + (k[l] - 1,) + k[l + 1 :]
            try:
                reads[l] = np.sqrt(k[l]) * np.asarray(store[r]).reshape(P)
            except KeyError:
                raise SchedulerError(f"pivot {k} reads unwritten amplitude {r}") from None
    return reads


def apply_pivot(
    params: GaussianData,
    store: MutableMapping,
    pivot: Sequence[int],
    bounds: CutoffSpec,
    dirs=None,
) -> tuple[tuple[int, ...], ...]:
    """Apply one hypercross to a dict-like ``store`` and return the written indices.

    Indices below zero contribute nothing; a missing in-bounds read raises
    :class:`SchedulerError`.
    """
    step = hypercross_step(pivot, bounds, dirs)
    if not step.write:
        return ()
    k = step.pivot
    try:
        value = np.asarray([store[k]], dtype=np.complex128)
    except KeyError:
        raise SchedulerError(f"pivot {k} has not been written") from None
    reads = _reads_from(store, k, params.D)
    out = hypercross(params.A, params.b, k, value, reads, step.write_dirs)
    for t, v in zip(step.write, out[:, 0]):
        store[t] = v
    return step.write


def apply_pivot_no_displacement(
    params: GaussianData,
    store: MutableMapping,
    pivot: Sequence[int],
    bounds: CutoffSpec,
    dirs=None,
) -> tuple[tuple[int, ...], ...]:
    """As :func:`apply_pivot` for ``b = 0``; the pivot value itself is never read."""
    if params.displaced:
        raise ValidationError("apply_pivot_no_displacement requires b = 0")
    step = hypercross_step(pivot, bounds, dirs)
    if not step.write:
        return ()
    reads = _reads_from(store, step.pivot, params.D)
    out = hypercross(params.A, params.b, step.pivot, None, reads, step.write_dirs)
    for t, v in zip(step.write, out[:, 0]):
        store[t] = v
    return step.write


def _owned_dirs(k: Sequence[int]) -> range:
    nonzero = [i for i, x in enumerate(k) if x]
    return range(len(k)) if not nonzero else range(nonzero[0] + 1)


def fill_by_pivots(params: GaussianData, bounds: Local) -> dict:
    """Pivot-by-pivot full fill on a dict store (slow; used to cross-check :func:`fill_full`)."""
    upper = index_bounds(bounds, params.D)
    store = {(0,) * params.D: params.G0}
    fast = not params.displaced
    for w in range(sum(u - 1 for u in upper)):
        if fast and w % 2 == 0:
            continue
        for k in compositions(w, upper):
            k = tuple(int(x) for x in k)
            if fast:
                apply_pivot_no_displacement(params, store, k, bounds, _owned_dirs(k))
            else:
                apply_pivot(params, store, k, bounds, _owned_dirs(k))
    return store


@dataclass
class Fill:
    """Result of :func:`fill_full`.

    ``tensor`` is dense; cells outside the bounds (or beyond the stopping weight)
    are exactly zero. With gradients, ``db`` and ``dA`` carry ``dG/db_m`` and
    ``dG/dA_mn`` on trailing axes.
    """

    tensor: np.ndarray
    pivots: int
    written: int
    max_weight: int
    stop_photons: int | None = None
    db: np.ndarray | None = None
    dA: np.ndarray | None = None

    @property
    def bundle_values(self) -> int:
        """Complex values held by the dense result, counting whole bundles."""
        P = 1 if self.db is None else 1 + self.db.shape[-1] + self.db.shape[-1] ** 2
        return self.tensor.size * P


def _encode(idx: np.ndarray, base: int) -> np.ndarray:
    code = np.zeros(len(idx), dtype=np.int64)
    for col in idx.T:
        code = code * base + col
    return code


def _layer(w: int, bounds: CutoffSpec, D: int) -> np.ndarray:
    upper = index_bounds(bounds, D)
    if upper is None:
        if isinstance(bounds, GlobalWeight) and w >= bounds.w_max:
            return np.zeros((0, D), np.int64)
        upper = (w + 1,) * D
    return compositions(w, upper)


def _lookup(codes: np.ndarray, wanted: np.ndarray) -> np.ndarray:
    pos = np.searchsorted(codes, wanted)
    if len(wanted) and (np.any(pos >= len(codes)) or np.any(codes[np.minimum(pos, len(codes) - 1)] != wanted)):
        raise SchedulerError("full fill read an index outside the computed layers")
    return pos


def _layer_values(A, b, targets, prev, prev2, base, fast, grad, P):
    """Values of all ``targets`` (one weight class) from the two previous layers."""
    D = targets.shape[1]
    n = len(targets)
    owner = np.argmax(targets > 0, axis=1)
    rows = np.arange(n)
    piv = targets.copy()
    piv[rows, owner] -= 1
    out = np.zeros((n, P), dtype=np.complex128)
    gval = None
    if not fast:
        prev_idx, prev_codes, prev_vals = prev
        gval = prev_vals[_lookup(prev_codes, _encode(piv, base))]
        out += b[owner][:, None] * gval
    if prev2 is not None:
        prev2_idx, prev2_codes, prev2_vals = prev2
        for l in range(D):
            has = piv[:, l] > 0
            if not np.any(has):
                continue
            nb = piv[has].copy()
            nb[:, l] -= 1
            r = np.sqrt(piv[has, l])[:, None] * prev2_vals[_lookup(prev2_codes, _encode(nb, base))]
            out[has] += A[owner[has], l][:, None] * r
            if grad:
                out[has, 1 + D + owner[has] * D + l] += r[:, 0]
    if grad:
        out[rows, 1 + owner] += gval[:, 0]
    out /= np.sqrt(piv[rows, owner] + 1.0)[:, None]
    return out, piv


def _diag_mask(idx: np.ndarray, density: bool) -> np.ndarray:
    if density:
        return np.all(idx[:, 0::2] == idx[:, 1::2], axis=1)
    return np.ones(len(idx), dtype=bool)


def fill_full(
    params: GaussianData,
    bounds: CutoffSpec,
    *,
    grad: bool = False,
    threads: int = 1,
    fast: bool | None = None,
) -> Fill:
    """All amplitudes admitted by ``bounds``, seeded by ``G0`` at the origin.

    Pivots are applied in order of increasing weight. With
    :class:`~fockwalk.lattice.ProbabilityMass` bounds the walk stops after the first
    weight at which the accumulated diagonal probability reaches the threshold.
    Without displacement (``fast``, the default when ``b == 0`` and no gradients
    are requested) only odd-weight pivots are applied and odd-weight amplitudes
    stay exactly zero.
    """
    D = params.D
    P = 1 + D + D * D if grad else 1
    if fast is None:
        fast = not params.displaced and not grad
    if fast and (params.displaced or grad):
        raise ValidationError("the no-displacement walk needs b = 0 and no gradients")
    upper = index_bounds(bounds, D)
    if upper is not None:
        w_stop = sum(u - 1 for u in upper)
    elif isinstance(bounds, GlobalWeight):
        w_stop = bounds.w_max - 1
    else:
        w_stop = (2 if params.is_density else 1) * bounds.max_photons
    base_cap = max(upper) if upper is not None else None

    seed = np.zeros((1, P), dtype=np.complex128)
    seed[0, 0] = params.G0
    zero = np.zeros((1, D), np.int64)
    layers = {0: (zero, np.zeros(1, np.int64), seed)}
    if upper is not None and any(u < 1 for u in upper):
        raise ValidationError("cutoffs must be >= 1")
    pivots = written = 0
    mass = float(seed[0, 0].real if params.is_density else abs(seed[0, 0]) ** 2)
    stop_photons = None
    last_w = 0
    pm = isinstance(bounds, ProbabilityMass)
    if pm and mass >= bounds.threshold:
        stop_photons = 0
        w_stop = 0
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        for w in range(1, w_stop + 1):
            last_w = w
            idx = _layer(w, bounds, D)
            base = w + 1 if base_cap is None else min(w + 1, base_cap)
            if base ** D >= 2**62:
                raise ValidationError("lattice too large for index encoding")
            if fast and w % 2:
                layers[w] = (idx, _encode(idx, base), np.zeros((len(idx), P), np.complex128))
            else:
                prev = layers.get(w - 1)
                prev2 = layers.get(w - 2)
                prev = (prev[0], _encode(prev[0], base), prev[2])
                if prev2 is not None:
                    prev2 = (prev2[0], _encode(prev2[0], base), prev2[2])
                chunks = [idx] if pool is None else np.array_split(idx, threads)
                args = (params.A, params.b)
                if pool is None:
                    results = [_layer_values(*args, idx, prev, prev2, base, fast, grad, P)]
                else:
                    results = list(
                        pool.map(
                            lambda c: _layer_values(*args, c, prev, prev2, base, fast, grad, P),
                            chunks,
                        )
                    )
                vals = np.concatenate([r[0] for r in results]) if results else np.zeros((0, P))
                piv = np.concatenate([r[1] for r in results]) if results else np.zeros((0, D))
                pivots += len(np.unique(_encode(piv, base))) if len(piv) else 0
                written += len(idx)
                layers[w] = (idx, _encode(idx, base), vals)
            if pm:
                lw = layers[w]
                diag = _diag_mask(lw[0], params.is_density)
                v = lw[2][diag, 0]
                mass += float(np.sum(v.real) if params.is_density else np.sum(np.abs(v) ** 2))
                if (not params.is_density or w % 2 == 0) and mass >= bounds.threshold:
                    stop_photons = w // 2 if params.is_density else w
                    break
        else:
            if pm and w_stop > 0:
                raise ValidationError(
                    f"probability mass {mass:.6f} below {bounds.threshold} at max_photons"
                )
    finally:
        if pool is not None:
            pool.shutdown()

    if upper is not None:
        shape = tuple(upper)
    elif isinstance(bounds, GlobalWeight):
        shape = (bounds.w_max,) * D
    else:
        shape = (last_w + 1,) * D
    full = np.zeros(shape + (P,), dtype=np.complex128)
    for w, (idx, _, vals) in layers.items():
        if len(idx) and w <= last_w:
            full[tuple(idx.T)] = vals
    result = Fill(full[..., 0], pivots, written + 1, last_w, stop_photons)
    if grad:
        result.db = full[..., 1 : 1 + D]
        result.dA = full[..., 1 + D :].reshape(shape + (D, D))
    return result


def count_full_pivots(upper: Sequence[int]) -> int:
    """Pivots used by the general (displaced) full walk on a box ``0 <= k < upper``.

    A cell is a pivot unless none of its owned directions stays in bounds.
    """
    upper = [int(u) for u in upper]
    total = int(np.prod(upper, dtype=object))
    idle = 1 if all(u == 1 for u in upper) else 0
    for j, u in enumerate(upper):
        if u >= 2 and all(v == 1 for v in upper[:j]):
            idle += int(np.prod(upper[j + 1 :], dtype=object))
    return total - idle
