"""Amplitudes walked together with their derivatives with respect to ``A`` and ``b``.

Every lattice cell carries a bundle of ``1 + D + D**2`` complex numbers:
the amplitude, ``dG/db_m`` and ``dG/dA_mn`` (row-major in ``m, n``). Differentiating
the recurrence gives recurrences of the same shape plus two source terms,

    dG[k+1_i]/db_m  gets  G[k]                 when i == m
    dG[k+1_i]/dA_mn gets  sqrt(k_n) G[k-1_n]   when i == m

so one walk fills all three. ``G0`` is held fixed; a caller whose loss depends
on the normalization adds ``G / G0 * dG0`` through :func:`chain_rule`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import MutableMapping, Sequence

import numpy as np

from fockwalk.conditional import ConditionalBatch, run_conditional
from fockwalk.gaussian_core import GaussianData, ValidationError
from fockwalk.gbs import GBSResult, plan_pivots, _run
from fockwalk.lattice import CutoffSpec, SchedulerError
from fockwalk.vanilla import Fill, bundle_size, fill_full, hypercross, hypercross_step

__all__ = [
    "GradientBundle",
    "seed_bundle",
    "apply_pivot_with_grad",
    "fill_full_with_grad",
    "run_gbs_with_grad",
    "run_conditional_with_grad",
    "contract_upstream",
    "chain_rule",
    "memory_ratio",
]


@dataclass(frozen=True)
class GradientBundle:
    value: complex
    db: np.ndarray
    dA: np.ndarray

    @property
    def D(self) -> int:
        return len(self.db)

    def pack(self) -> np.ndarray:
        return np.concatenate([[self.value], self.db, self.dA.reshape(-1)]).astype(np.complex128)

    @classmethod
    def unpack(cls, packed: np.ndarray, D: int) -> "GradientBundle":
        packed = np.asarray(packed)
        if packed.shape != (bundle_size(D, True),):
            raise ValidationError(f"bundle for D={D} needs {bundle_size(D, True)} values")
        return cls(complex(packed[0]), packed[1 : 1 + D].copy(), packed[1 + D :].reshape(D, D).copy())


def seed_bundle(params: GaussianData) -> GradientBundle:
    D = params.D
    return GradientBundle(params.G0, np.zeros(D, complex), np.zeros((D, D), complex))


def apply_pivot_with_grad(
    params: GaussianData,
    store: MutableMapping,
    pivot: Sequence[int],
    bounds: CutoffSpec,
    dirs=None,
) -> tuple[tuple[int, ...], ...]:
    """Bundle version of :func:`fockwalk.vanilla.apply_pivot` on a dict of bundles."""
    D = params.D
    step = hypercross_step(pivot, bounds, dirs)
    if not step.write:
        return ()
    k = step.pivot
    try:
        centre = store[k].pack()
    except KeyError:
        raise SchedulerError(f"pivot {k} has not been written") from None
    reads = np.zeros((D, bundle_size(D, True)), dtype=np.complex128)
    for l in range(D):
        if k[l] > 0:
            r = k[:l] + (k[l] - 1,) + k[l + 1 :]
            try:
                reads[l] = np.sqrt(k[l]) * store[r].pack()
            except KeyError:
                raise SchedulerError(f"pivot {k} reads unwritten amplitude {r}") from None
    out = hypercross(params.A, params.b, k, centre, reads, step.write_dirs, grad=True)
    for t, v in zip(step.write, out):
        store[t] = GradientBundle.unpack(v, D)
    return step.write


def fill_full_with_grad(params: GaussianData, bounds: CutoffSpec, *, threads: int = 1) -> Fill:
    """:func:`fockwalk.vanilla.fill_full` with ``db`` and ``dA`` filled in."""
    return fill_full(params, bounds, grad=True, threads=threads)


def run_gbs_with_grad(
    params: GaussianData, cutoffs: Sequence[int], buffered: bool = True, *, threads: int = 1
) -> GBSResult:
    """Detection probabilities with their bundles; always uses the general schedule.

    Even for ``b = 0`` the derivatives with respect to ``b`` are non-zero, so the
    odd-weight-only shortcut does not apply.
    """
    plan = plan_pivots(params.modes, cutoffs, displaced=True)
    return _run(params, plan, buffered, threads, True, False)


def run_conditional_with_grad(
    params: GaussianData, cutoffs: Sequence[int], undetected: Sequence[int], buffered: bool = True
) -> ConditionalBatch:
    return run_conditional(params, cutoffs, undetected, buffered=buffered, grad=True)


def _grads_of(bundles):
    if isinstance(bundles, tuple):
        return bundles
    if getattr(bundles, "db", None) is None:
        raise ValidationError("result carries no gradient bundles")
    return bundles.db, bundles.dA


def contract_upstream(upstream: np.ndarray, bundles) -> tuple[np.ndarray, np.ndarray]:
    """``dL/db*`` and ``dL/dA*`` from the upstream gradient ``dL/dG*``.

    ``bundles`` is a gradient-carrying result (full fill, detection run or
    conditional batch) or a ``(db, dA)`` pair whose leading axes match ``upstream``.
    """
    db, dA = _grads_of(bundles)
    upstream = np.asarray(upstream)
    lead = db.shape[:-1]
    if upstream.shape != lead:
        raise ValidationError(f"upstream shape {upstream.shape} does not match {lead}")
    axes = list(range(upstream.ndim))
    dL_db = np.tensordot(upstream, db.conj(), axes=(axes, axes))
    dL_dA = np.tensordot(upstream, dA.conj(), axes=(axes, axes))
    return dL_db, dL_dA


def chain_rule(values: np.ndarray, bundles, G0: complex, dA: np.ndarray, db: np.ndarray, dG0: complex) -> np.ndarray:
    """Derivative of every retained amplitude along a parameter direction.

    ``dA``, ``db`` and ``dG0`` are the derivatives of the recurrence parameters with
    respect to one real circuit parameter. The amplitudes are holomorphic in
    ``A`` and ``b`` and proportional to ``G0``, hence
    ``dG = dG/dA : dA + dG/db . db + G / G0 * dG0``.
    """
    gb, gA = _grads_of(bundles)
    out = np.tensordot(gb, db, axes=([-1], [0]))
    out = out + np.tensordot(gA, dA, axes=([-2, -1], [0, 1]))
    return out + values / G0 * dG0


def memory_ratio(with_grad, without_grad) -> float:
    """Stored complex values of a bundle run over those of a value-only run.

    Detection and conditional runs compare peak buffer bytes; full fills compare
    the number of stored values.
    """
    if hasattr(with_grad, "peak_buffer_bytes"):
        return with_grad.peak_buffer_bytes / without_grad.peak_buffer_bytes
    return with_grad.bundle_values / without_grad.bundle_values
