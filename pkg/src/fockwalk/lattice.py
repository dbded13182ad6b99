"""Fock-index arithmetic, cutoff predicates and amplitude stores."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Iterator, Sequence, Union

import numpy as np

__all__ = [
    "Local",
    "GlobalWeight",
    "ProbabilityMass",
    "CutoffSpec",
    "SchedulerError",
    "weight",
    "index_bounds",
    "in_bounds",
    "indices_of_weight",
    "compositions",
    "split_diagonal",
    "offset_type",
    "OFFSET_TYPES",
    "BufferedStore",
    "BYTES_PER_COMPLEX",
]

BYTES_PER_COMPLEX = 16
OFFSET_TYPES = ("offset1", "offset0", "offset2", "offset1010", "offset1001")


class SchedulerError(RuntimeError):
    """A pivot schedule read an unwritten amplitude or wrote one twice."""


@dataclass(frozen=True)
class Local:
    """Per-mode photon-number cutoffs ``0 <= k < cutoffs``."""

    cutoffs: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "cutoffs", tuple(int(c) for c in self.cutoffs))


@dataclass(frozen=True)
class GlobalWeight:
    """Total weight bound ``0 <= w(k) < w_max``."""

    w_max: int


@dataclass(frozen=True)
class ProbabilityMass:
    """Stop once the accumulated detection probability reaches ``threshold``.

    ``max_photons`` caps the total photon number so that a state whose mass
    converges too slowly fails loudly instead of running away.
    """

    threshold: float
    max_photons: int = 200


CutoffSpec = Union[Local, GlobalWeight, ProbabilityMass]


def weight(k: Sequence[int]) -> int:
    return int(sum(k))


def index_bounds(bounds: CutoffSpec, D: int) -> tuple[int, ...] | None:
    """Exclusive per-index upper bounds, or ``None`` when only the weight is bounded.

    Local cutoffs are given per mode; with ``D == 2 * len(cutoffs)`` each cutoff
    bounds both indices of its mode.
    """
    if not isinstance(bounds, Local):
        return None
    cut = bounds.cutoffs
    if D == len(cut):
        return cut
    if D == 2 * len(cut):
        return tuple(c for c in cut for _ in range(2))
    raise ValueError(f"{len(cut)} cutoffs do not fit a {D}-index lattice")


def in_bounds(k: Sequence[int], bounds: CutoffSpec) -> bool:
    if any(x < 0 for x in k):
        return False
    if isinstance(bounds, GlobalWeight):
        return weight(k) < bounds.w_max
    upper = index_bounds(bounds, len(k))
    return upper is None or all(x < c for x, c in zip(k, upper))


def _bounded_compositions(w: int, upper: Sequence[int]) -> Iterator[tuple[int, ...]]:
    if len(upper) == 1:
        if w < upper[0]:
            yield (w,)
        return
    rest = sum(u - 1 for u in upper[1:])
    for first in range(max(0, w - rest), min(w, upper[0] - 1) + 1):
        for tail in _bounded_compositions(w - first, upper[1:]):
            yield (first,) + tail


def indices_of_weight(
    w: int, bounds: CutoffSpec, D: int | None = None, diagonal_only: bool = False
) -> list[tuple[int, ...]]:
    """All in-bounds indices of weight ``w`` in lexicographic order.

    ``D`` defaults to the number of local cutoffs. With ``diagonal_only`` the
    result holds paired indices ``[a, a, b, b, ...]`` whose per-mode sum
    ``a + b + ...`` equals ``w``, and ``D`` counts modes.
    """
    if w < 0:
        return []
    if D is None:
        if not isinstance(bounds, Local):
            raise ValueError("D is required for non-local bounds")
        D = len(bounds.cutoffs)
    if diagonal_only:
        if isinstance(bounds, Local):
            upper = bounds.cutoffs
        elif isinstance(bounds, GlobalWeight):
            upper = (bounds.w_max // 2 + 1,) * D
            if 2 * w >= bounds.w_max:
                return []
        else:
            upper = (w + 1,) * D
        return [tuple(x for a in n for x in (a, a)) for n in _bounded_compositions(w, upper)]
    if isinstance(bounds, GlobalWeight) and w >= bounds.w_max:
        return []
    upper = index_bounds(bounds, D) or (w + 1,) * D
    return list(_bounded_compositions(w, upper))


def compositions(w: int, upper: Sequence[int]) -> np.ndarray:
    """Integer array ``(n, D)`` of bounded compositions of ``w``, lexicographically sorted."""
    D = len(upper)
    if D == 1:
        return np.array([[w]], dtype=np.int64) if 0 <= w < upper[0] else np.zeros((0, 1), np.int64)
    rest = sum(u - 1 for u in upper[1:])
    parts = []
    for first in range(max(0, w - rest), min(w, upper[0] - 1) + 1):
        tail = compositions(w - first, upper[1:])
        if len(tail):
            parts.append(np.column_stack([np.full(len(tail), first, np.int64), tail]))
    return np.concatenate(parts) if parts else np.zeros((0, D), np.int64)


def split_diagonal(k: Sequence[int]) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Write a density-matrix index as ``diag + offset`` with a non-negative offset.

    ``diag`` holds one photon number per mode (the smaller of bra and ket) and
    ``offset`` is the 2M-long remainder.
    """
    diag = tuple(min(k[2 * j], k[2 * j + 1]) for j in range(len(k) // 2))
    offset = tuple(x - diag[i // 2] for i, x in enumerate(k))
    return diag, offset


def offset_type(offset: Sequence[int]) -> str:
    """Classify an offset as one of ``OFFSET_TYPES`` (or ``offset0110`` / ``other``)."""
    moved = [(j, offset[2 * j] - offset[2 * j + 1]) for j in range(len(offset) // 2)]
    moved = [(j, d) for j, d in moved if d]
    if not moved:
        return "offset0"
    if len(moved) == 1:
        d = moved[0][1]
        if abs(d) == 1:
            return "offset1"
        return "offset2" if d == 2 else "other"
    if len(moved) == 2 and all(abs(d) == 1 for _, d in moved):
        first, second = moved[0][1], moved[1][1]
        if first == 1:
            return "offset1010" if second == 1 else "offset1001"
        return "offset0110" if second == 1 else "other"
    return "other"


class BufferedStore:
    """Amplitude store for selective schedules on a density-matrix lattice.

    Diagonal amplitudes live in a dense tensor indexed by photon pattern and are
    kept. Off-diagonal amplitudes live in a dict keyed by ``(diag, offset)``;
    each is written once together with the number of planned reads, and with
    ``evict=True`` it is dropped after its last read. Values may carry a trailing
    ``value_shape`` (gradient bundles, conditional blocks).
    """

    def __init__(
        self,
        diag_shape: Sequence[int],
        value_shape: Sequence[int] = (),
        evict: bool = True,
        check: bool = True,
    ):
        self.diag_shape = tuple(diag_shape)
        self.value_shape = tuple(value_shape)
        self.evict = evict
        self.diagonal = np.zeros(self.diag_shape + self.value_shape, dtype=np.complex128)
        self.diag_written = np.zeros(self.diag_shape, dtype=bool)
        self.offdiag: dict[tuple, np.ndarray] = {}
        self._remaining: dict[tuple, int] = {}
        self.written = dict.fromkeys(OFFSET_TYPES, 0)
        self.n_diag = 0
        self.peak_offdiag = 0
        self.peak_stored = 0
        # evicted keys are remembered so that a second write is still caught
        self._seen: set | None = set() if check else None

    @property
    def cell_size(self) -> int:
        return int(np.prod(self.value_shape, dtype=np.int64))

    @property
    def n_offdiag(self) -> int:
        return len(self.offdiag)

    @property
    def stored(self) -> int:
        """Number of lattice cells currently held."""
        return self.n_diag + len(self.offdiag)

    @property
    def total_written(self) -> int:
        return sum(self.written.values())

    def stored_bytes(self) -> int:
        return self.stored * self.cell_size * BYTES_PER_COMPLEX

    def write(self, k: tuple[int, ...], value, reads: int = 1) -> None:
        diag, offset = split_diagonal(k)
        kind = offset_type(offset)
        if kind == "offset0":
            if self.diag_written[diag]:
                raise SchedulerError(f"diagonal amplitude {k} written twice")
            self.diagonal[diag] = value
            self.diag_written[diag] = True
            self.n_diag += 1
        else:
            if kind not in OFFSET_TYPES:
                raise SchedulerError(f"amplitude {k} has unexpected offset type {kind}")
            key = (diag, offset)
            if key in self.offdiag or (self._seen is not None and key in self._seen):
                raise SchedulerError(f"off-diagonal amplitude {k} written twice")
            if self._seen is not None:
                self._seen.add(key)
            if reads < 1:
                raise SchedulerError(f"off-diagonal amplitude {k} written but never read")
            self.offdiag[key] = np.asarray(value, dtype=np.complex128)
            self._remaining[key] = reads
            self.peak_offdiag = max(self.peak_offdiag, len(self.offdiag))
        self.written[kind] += 1
        self.peak_stored = max(self.peak_stored, self.stored)

    def peek(self, k: tuple[int, ...]) -> np.ndarray:
        """Value at ``k`` without consuming a read."""
        diag, offset = split_diagonal(k)
        if not any(offset):
            if not self.diag_written[diag]:
                raise SchedulerError(f"read of unwritten amplitude {k}")
            return self.diagonal[diag]
        try:
            return self.offdiag[(diag, offset)]
        except KeyError:
            raise SchedulerError(f"read of unwritten or evicted amplitude {k}") from None

    def read(self, k: tuple[int, ...]) -> np.ndarray:
        """Value at ``k``; consumes one planned read of an off-diagonal amplitude."""
        value = self.peek(k)
        diag, offset = split_diagonal(k)
        if any(offset):
            self.consume(k)
        return value

    def consume(self, k: tuple[int, ...]) -> None:
        diag, offset = split_diagonal(k)
        if not any(offset):
            return
        key = (diag, offset)
        left = self._remaining.get(key, 0)
        if left < 1:
            raise SchedulerError(f"amplitude {k} read more often than planned")
        left -= 1
        self._remaining[key] = left
        if left == 0 and self.evict:
            del self._remaining[key]
            del self.offdiag[key]

    def __contains__(self, k) -> bool:
        diag, offset = split_diagonal(k)
        if not any(offset):
            return bool(self.diag_written[diag])
        return (diag, offset) in self.offdiag


def all_indices(upper: Sequence[int]) -> Iterator[tuple[int, ...]]:
    return product(*(range(u) for u in upper))
