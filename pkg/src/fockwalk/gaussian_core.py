"""Gaussian states before the detectors and their recurrence parameters.

Conventions used throughout the package:

* Quadratures are ordered ``(x_1..x_M, p_1..p_M)`` with vacuum covariance ``1/2``.
* The complex covariance ``sigma`` is expressed in the ``(a_1..a_M, a†_1..a†_M)``
  basis, obtained from the quadrature covariance ``V`` through the fixed unitary
  ``W = [[1, i], [1, -i]] / sqrt(2)`` as ``sigma = W V W^†``. Vacuum is ``sigma = 1/2``.
* ``GaussianData.A`` and ``GaussianData.b`` are expressed in *Fock-index order*.
  For a state vector that is simply ``(k_1..k_M)``. For a density matrix the index
  is ``[m_1, n_1, m_2, n_2, ...]`` with ``G[m, n, p, q] = <m, p| rho |n, q>``, i.e.
  bra and ket index of each mode are adjacent.

Channel formulas applied by :func:`build_complex_state`, all in the quadrature basis:

* squeezer ``(r, phi)``: ``S = cosh(r) 1 + sinh(r) [[cos phi, sin phi], [sin phi, -cos phi]]``.
  This is the Bogoliubov map ``a -> cosh(r) a + e^{i phi} sinh(r) a†`` and produces
  ``A_psi = e^{i phi} tanh(r)`` for a single mode.
* interferometer ``U = X + iY`` acting as ``a -> U a``: ``S = [[X, -Y], [Y, X]]``.
* pure loss ``eta``: ``V -> eta V + (1 - eta)/2`` and ``mean -> sqrt(eta) mean`` mode-wise.
* displacement ``alpha``: ``mean -> mean + sqrt(2) (Re alpha, Im alpha)``.
"""

from __future__ import annotations

import enum
import json
import warnings
from dataclasses import dataclass, field
from typing import Any, Sequence, Union

import numpy as np

from fockwalk.lattice import GlobalWeight, Local, ProbabilityMass

__all__ = [
    "ValidationError",
    "DegenerateStateError",
    "PurityError",
    "Representation",
    "GlobalPhotons",
    "CircuitSpec",
    "ComplexGaussianState",
    "GaussianData",
    "build_complex_state",
    "to_density_params",
    "to_statevector_params",
    "density_from_statevector_params",
    "permute_modes",
    "select_modes",
    "spec_from_json",
    "spec_to_json",
    "load_spec",
]

UNITARY_TOL = 1e-12
HERMITIAN_TOL = 1e-12
PURITY_TOL = 1e-9


class ValidationError(ValueError):
    """Input that violates a documented invariant."""


class DegenerateStateError(ValidationError):
    """``sigma + 1/2`` is singular, so the state has no (A, b, G0) form."""


class PurityError(ValidationError):
    """A mixed state was passed where a pure state is required."""


class Representation(enum.Enum):
    STATE_VECTOR = "StateVector"
    DENSITY_MATRIX = "DensityMatrix"


@dataclass(frozen=True)
class GlobalPhotons:
    """Upper bound ``n_max`` (exclusive) on the total photon number in all modes."""

    n_max: int


CutoffMode = Union[Local, GlobalPhotons, ProbabilityMass]


def _as_complex_matrix(value: Any) -> np.ndarray:
    arr = np.asarray(value)
    if arr.dtype.kind in "iuf" and arr.ndim == 3 and arr.shape[-1] == 2:
        arr = arr[..., 0] + 1j * arr[..., 1]
    return np.asarray(arr, dtype=np.complex128)


@dataclass(frozen=True)
class CircuitSpec:
    """Squeezers, interferometer, loss, displacements and detectors on ``modes`` modes.

    ``detected_modes`` is 1-based and defaults to every mode. ``cutoff_mode`` defaults to :class:`Local`
    with ``cutoffs``.
    """

    modes: int
    squeeze_params: tuple[tuple[float, float], ...]
    interferometer: np.ndarray
    loss_transmissivity: tuple[float, ...]
    cutoffs: tuple[int, ...]
    displacements: tuple[complex, ...] = ()
    detected_modes: tuple[int, ...] | None = None
    cutoff_mode: CutoffMode | None = None

    def __post_init__(self):
        M = self.modes
        if not isinstance(M, (int, np.integer)) or M < 1:
            raise ValidationError(f"modes must be a positive integer, got {M!r}")
        sq = tuple((float(r), float(phi)) for r, phi in self.squeeze_params)
        if len(sq) != M:
            raise ValidationError(f"expected {M} squeeze parameters, got {len(sq)}")
        U = _as_complex_matrix(self.interferometer)
        if U.shape != (M, M):
            raise ValidationError(f"interferometer must be {M}x{M}, got {U.shape}")
        if np.max(np.abs(U @ U.conj().T - np.eye(M))) > UNITARY_TOL:
            raise ValidationError("interferometer is not unitary within 1e-12")
        eta = tuple(float(x) for x in self.loss_transmissivity)
        if len(eta) != M:
            raise ValidationError(f"expected {M} transmissivities, got {len(eta)}")
        if any(not 0.0 <= x <= 1.0 for x in eta):
            raise ValidationError(f"transmissivities must lie in [0, 1], got {eta}")
        disp = tuple(complex(a) for a in self.displacements) or (0j,) * M
        if len(disp) != M:
            raise ValidationError(f"expected {M} displacements, got {len(disp)}")
        cut = tuple(int(c) for c in self.cutoffs)
        if len(cut) != M or any(c < 1 for c in cut):
            raise ValidationError(f"cutoffs must be {M} integers >= 1, got {cut}")
        det = range(1, M + 1) if self.detected_modes is None else self.detected_modes
        det = tuple(sorted(int(i) for i in det))
        if len(set(det)) != len(det) or any(not 1 <= i <= M for i in det):
            raise ValidationError(f"detected_modes must be a subset of 1..{M}, got {det}")
        mode = self.cutoff_mode if self.cutoff_mode is not None else Local(cut)
        if isinstance(mode, GlobalPhotons) and mode.n_max < 1:
            raise ValidationError("GlobalPhotons.n_max must be >= 1")
        if isinstance(mode, ProbabilityMass) and not 0.0 < mode.threshold < 1.0:
            raise ValidationError("ProbabilityMass.threshold must lie in (0, 1)")
        U.setflags(write=False)
        for name, value in [
            ("squeeze_params", sq),
            ("interferometer", U),
            ("loss_transmissivity", eta),
            ("displacements", disp),
            ("cutoffs", cut),
            ("detected_modes", det),
            ("cutoff_mode", mode),
        ]:
            object.__setattr__(self, name, value)

    @property
    def is_lossless(self) -> bool:
        return all(x == 1.0 for x in self.loss_transmissivity)

    @property
    def is_displaced(self) -> bool:
        return any(a != 0 for a in self.displacements)

    @property
    def undetected_modes(self) -> tuple[int, ...]:
        return tuple(i for i in range(1, self.modes + 1) if i not in self.detected_modes)


@dataclass(frozen=True)
class ComplexGaussianState:
    sigma: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=np.complex128)
        mu = np.asarray(self.mu, dtype=np.complex128)
        if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1] or sigma.shape[0] % 2:
            raise ValidationError(f"sigma must be 2M x 2M, got {sigma.shape}")
        if mu.shape != (sigma.shape[0],):
            raise ValidationError(f"mu must have length {sigma.shape[0]}, got {mu.shape}")
        if np.max(np.abs(sigma - sigma.conj().T)) > HERMITIAN_TOL:
            raise ValidationError("sigma is not Hermitian within 1e-12")
        sigma.setflags(write=False)
        mu.setflags(write=False)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "mu", mu)

    @property
    def modes(self) -> int:
        return self.sigma.shape[0] // 2

    @property
    def purity(self) -> float:
        return float(1.0 / np.sqrt(np.linalg.det(2 * self.sigma).real))

    @classmethod
    def vacuum(cls, modes: int) -> ComplexGaussianState:
        return cls(0.5 * np.eye(2 * modes), np.zeros(2 * modes))

    @classmethod
    def thermal(cls, nbar: Sequence[float]) -> ComplexGaussianState:
        nbar = np.asarray(nbar, dtype=float)
        return cls(np.diag(np.concatenate([nbar, nbar]) + 0.5), np.zeros(2 * len(nbar)))

    @classmethod
    def coherent(cls, alpha: Sequence[complex]) -> ComplexGaussianState:
        alpha = np.asarray(alpha, dtype=np.complex128)
        return cls(0.5 * np.eye(2 * len(alpha)), np.concatenate([alpha, alpha.conj()]))


@dataclass(frozen=True)
class GaussianData:
    """``(A, b, G0)`` of the recurrence, in Fock-index order."""

    A: np.ndarray
    b: np.ndarray
    G0: complex
    representation: Representation
    modes: int
    flags: tuple[str, ...] = field(default=())

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.complex128)
        b = np.asarray(self.b, dtype=np.complex128)
        D = self.modes if self.representation is Representation.STATE_VECTOR else 2 * self.modes
        if A.shape != (D, D) or b.shape != (D,):
            raise ValidationError(
                f"{self.representation.value} on {self.modes} modes needs A {D}x{D} "
                f"and b of length {D}, got {A.shape} and {b.shape}"
            )
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "G0", complex(self.G0))
        flags = tuple(self.flags)
        if D and np.max(np.abs(np.linalg.eigvals(A))) >= 1.0 and "unphysical" not in flags:
            flags += ("unphysical",)
            warnings.warn("spectral radius of A is >= 1; amplitudes may not decay", stacklevel=3)
        object.__setattr__(self, "flags", flags)

    @property
    def D(self) -> int:
        return self.b.shape[0]

    @property
    def displaced(self) -> bool:
        return bool(np.any(self.b != 0))

    @property
    def is_density(self) -> bool:
        return self.representation is Representation.DENSITY_MATRIX

    def replace(self, **changes) -> GaussianData:
        fields = dict(
            A=self.A, b=self.b, G0=self.G0, representation=self.representation, modes=self.modes
        )
        fields.update(changes)
        return GaussianData(**fields)


def _block_swap(M: int) -> np.ndarray:
    P = np.zeros((2 * M, 2 * M))
    P[:M, M:] = np.eye(M)
    P[M:, :M] = np.eye(M)
    return P


def _to_complex_basis(V: np.ndarray, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    M = V.shape[0] // 2
    one = np.eye(M)
    # unnormalised W keeps exact inputs exact; its 1/sqrt(2) is applied once as 1/2
    W = np.block([[one, 1j * one], [one, -1j * one]])
    sigma = 0.5 * (W @ V @ W.conj().T)
    return 0.5 * (sigma + sigma.conj().T), (W @ r) / np.sqrt(2)


def build_complex_state(spec: CircuitSpec) -> ComplexGaussianState:
    """Pre-detector state of ``spec``: vacuum, squeezers, interferometer, loss, displacements."""
    M = spec.modes
    V = 0.5 * np.eye(2 * M)
    r = np.zeros(2 * M)

    S = np.eye(2 * M)
    for i, (sq, phi) in enumerate(spec.squeeze_params):
        c, s = np.cosh(sq), np.sinh(sq)
        S[i, i] = c + s * np.cos(phi)
        S[i, M + i] = s * np.sin(phi)
        S[M + i, i] = s * np.sin(phi)
        S[M + i, M + i] = c - s * np.cos(phi)
    V = S @ V @ S.T

    X, Y = spec.interferometer.real, spec.interferometer.imag
    S = np.block([[X, -Y], [Y, X]])
    V = S @ V @ S.T

    eta = np.array(spec.loss_transmissivity)
    if np.any(eta != 1.0):
        root = np.sqrt(np.concatenate([eta, eta]))
        V = root[:, None] * V * root[None, :] + np.diag(0.5 * (1 - root**2))
        r = root * r

    V = 0.5 * (V + V.T)
    if spec.is_displaced:
        alpha = np.array(spec.displacements)
        r = r + np.sqrt(2) * np.concatenate([alpha.real, alpha.imag])
    sigma, mu = _to_complex_basis(V, r)
    if not spec.is_displaced:
        mu = np.zeros(2 * M, dtype=np.complex128)
    return ComplexGaussianState(sigma, mu)


def _fock_order(M: int) -> np.ndarray:
    # bra of mode j sits in the a† block, ket in the a block
    return np.array([x for j in range(M) for x in (M + j, j)])


def to_density_params(state: ComplexGaussianState) -> GaussianData:
    """``A = P sigma_- sigma_+^{-1}``, ``b = P sigma_+^{-1} mu``, ``G0 = rho_0``."""
    M = state.modes
    one = np.eye(2 * M)
    sigma_plus = state.sigma + 0.5 * one
    sigma_minus = state.sigma - 0.5 * one
    if np.linalg.cond(sigma_plus) > 1e12:
        raise DegenerateStateError("sigma + 1/2 is singular")
    inv = np.linalg.inv(sigma_plus)
    P = _block_swap(M)
    A = P @ sigma_minus @ inv
    if np.any(state.mu != 0):
        b = P @ inv @ state.mu
        # with sigma ordered (a, a†) the quadratic form is taken on mu itself
        exponent = -0.5 * (state.mu.conj() @ inv @ state.mu).real
    else:
        b = np.zeros(2 * M, dtype=np.complex128)
        exponent = 0.0
    G0 = np.exp(exponent) / np.sqrt(np.linalg.det(sigma_plus).real)
    order = _fock_order(M)
    return GaussianData(
        A[np.ix_(order, order)], b[order], G0, Representation.DENSITY_MATRIX, M
    )


def to_statevector_params(state: ComplexGaussianState) -> GaussianData:
    """State-vector parameters of a pure state, with ``psi_0`` real and positive."""
    if abs(state.purity - 1.0) > PURITY_TOL:
        raise PurityError(f"state has purity {state.purity:.12f}; use the density-matrix path")
    rho = to_density_params(state)
    M = state.modes
    A_rho, b_rho = rho.A, rho.b
    bra, ket = slice(0, 2 * M, 2), slice(1, 2 * M, 2)
    A_psi = A_rho[bra, bra]
    if not (
        np.allclose(A_rho[ket, ket], A_psi.conj(), atol=1e-10, rtol=0)
        and np.allclose(A_rho[bra, ket], 0, atol=1e-10)
        and np.allclose(b_rho[ket], b_rho[bra].conj(), atol=1e-10, rtol=0)
    ):
        raise PurityError("A_rho is not a direct sum A_psi* + A_psi")
    return GaussianData(
        A_psi, b_rho[bra], np.sqrt(rho.G0.real), Representation.STATE_VECTOR, M
    )


def density_from_statevector_params(psi: GaussianData) -> GaussianData:
    """Direct sum ``A_psi* + A_psi`` (and likewise for b) laid out in Fock-index order."""
    M = psi.modes
    A = np.zeros((2 * M, 2 * M), dtype=np.complex128)
    b = np.zeros(2 * M, dtype=np.complex128)
    A[0::2, 0::2] = psi.A
    A[1::2, 1::2] = psi.A.conj()
    b[0::2] = psi.b
    b[1::2] = psi.b.conj()
    return GaussianData(A, b, abs(psi.G0) ** 2, Representation.DENSITY_MATRIX, M)


def permute_modes(data: GaussianData, order: Sequence[int]) -> GaussianData:
    """Reorder modes so that new mode ``i`` is old mode ``order[i]`` (0-based)."""
    order = list(order)
    if sorted(order) == list(range(data.modes)) and order == sorted(order):
        return data
    if sorted(order) != list(range(data.modes)):
        raise ValidationError(f"{order} is not a permutation of {data.modes} modes")
    if data.is_density:
        idx = np.array([x for j in order for x in (2 * j, 2 * j + 1)])
    else:
        idx = np.array(order)
    return data.replace(A=data.A[np.ix_(idx, idx)], b=data.b[idx])


def select_modes(data: GaussianData, keep: Sequence[int]) -> GaussianData:
    """Restrict to the modes ``keep`` (0-based, in that order).

    Exact for amplitudes whose indices vanish on every dropped mode: those
    indices never enter the recurrence.
    """
    keep = list(keep)
    if not keep or len(set(keep)) != len(keep) or not all(0 <= j < data.modes for j in keep):
        raise ValidationError(f"cannot keep modes {keep} of {data.modes}")
    if data.is_density:
        idx = np.array([x for j in keep for x in (2 * j, 2 * j + 1)])
    else:
        idx = np.array(keep)
    return GaussianData(data.A[np.ix_(idx, idx)], data.b[idx], data.G0, data.representation,
                        len(keep), flags=data.flags)


# ---------------------------------------------------------------------------
# JSON ingestion


def _pair(z: complex) -> list[float]:
    return [float(z.real), float(z.imag)]


def _cutoff_mode_from_json(value: Any, cutoffs: tuple[int, ...]) -> CutoffMode:
    if value is None or value == "Local":
        return Local(cutoffs)
    if isinstance(value, dict):
        if "GlobalPhotons" in value:
            return GlobalPhotons(int(value["GlobalPhotons"]))
        if "ProbabilityMass" in value:
            return ProbabilityMass(float(value["ProbabilityMass"]))
        if value.get("Local") is not None:
            return Local(tuple(int(c) for c in value["Local"]))
    raise ValidationError(f"unknown cutoff_mode {value!r}")


def spec_from_json(obj: dict | str) -> CircuitSpec:
    """Build a :class:`CircuitSpec` from its JSON form.

    Complex numbers are ``[re, im]`` pairs and matrices are row-major nested lists.
    ``cutoff_mode`` is ``"Local"``, ``{"GlobalPhotons": N}`` or ``{"ProbabilityMass": x}``.
    """
    if isinstance(obj, str):
        obj = json.loads(obj)
    required = {"modes", "squeeze_params", "interferometer", "loss_transmissivity", "cutoffs"}
    missing = required - set(obj)
    if missing:
        raise ValidationError(f"missing fields: {sorted(missing)}")
    M = obj["modes"]
    try:
        U = np.array(obj["interferometer"], dtype=float)
        U = U[..., 0] + 1j * U[..., 1]
        disp = tuple(complex(re, im) for re, im in obj.get("displacements") or [[0, 0]] * M)
        cutoffs = tuple(int(c) for c in obj["cutoffs"])
        return CircuitSpec(
            modes=M,
            squeeze_params=tuple(tuple(p) for p in obj["squeeze_params"]),
            interferometer=U,
            loss_transmissivity=tuple(obj["loss_transmissivity"]),
            displacements=disp,
            cutoffs=cutoffs,
            detected_modes=tuple(obj.get("detected_modes", range(1, M + 1))),
            cutoff_mode=_cutoff_mode_from_json(obj.get("cutoff_mode"), cutoffs),
        )
    except (TypeError, IndexError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"malformed circuit JSON: {exc}") from exc


def spec_to_json(spec: CircuitSpec) -> dict:
    mode = spec.cutoff_mode
    if isinstance(mode, GlobalPhotons):
        mode_json: Any = {"GlobalPhotons": mode.n_max}
    elif isinstance(mode, ProbabilityMass):
        mode_json = {"ProbabilityMass": mode.threshold}
    else:
        mode_json = "Local"
    return {
        "modes": spec.modes,
        "squeeze_params": [list(p) for p in spec.squeeze_params],
        "interferometer": [[_pair(z) for z in row] for row in spec.interferometer],
        "loss_transmissivity": list(spec.loss_transmissivity),
        "displacements": [_pair(a) for a in spec.displacements],
        "cutoffs": list(spec.cutoffs),
        "detected_modes": list(spec.detected_modes),
        "cutoff_mode": mode_json,
    }


def load_spec(path) -> CircuitSpec:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    return spec_from_json(obj)


def cutoff_bounds(spec: CircuitSpec, representation: Representation):
    """Translate the circuit's cutoff mode into lattice bounds for ``representation``."""
    mode = spec.cutoff_mode
    if isinstance(mode, GlobalPhotons):
        factor = 1 if representation is Representation.STATE_VECTOR else 2
        return GlobalWeight(factor * mode.n_max)
    return mode
