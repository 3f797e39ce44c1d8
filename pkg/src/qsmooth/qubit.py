"""Qubit states, effects and Bloch-vector algebra.

All matrices use the ordered basis ``(|e>, |g>)`` so that ``sigma_z`` is
``diag(1, -1)`` and the lowering operator is ``|g><e|``.  States are plain
``(2, 2)`` complex numpy arrays; the helpers here validate and convert them.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ValidationError

IDENTITY = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)
SIGMA_PLUS = SIGMA_MINUS.conj().T

KET_E = np.array([1, 0], dtype=complex)
KET_G = np.array([0, 1], dtype=complex)
PROJ_E = np.outer(KET_E, KET_E.conj())
PROJ_G = np.outer(KET_G, KET_G.conj())
MAXIMALLY_MIXED = IDENTITY / 2

HERMITIAN_ATOL = 1e-12
TRACE_ATOL = 1e-10
PSD_FLOOR = -1e-10


@dataclass(frozen=True)
class ModelParams:
    """Rates of the three decoherence channels.

    ``delta`` is the emission rate monitored by Alice, ``gamma`` the second
    emission rate and ``epsilon`` the absorption rate.  With
    ``delta_zero_limit`` set, inter-jump dynamics use ``delta = 0`` while a
    terminal observed jump is still imposed by conditioning.
    """

    gamma: float = 1.0
    epsilon: float = 0.05
    delta: float = 0.0
    delta_zero_limit: bool = True

    def __post_init__(self):
        if not self.delta >= 0:
            raise ValidationError(f"delta must be >= 0, got {self.delta}")
        if not self.gamma > 0:
            raise ValidationError(f"gamma must be > 0, got {self.gamma}")
        if not self.epsilon > 0:
            raise ValidationError(f"epsilon must be > 0, got {self.epsilon}")

    @property
    def effective_delta(self) -> float:
        """Rate used in the no-jump dynamics."""
        return 0.0 if self.delta_zero_limit else self.delta

    @property
    def total_rate(self) -> float:
        return self.gamma + self.epsilon

    @property
    def steady_excited(self) -> float:
        """Excited population of the filtered steady state for delta -> 0."""
        return self.epsilon / (self.gamma + self.epsilon)


class BlochVector(NamedTuple):
    x: float
    y: float
    z: float

    @property
    def length(self) -> float:
        return float(np.sqrt(self.x**2 + self.y**2 + self.z**2))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)


def _as_matrix(a, name="matrix"):
    m = np.asarray(a, dtype=complex)
    if m.shape != (2, 2):
        raise ValidationError(f"{name} must have shape (2, 2), got {m.shape}")
    return m


def is_hermitian(a, atol=HERMITIAN_ATOL) -> bool:
    a = np.asarray(a)
    return bool(np.allclose(a, a.conj().T, rtol=0.0, atol=atol))


def validate_density(rho, clip=True) -> np.ndarray:
    """Check the density-matrix invariants and return a cleaned copy.

    Eigenvalues in ``[-1e-10, 0)`` are clipped to zero and the state is
    renormalized; anything more negative raises.
    """
    m = _as_matrix(rho, "density matrix")
    if not is_hermitian(m):
        raise ValidationError("density matrix is not Hermitian")
    tr = np.trace(m).real
    if abs(tr - 1.0) > TRACE_ATOL:
        raise ValidationError(f"density matrix trace is {tr}, expected 1")
    m = (m + m.conj().T) / 2
    w, v = np.linalg.eigh(m)
    if w[0] < PSD_FLOOR:
        raise ValidationError(f"density matrix has eigenvalue {w[0]:.3e} < 0")
    if clip and w[0] < 0:
        w = np.clip(w, 0.0, None)
        m = (v * w) @ v.conj().T
        m = m / np.trace(m).real
    return m


def validate_effect(effect) -> np.ndarray:
    """Check that ``effect`` is Hermitian and PSD (any positive norm)."""
    m = _as_matrix(effect, "effect")
    if not is_hermitian(m):
        raise ValidationError("effect is not Hermitian")
    m = (m + m.conj().T) / 2
    w = np.linalg.eigvalsh(m)
    scale = max(abs(w[-1]), 1.0e-300)
    if w[0] < PSD_FLOOR * scale:
        raise ValidationError(f"effect has eigenvalue {w[0]:.3e} < 0")
    if w[-1] <= 0:
        raise ValidationError("effect is the zero operator")
    return m


def normalize_effect(effect) -> np.ndarray:
    """Rescale an effect to unit trace (effects are norm-free)."""
    m = np.asarray(effect, dtype=complex)
    tr = np.trace(m).real
    if tr <= 0:
        raise ValidationError("effect has non-positive trace")
    return m / tr


def validate_belief(p, atol=1e-10) -> np.ndarray:
    """Check a classical probability vector."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1:
        raise ValidationError("belief must be a 1-d vector")
    if np.any(p < -atol):
        raise ValidationError("belief has negative entries")
    if abs(p.sum() - 1.0) > atol:
        raise ValidationError(f"belief sums to {p.sum()}, expected 1")
    return np.clip(p, 0.0, None)


def density_from_bloch(r) -> np.ndarray:
    """Return ``(1 + r . sigma) / 2``."""
    x, y, z = (float(c) for c in r)
    if x * x + y * y + z * z > 1.0 + 1e-10:
        raise ValidationError("Bloch vector longer than 1")
    return 0.5 * (IDENTITY + x * SIGMA_X + y * SIGMA_Y + z * SIGMA_Z)


def bloch_from_density(rho) -> BlochVector:
    """Bloch components ``Tr[rho sigma_i]``."""
    m = _as_matrix(rho, "density matrix")
    if not is_hermitian(m):
        raise ValidationError("density matrix is not Hermitian")
    return BlochVector(
        float(np.trace(m @ SIGMA_X).real),
        float(np.trace(m @ SIGMA_Y).real),
        float(np.trace(m @ SIGMA_Z).real),
    )


def bloch_array(rho) -> np.ndarray:
    """Bloch components of one ``(2, 2)`` or a stack ``(..., 2, 2)`` of states."""
    m = np.asarray(rho)
    x = 2.0 * m[..., 0, 1].real
    y = -2.0 * m[..., 0, 1].imag
    z = (m[..., 0, 0] - m[..., 1, 1]).real
    return np.stack([x, y, z], axis=-1)


def purity(rho) -> float:
    m = np.asarray(rho)
    return float(np.trace(m @ m).real)


def trace_square_deviation(a, b) -> float:
    """``Tr[(a - b)^2]``, the trace-square deviation between two states."""
    d = np.asarray(a) - np.asarray(b)
    return float(np.trace(d @ d).real)


def wrap_angle(theta):
    """Reduce angles to ``[0, 2 pi)``; ``np.mod`` alone can round up to ``2 pi``."""
    t = np.mod(theta, 2 * np.pi)
    return np.where(t >= 2 * np.pi, 0.0, t) if np.ndim(t) else (0.0 if t >= 2 * np.pi else float(t))


def ket_on_circle(theta) -> np.ndarray:
    """Pure state on the x-z great circle at angle ``theta`` from +z."""
    return np.array([np.cos(theta / 2), np.sin(theta / 2)], dtype=complex)


def pure_state_on_circle(theta) -> np.ndarray:
    theta = wrap_angle(theta)
    return 0.5 * (IDENTITY + np.sin(theta) * SIGMA_X + np.cos(theta) * SIGMA_Z)


def angle_from_ket(ket) -> float:
    """Inverse of :func:`ket_on_circle` for a ket with real relative phase.

    Returns an angle in ``[0, 2 pi)``.
    """
    k = np.asarray(ket, dtype=complex)
    phase = k[np.argmax(np.abs(k))]
    k = k * (abs(phase) / phase)
    return float(wrap_angle(2 * np.arctan2(k[1].real, k[0].real)))


def jordan_product(a, b) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    return 0.5 * (a @ b + b @ a)


def commutator_norm(a, b) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    return float(np.linalg.norm(a @ b - b @ a))


def completeness_defect(operators) -> float:
    """Max-abs deviation of ``sum_k M_k^dag M_k`` from the identity."""
    total = sum(m.conj().T @ m for m in (np.asarray(o, dtype=complex) for o in operators))
    return float(np.max(np.abs(total - IDENTITY)))
