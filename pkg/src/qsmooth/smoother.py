"""Smoothing estimators and their trace-square-deviation costs.

Effects enter only through ratios, so any positive rescaling of an effect
leaves every output here unchanged.  Functions that take an effect accept a
single ``(2, 2)`` matrix or a stack ``(..., 2, 2)`` and broadcast.
"""

from dataclasses import dataclass
import warnings

import numpy as np
import scipy.linalg

from .errors import InconsistentRecordError, PreconditionError, ValidationError
from .fpe import ThetaDistribution
from .pre_solver import PreEnsemble
from .qubit import (
    PSD_FLOOR,
    commutator_norm,
    density_from_bloch,
    normalize_effect,
    purity,
    validate_belief,
    validate_density,
)

COMMUTATOR_TOL = 1e-8
ESS_WARNING_THRESHOLD = 100


class LowEffectiveSampleSize(UserWarning):
    """Importance weights are concentrated on few samples."""


# --- classical hidden Markov model ----------------------------------------


@dataclass
class DiscreteHmm:
    """Hidden chain with ``transition[i, j] = P(x_{k+1}=j | x_k=i)`` and
    ``emission[i, y] = P(y_k=y | x_k=i)``.
    """

    transition: np.ndarray
    emission: np.ndarray
    initial: np.ndarray

    def __post_init__(self):
        self.transition = np.asarray(self.transition, dtype=float)
        self.emission = np.asarray(self.emission, dtype=float)
        self.initial = validate_belief(self.initial)
        k = self.initial.size
        if self.transition.shape != (k, k) or self.emission.shape[0] != k:
            raise ValidationError("HMM matrices do not match the number of hidden states")
        for name, m in (("transition", self.transition), ("emission", self.emission)):
            if np.any(m < 0) or not np.allclose(m.sum(axis=1), 1.0, atol=1e-10):
                raise ValidationError(f"{name} rows must be probability vectors")

    @classmethod
    def from_rates(cls, generator, dt, emission, initial):
        """Discretize a rate matrix ``generator[i, j]`` (rows sum to 0) over ``dt``."""
        q = np.asarray(generator, dtype=float)
        if not np.allclose(q.sum(axis=1), 0.0, atol=1e-12):
            raise ValidationError("generator rows must sum to zero")
        return cls(scipy.linalg.expm(q * dt), emission, initial)


def _normalize_rows(a, what):
    s = a.sum(axis=-1, keepdims=True)
    if np.any(s <= 0):
        raise InconsistentRecordError(f"{what}: the record has zero likelihood")
    return a / s


def classical_hmm_filter(hmm: DiscreteHmm, record) -> np.ndarray:
    """Beliefs ``wp_F[k] = P(x_k | y_0 .. y_{k-1})`` for ``k = 0 .. n``."""
    record = np.asarray(record, dtype=int)
    out = np.empty((record.size + 1, hmm.initial.size))
    b = hmm.initial
    out[0] = b
    for k, y in enumerate(record):
        post = b * hmm.emission[:, y]
        if post.sum() <= 0:
            raise InconsistentRecordError(f"observation {y} at step {k} has zero likelihood")
        b = (post / post.sum()) @ hmm.transition
        out[k + 1] = b
    return out


def classical_hmm_retrofilter(hmm: DiscreteHmm, record) -> np.ndarray:
    """Effects ``E[k](x) ∝ P(y_k .. y_{n-1} | x_k = x)``, each summing to 1."""
    record = np.asarray(record, dtype=int)
    k_states = hmm.initial.size
    out = np.empty((record.size + 1, k_states))
    e = np.full(k_states, 1.0 / k_states)
    out[-1] = e
    for k in range(record.size - 1, -1, -1):
        e = hmm.emission[:, record[k]] * (hmm.transition @ e)
        if e.sum() <= 0:
            raise InconsistentRecordError(f"future record from step {k} has zero likelihood")
        e = e / e.sum()
        out[k] = e
    return out


def classical_hmm_smooth(filter_path, effect_path) -> np.ndarray:
    """``wp_S ∝ E * wp_F`` row by row."""
    f = np.asarray(filter_path, dtype=float)
    e = np.asarray(effect_path, dtype=float)
    if f.shape != e.shape:
        raise ValidationError(f"filter path {f.shape} and effect path {e.shape} are not aligned")
    return _normalize_rows(f * e, "smoothing")


# --- quantum smoothers ------------------------------------------------------


def _trace_product(E, rho):
    return np.einsum("...ij,...ji->...", E, rho).real


def classical_quantum_smooth(rho_F, effect, tol=COMMUTATOR_TOL) -> np.ndarray:
    """Smoothed state for commuting (co-diagonal) filtered state and effect."""
    rho = np.asarray(rho_F, dtype=complex)
    E = normalize_effect(effect)
    c = commutator_norm(rho, E)
    if c > tol:
        raise PreconditionError(f"filtered state and effect do not commute (norm {c:.2e})")
    num = E @ rho
    tr = np.trace(num).real
    if tr <= 0:
        raise InconsistentRecordError("Tr[E rho_F] = 0")
    num = num / tr
    return 0.5 * (num + num.conj().T)


def swv_state(rho_F, effect):
    """Normalized Jordan product ``(E rho + rho E) / (2 Tr[E rho])``.

    Returns ``(matrix, is_psd)``.  The matrix is always Hermitian but need not
    be a state when the inputs do not commute.
    """
    rho = np.asarray(rho_F, dtype=complex)
    E = np.asarray(effect, dtype=complex)
    tr = np.trace(E @ rho).real
    if tr <= 0:
        raise InconsistentRecordError("Tr[E rho_F] <= 0")
    j = 0.5 * (E @ rho + rho @ E) / tr
    j = 0.5 * (j + j.conj().T)
    return j, bool(np.linalg.eigvalsh(j)[0] >= PSD_FLOOR)


@dataclass
class SwvScanResult:
    min_eigenvalue: float
    rho_F: np.ndarray
    effect: np.ndarray
    pairs_checked: int


def swv_negativity_scan(n_angles=24, lengths=(0.3, 0.6, 0.9, 1.0), min_likelihood=0.05) -> SwvScanResult:
    """Brute-force search over x-z Bloch pairs for the most negative SWV state.

    Filtered states and effects are both taken as ``(1 + r . sigma) / 2``
    with ``r`` on a polar grid of the x-z disk.  Pairs with ``Tr[E rho]``
    below ``min_likelihood`` are skipped; near-impossible records make the
    normalization blow up and say little.
    """
    angles = np.arange(n_angles) * 2 * np.pi / n_angles
    vecs = [(L * np.sin(a), 0.0, L * np.cos(a)) for L in lengths for a in angles]
    mats = [density_from_bloch(v) for v in vecs]
    best = (np.inf, None, None)
    for rho in mats:
        for E in mats:
            if np.trace(E @ rho).real < min_likelihood:
                continue
            j, _ = swv_state(rho, E)
            w = np.linalg.eigvalsh(j)[0]
            if w < best[0]:
                best = (float(w), rho, E)
    return SwvScanResult(best[0], best[1], best[2], len(mats) ** 2)


def _circle_mixture(thetas, probs, effect):
    """``sum_i Tr[E rho(theta_i)] p_i rho(theta_i)`` normalized, for circle states."""
    E = np.asarray(effect, dtype=complex)
    s, c = np.sin(thetas), np.cos(thetas)
    # Tr[E rho(theta)] = (Tr E + sin Tr[E sx] + cos Tr[E sz]) / 2
    tr_e = (E[..., 0, 0] + E[..., 1, 1]).real
    ex = 2 * E[..., 0, 1].real
    ez = (E[..., 0, 0] - E[..., 1, 1]).real
    w = 0.5 * (tr_e[..., None] + ex[..., None] * s + ez[..., None] * c) * probs
    total = w.sum(axis=-1)
    if np.any(total <= 0):
        raise InconsistentRecordError("smoothing weights sum to zero")
    x = (w * s).sum(axis=-1) / total
    z = (w * c).sum(axis=-1) / total
    out = np.zeros(E.shape, dtype=complex)
    out[..., 0, 0] = 0.5 * (1 + z)
    out[..., 1, 1] = 0.5 * (1 - z)
    out[..., 0, 1] = 0.5 * x
    out[..., 1, 0] = 0.5 * x
    return out


def homodyne_smooth(p: ThetaDistribution, effect) -> np.ndarray:
    """Smoothed state from the angle density of the homodyne true state."""
    return _circle_mixture(p.theta, p.density * p.dtheta, effect)


def adaptive_smooth(pre: PreEnsemble, effect) -> np.ndarray:
    """Smoothed state as a reweighted mixture of the three PRE states."""
    return _circle_mixture(pre.angles, pre.occupations, effect)


def barycentric_coordinates(bloch_xz, pre: PreEnsemble) -> np.ndarray:
    """Barycentric coordinates of x-z Bloch points in the PRE triangle."""
    pts = np.stack([np.sin(pre.angles), np.cos(pre.angles)], axis=1)
    T = np.array([pts[0] - pts[2], pts[1] - pts[2]]).T
    q = np.asarray(bloch_xz, dtype=float) - pts[2]
    lam = np.linalg.solve(T, q.T).T if q.ndim > 1 else np.linalg.solve(T, q)
    return np.concatenate([lam, 1 - lam.sum(axis=-1, keepdims=True)], axis=-1)


@dataclass
class SmoothingInputs:
    """Filtered and retrofiltered quantities plus one scheme payload.

    With neither payload the filtered quantity is smoothed directly (the
    co-diagonal case).
    """

    filtered: np.ndarray
    effect: np.ndarray
    theta_distribution: ThetaDistribution | None = None
    pre: PreEnsemble | None = None

    def __post_init__(self):
        if self.theta_distribution is not None and self.pre is not None:
            raise ValidationError("give at most one scheme payload")

    def smooth(self) -> np.ndarray:
        if self.theta_distribution is not None:
            return homodyne_smooth(self.theta_distribution, self.effect)
        if self.pre is not None:
            return adaptive_smooth(self.pre, self.effect)
        f = np.asarray(self.filtered)
        if f.ndim == 1:
            return classical_hmm_smooth(f[None], np.asarray(self.effect)[None])[0]
        return classical_quantum_smooth(f, self.effect)


# --- Monte Carlo ------------------------------------------------------------


@dataclass
class McSmoothResult:
    rho: np.ndarray
    effective_sample_size: float
    low_ess: bool


def effect_weights(true_states, effect) -> np.ndarray:
    """Importance weights ``Tr[E rho_T]`` for each true state."""
    return _trace_product(np.asarray(effect)[None], np.asarray(true_states))


def mc_smooth(true_states, weights) -> McSmoothResult:
    """Weighted average of sampled true states.

    Warns with :class:`LowEffectiveSampleSize` when the effective sample size
    ``(sum w)^2 / sum w^2`` drops below 100.
    """
    states = np.asarray(true_states, dtype=complex)
    w = np.asarray(weights, dtype=float)
    if states.shape[0] == 0:
        raise ValidationError("empty ensemble")
    if w.shape != (states.shape[0],) or np.any(w < 0):
        raise ValidationError("weights must be one non-negative number per state")
    total = w.sum()
    if total <= 0:
        raise InconsistentRecordError("all importance weights are zero")
    rho = np.tensordot(w / total, states, axes=1)
    ess = float(total**2 / np.sum(w * w))
    low = ess < ESS_WARNING_THRESHOLD
    if low:
        warnings.warn(f"effective sample size {ess:.1f} < {ESS_WARNING_THRESHOLD}", LowEffectiveSampleSize, stacklevel=2)
    return McSmoothResult(0.5 * (rho + rho.conj().T), ess, low)


# --- costs ------------------------------------------------------------------


def trsd_cost(estimate, true_states, weights=None) -> float:
    """Expected ``Tr[(rho_T - estimate)^2]`` over a weighted ensemble."""
    states = np.asarray(true_states, dtype=complex)
    w = np.full(states.shape[0], 1.0 / states.shape[0]) if weights is None else np.asarray(weights) / np.sum(weights)
    d = states - np.asarray(estimate)[None]
    return float(np.dot(w, np.einsum("kij,kji->k", d, d).real))


def expected_cost_optimal(conditioned, true_states, weights=None, atol=1e-6) -> float:
    """Minimum expected cost ``E[P(rho_T)] - P(rho_C)``.

    ``conditioned`` must be the weighted mean of ``true_states``.
    """
    states = np.asarray(true_states, dtype=complex)
    w = np.full(states.shape[0], 1.0 / states.shape[0]) if weights is None else np.asarray(weights) / np.sum(weights)
    mean = np.tensordot(w, states, axes=1)
    gap = float(np.abs(mean - np.asarray(conditioned)).max())
    if gap > atol:
        raise PreconditionError(f"conditioned state differs from the ensemble mean by {gap:.2e}")
    purities = np.einsum("kij,kji->k", states, states).real
    return float(np.dot(w, purities) - purity(conditioned))


def expected_cost_filtered_under_smoothing(rho_F, rho_S) -> float:
    """Cost of reporting ``rho_F`` when the full record is known (pure true states)."""
    rho_F = np.asarray(rho_F)
    rho_S = np.asarray(rho_S)
    return 1.0 - 2.0 * _trace_product(rho_F, rho_S) + _trace_product(rho_F, rho_F)


def smoothed_cost(rho_S):
    """Optimal expected cost ``1 - P(rho_S)`` for pure true states; broadcasts."""
    rho_S = np.asarray(rho_S)
    return 1.0 - _trace_product(rho_S, rho_S)


def purity_overlap_expansion(states, weights) -> float:
    """``sum_{T,T'} w_T w_T' Tr[rho_T rho_T']``."""
    states = np.asarray(states, dtype=complex)
    w = np.asarray(weights, dtype=float)
    if abs(w.sum() - 1) > 1e-10:
        raise ValidationError("weights must sum to 1")
    overlaps = np.einsum("aij,bji->ab", states, states).real
    return float(w @ overlaps @ w)


def von_neumann_entropy(rho) -> float:
    """``-sum lambda ln lambda`` with ``0 ln 0 = 0``."""
    lam = np.linalg.eigvalsh(validate_density(rho))
    lam = lam[lam > 0]
    return float(-np.sum(lam * np.log(lam)))
