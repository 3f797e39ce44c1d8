"""Adaptive weak-local-oscillator scheme that confines the qubit to a cyclic
three-state physically realizable ensemble (PRE).

Bob adds a real WLO amplitude to each of his two channels, so his jump
operators become ``sqrt(gamma) s- + mu_minus`` and
``sqrt(epsilon) s+ + mu_plus``.  Amplitudes are in sqrt(rate) units.  A
cyclic PRE ``alpha -> phi -> beta -> alpha`` requires each state to be an
eigenstate of its own no-jump operator and both jump operators to map it to
the next state in the cycle.
"""

from dataclasses import dataclass
from typing import NamedTuple
import itertools
import logging

import numpy as np

from .errors import SolverError, ValidationError
from .lindblad import dissipator, model_lindblad_set
from .qubit import (
    IDENTITY,
    SIGMA_MINUS,
    SIGMA_PLUS,
    ModelParams,
    ket_on_circle,
    pure_state_on_circle,
    wrap_angle,
)

log = logging.getLogger(__name__)

STATE_LABELS = ("alpha", "phi", "beta")


class WloSettings(NamedTuple):
    """WLO amplitudes added to the emission (minus) and absorption (plus) channels."""

    minus: float
    plus: float


# published amplitudes for epsilon = 0.05 gamma, gamma = 1
PUBLISHED_WLO = (
    WloSettings(-0.07812, -0.1804),
    WloSettings(-0.3684, 0.2552),
    WloSettings(0.06446, 0.6158),
)


@dataclass(frozen=True)
class AdaptiveOperators:
    h_eff: np.ndarray
    jump_minus: np.ndarray
    jump_plus: np.ndarray

    @property
    def jump_operators(self):
        return (self.jump_minus, self.jump_plus)

    def total_rate_operator(self) -> np.ndarray:
        """``sum_k J_k^dag J_k``; its expectation is the total click rate."""
        return sum(j.conj().T @ j for j in self.jump_operators)


def build_operators(wlo: WloSettings, params: ModelParams) -> AdaptiveOperators:
    """No-jump Hamiltonian and displaced jump operators for one WLO setting."""
    g, e = params.gamma, params.epsilon
    m, p = float(wlo.minus), float(wlo.plus)
    h_eff = -0.5j * (
        g * SIGMA_PLUS @ SIGMA_MINUS
        + e * SIGMA_MINUS @ SIGMA_PLUS
        + 2 * np.sqrt(g) * m * SIGMA_MINUS
        + 2 * np.sqrt(e) * p * SIGMA_PLUS
        + (m * m + p * p) * IDENTITY
    )
    return AdaptiveOperators(
        h_eff=h_eff,
        jump_minus=np.sqrt(g) * SIGMA_MINUS + m * IDENTITY,
        jump_plus=np.sqrt(e) * SIGMA_PLUS + p * IDENTITY,
    )


def unravelling_defect(ops: AdaptiveOperators, params: ModelParams, rho) -> float:
    """Max-abs gap between the averaged conditional generator and the Lindbladian."""
    rho = np.asarray(rho, dtype=complex)
    H = ops.h_eff
    gen = -1j * (H @ rho - rho @ H.conj().T)
    gen += sum(j @ rho @ j.conj().T for j in ops.jump_operators)
    target = dissipator(model_lindblad_set(params, include_observed=False), rho)
    return float(np.max(np.abs(gen - target)))


def _perp(theta):
    return np.array([-np.sin(theta / 2), np.cos(theta / 2)], dtype=complex)


def _check_distinct(angles, tol=1e-9):
    for a, b in itertools.combinations(angles, 2):
        if abs(np.angle(np.exp(1j * (a - b)))) < tol:
            raise ValidationError("PRE states must be distinct")


def constraint_residuals(angles, wlos, params: ModelParams) -> np.ndarray:
    """Residual vector of the cyclic-PRE conditions.

    For each state: real and imaginary parts of the component of
    ``H_eff |theta>`` orthogonal to ``|theta>``, then of ``J_- |theta>`` and
    ``J_+ |theta>`` orthogonal to the next state.  Length 18; zero exactly
    when the ensemble is cyclic and physically realizable.
    """
    angles = np.asarray(angles, dtype=float)
    _check_distinct(angles)
    out = []
    for i in range(3):
        ops = build_operators(WloSettings(*wlos[i]), params)
        ket = ket_on_circle(angles[i])
        nxt = _perp(angles[(i + 1) % 3])
        terms = (
            _perp(angles[i]).conj() @ (ops.h_eff @ ket),
            nxt.conj() @ (ops.jump_minus @ ket),
            nxt.conj() @ (ops.jump_plus @ ket),
        )
        for t in terms:
            out += [t.real, t.imag]
    return np.array(out)


def numerical_jacobian(fun, x, h=1e-6):
    """Central-difference Jacobian."""
    x = np.asarray(x, dtype=float)
    f0 = fun(x)
    J = np.empty((f0.size, x.size))
    for k in range(x.size):
        step = np.zeros_like(x)
        step[k] = h
        J[:, k] = (fun(x + step) - fun(x - step)) / (2 * h)
    return J


@dataclass
class LeastSquaresResult:
    x: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool


def levenberg_marquardt(fun, x0, tol=1e-8, max_iter=200, h=1e-6, damping=1e-3):
    """Damped Gauss-Newton minimization of ``|fun(x)|^2``.

    The damping factor is divided by 3 after an accepted step and multiplied
    by 4 after a rejected one.  Iteration stops once the residual norm drops
    below ``tol`` or the step stalls.
    """
    x = np.asarray(x0, dtype=float).copy()
    r = fun(x)
    cost = r @ r
    lam = damping
    it = 0
    for it in range(1, max_iter + 1):
        if np.sqrt(cost) < tol:
            break
        J = numerical_jacobian(fun, x, h)
        JtJ = J.T @ J
        g = J.T @ r
        accepted = False
        while lam < 1e12:
            A = JtJ + lam * np.diag(np.maximum(np.diag(JtJ), 1e-12))
            try:
                dx = -np.linalg.solve(A, g)
            except np.linalg.LinAlgError:
                lam *= 4
                continue
            x_new = x + dx
            r_new = fun(x_new)
            cost_new = r_new @ r_new
            if cost_new < cost:
                x, r, cost = x_new, r_new, cost_new
                lam = max(lam / 3, 1e-15)
                accepted = True
                break
            lam *= 4
        if not accepted or np.linalg.norm(dx) < 1e-15 * (1 + np.linalg.norm(x)):
            break
    norm = float(np.sqrt(cost))
    return LeastSquaresResult(x, norm, it, norm < tol)


@dataclass
class WloSolution:
    angles: np.ndarray
    wlos: tuple
    residual_norm: float
    iterations: int

    def as_ensemble(self, params: ModelParams) -> "PreEnsemble":
        return PreEnsemble(
            angles=np.asarray(self.angles),
            occupations=occupations(self.angles, self.wlos, params),
            wlos=self.wlos,
            params=params,
        )


def _pack(wlos):
    return np.array([v for w in wlos for v in (w[0], w[1])], dtype=float)


def _unpack(vec):
    return tuple(WloSettings(float(vec[2 * i]), float(vec[2 * i + 1])) for i in range(3))


def solve_wlo(angles, params: ModelParams, initial_guess=None, refine_angles=True, tol=1e-8, max_iter=200):
    """Least-squares WLO amplitudes realizing a cyclic PRE.

    With ``refine_angles`` the three angles are solved for together with the
    amplitudes, starting from ``angles``; this is needed when the angles are
    only known approximately.  Raises :class:`SolverError` if the residual
    norm does not reach ``tol``.
    """
    angles = np.asarray(angles, dtype=float)
    _check_distinct(angles)
    seed = _pack(PUBLISHED_WLO if initial_guess is None else initial_guess)
    if refine_angles:
        def fun(x):
            return constraint_residuals(x[:3], _unpack(x[3:]), params)
        x0 = np.concatenate([angles, seed])
    else:
        def fun(x):
            return constraint_residuals(angles, _unpack(x), params)
        x0 = seed
    res = levenberg_marquardt(fun, x0, tol=tol, max_iter=max_iter)
    if refine_angles:
        out_angles = wrap_angle(res.x[:3])
        wlos = _unpack(res.x[3:])
    else:
        out_angles = angles
        wlos = _unpack(res.x)
    if not res.converged:
        raise SolverError(
            f"WLO solve did not converge (best residual {res.residual_norm:.3e})",
            best_x=res.x,
            best_residual=res.residual_norm,
        )
    return WloSolution(out_angles, wlos, res.residual_norm, res.iterations)


def _canonical_rotation(sol: WloSolution, params: ModelParams) -> WloSolution:
    """Relabel the cycle so the most occupied state comes first."""
    k = int(np.argmax(occupations(sol.angles, sol.wlos, params)))
    order = [(k + i) % 3 for i in range(3)]
    return WloSolution(sol.angles[order], tuple(sol.wlos[i] for i in order), sol.residual_norm, sol.iterations)


def multistart_solve(params: ModelParams, n_starts=20, seed=0, include_published=True, angle_tol=1e-6):
    """Search for cyclic PREs from random starts.

    Returns the distinct converged solutions, published seed first.  Cyclic
    relabelings of one ensemble count once; mirror images (``theta ->
    -theta`` with negated amplitudes) are kept as separate schemes.  Starts
    that fail are skipped; the count is logged.
    """
    rng = np.random.default_rng(seed)
    starts = []
    if include_published:
        starts.append((pre_states_from_wlo(PUBLISHED_WLO, params), PUBLISHED_WLO))
    for _ in range(n_starts):
        ang = rng.uniform(0, 2 * np.pi, size=3)
        amps = _unpack(rng.normal(0, 0.5, size=6))
        starts.append((ang, amps))
    found = []
    failures = 0
    for ang, amps in starts:
        try:
            sol = solve_wlo(ang, params, amps, refine_angles=True)
        except (SolverError, ValidationError):
            failures += 1
            continue
        try:
            _check_distinct(sol.angles, tol=1e-3)
        except ValidationError:
            failures += 1
            continue
        sol = _canonical_rotation(sol, params)
        key = np.concatenate([sol.angles, _pack(sol.wlos)])
        if not any(np.allclose(key, np.concatenate([f.angles, _pack(f.wlos)]), atol=angle_tol) for f in found):
            found.append(sol)
    log.info("multistart: %d solutions, %d failed starts", len(found), failures)
    return found


def real_eigen_angles(ops: AdaptiveOperators, tol=1e-9):
    K = 2j * ops.h_eff
    w, v = np.linalg.eig(K)
    out = []
    for k in range(2):
        vec = v[:, k]
        vec = vec * np.exp(-1j * np.angle(vec[np.argmax(np.abs(vec))]))
        if np.max(np.abs(vec.imag)) > tol * np.max(np.abs(vec)):
            continue
        out.append(float(wrap_angle(2 * np.arctan2(vec[1].real, vec[0].real))))
    return out


def pre_states_from_wlo(wlos, params: ModelParams, tol=1e-9) -> np.ndarray:
    """Angles of the PRE states implied by the WLO settings.

    Each state must be a real eigenvector of its no-jump operator; among the
    eigenvector choices, the one that best satisfies the cyclic jump
    conditions is returned.
    """
    candidates = []
    for w in wlos:
        angs = real_eigen_angles(build_operators(WloSettings(*w), params), tol)
        if not angs:
            raise ValidationError(f"no real eigenvector for WLO setting {tuple(w)}")
        candidates.append(angs)
    best = None
    best_norm = np.inf
    for combo in itertools.product(*candidates):
        try:
            norm = np.linalg.norm(constraint_residuals(combo, wlos, params))
        except ValidationError:
            continue
        if norm < best_norm:
            best, best_norm = combo, norm
    if best is None:
        raise ValidationError("no admissible eigenvector combination")
    return np.array(best)


def jump_rates(angles, wlos, params: ModelParams) -> np.ndarray:
    """Total click rate out of each PRE state."""
    rates = []
    for ang, w in zip(angles, wlos):
        ket = ket_on_circle(ang)
        R = build_operators(WloSettings(*w), params).total_rate_operator()
        rates.append(float((ket.conj() @ R @ ket).real))
    return np.array(rates)


def occupations(angles, wlos, params: ModelParams) -> np.ndarray:
    """Stationary occupations of the cyclic chain, proportional to 1 / rate."""
    r = jump_rates(angles, wlos, params)
    if np.any(r <= 0):
        raise ValidationError("a PRE state has zero click rate; the cycle is degenerate")
    inv = 1.0 / r
    return inv / inv.sum()


@dataclass
class PreEnsemble:
    """Cyclic PRE ``alpha -> phi -> beta -> alpha`` with its WLO settings."""

    angles: np.ndarray
    occupations: np.ndarray
    wlos: tuple
    params: ModelParams

    def __post_init__(self):
        self.angles = np.asarray(self.angles, dtype=float)
        self.occupations = np.asarray(self.occupations, dtype=float)
        if np.any(self.occupations < 0) or abs(self.occupations.sum() - 1) > 1e-10:
            raise ValidationError("PRE occupations must be a probability vector")

    def states(self) -> np.ndarray:
        return np.array([pure_state_on_circle(a) for a in self.angles])

    def mixture(self) -> np.ndarray:
        return np.einsum("k,kij->ij", self.occupations, self.states())

    def operators(self, index) -> AdaptiveOperators:
        return build_operators(WloSettings(*self.wlos[index]), self.params)

    def rates(self) -> np.ndarray:
        return jump_rates(self.angles, self.wlos, self.params)

    def channel_rates(self) -> np.ndarray:
        """Click rates ``(minus, plus)`` out of each state, shape ``(3, 2)``."""
        out = np.empty((3, 2))
        for i, a in enumerate(self.angles):
            ket = ket_on_circle(a)
            ops = self.operators(i)
            for k, J in enumerate(ops.jump_operators):
                v = J @ ket
                out[i, k] = float(np.vdot(v, v).real)
        return out

    @staticmethod
    def next_index(index: int) -> int:
        return (index + 1) % 3


def published_ensemble(params: ModelParams = ModelParams()) -> PreEnsemble:
    """The published cyclic PRE, with angles and amplitudes solved to full precision."""
    approx = pre_states_from_wlo(PUBLISHED_WLO, params)
    return solve_wlo(approx, params, PUBLISHED_WLO, refine_angles=True, tol=1e-12).as_ensemble(params)


def regime_check(params: ModelParams, threshold=0.01) -> bool:
    """True when ``delta * epsilon < threshold * (gamma + epsilon)^2``.

    Uses the nominal delta, since the question is whether the filtered state
    settles between Alice's clicks.
    """
    return params.delta * params.epsilon < threshold * (params.gamma + params.epsilon) ** 2
