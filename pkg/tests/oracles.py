"""Independent reference computations used only by the tests."""

import itertools

import numpy as np
import scipy.integrate


def brute_force_hmm(hmm, record):
    """Filtered and smoothed marginals by enumerating every hidden path.

    Hidden states ``x_0 .. x_n`` emit ``y_0 .. y_{n-1}``; the filter at ``k``
    conditions on ``y_<k`` and the smoother on the whole record.
    """
    n = len(record)
    K = hmm.initial.size
    joint = {}
    for path in itertools.product(range(K), repeat=n + 1):
        p = hmm.initial[path[0]]
        for k in range(n):
            p *= hmm.emission[path[k], record[k]] * hmm.transition[path[k], path[k + 1]]
        joint[path] = p
    smooth = np.zeros((n + 1, K))
    filt = np.zeros((n + 1, K))
    for path, p in joint.items():
        for k in range(n + 1):
            smooth[k, path[k]] += p
    for k in range(n + 1):
        # P(x_k, y_<k): marginalize the future emissions out
        for path in itertools.product(range(K), repeat=k + 1):
            p = hmm.initial[path[0]]
            for j in range(k):
                p *= hmm.emission[path[j], record[j]] * hmm.transition[path[j], path[j + 1]]
            filt[k, path[k]] += p
    return filt / filt.sum(1, keepdims=True), smooth / smooth.sum(1, keepdims=True)


def filtered_z(t, z0, gamma, eps):
    """Closed-form excited-minus-ground population under the rate equation."""
    z_ss = (eps - gamma) / (gamma + eps)
    return z_ss + (z0 - z_ss) * np.exp(-(gamma + eps) * np.asarray(t))


def effect_closed_form(s, gamma, eps):
    """Unit-trace diagonal effect ``(E_e, E_g)`` a time ``s`` before a click."""
    d = np.exp(-(gamma + eps) * np.asarray(s))
    e_g = eps * (1 - d) / (gamma + eps)
    e_e = e_g + d
    total = e_e + e_g
    return e_e / total, e_g / total


def stationary_density_quadrature(theta, gamma, eps):
    """Zero-flux stationary density ``exp(int 2A/D) / D``, normalized on the circle."""
    def A(t):
        return np.sin(t) * (0.5 * (gamma + eps) * np.cos(t) + (gamma - eps))

    def D(t):
        return gamma * (1 + np.cos(t)) ** 2 + eps * (1 - np.cos(t)) ** 2

    fine = np.linspace(0, 2 * np.pi, 20001)
    integrand = 2 * A(fine) / D(fine)
    phi = scipy.integrate.cumulative_trapezoid(integrand, fine, initial=0.0)
    dens = np.exp(phi - phi.max()) / D(fine)
    dens /= scipy.integrate.trapezoid(dens, fine)
    return np.interp(np.mod(theta, 2 * np.pi), fine, dens)
