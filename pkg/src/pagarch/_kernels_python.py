"""
Pure numpy implementations of the time recursions.

Each function loops over time and vectorizes across units. Signatures and
pre-sample conventions match the compiled ``pagarch._kernels`` module.
"""

import numpy as np


def ma_filter(w, psi):
    w = np.asarray(w, dtype=float)
    psi = np.asarray(psi, dtype=float)
    e = np.array(w, copy=True)
    for t in range(1, w.shape[1]):
        for j in range(min(psi.shape[0], t)):
            e[:, t] -= psi[j] * e[:, t - j - 1]
    return e


def concentrated_ssr(w, psi):
    w = np.asarray(w, dtype=float)
    g = ma_filter(np.ones((1, w.shape[1])), psi)[0]
    e = ma_filter(w, psi)
    gg = float(g @ g)
    ge = e @ g
    mu = ge / gg
    ssr = np.einsum("it,it->i", e, e) - ge * ge / gg
    return ssr, mu, gg


def garch_variance(u2, intercept, tau, nu, c_h):
    u2 = np.asarray(u2, dtype=float)
    tau = np.asarray(tau, dtype=float)
    nu = np.asarray(nu, dtype=float)
    c_h = np.asarray(c_h, dtype=float)
    n, nt = u2.shape
    h = np.empty((n, nt))
    for t in range(nt):
        acc = np.array(intercept, dtype=float, copy=True)
        for j in range(tau.shape[0]):
            if t - j - 1 >= 0:
                acc += tau[j] * u2[:, t - j - 1]
        for j in range(nu.shape[0]):
            acc += nu[j] * (h[:, t - j - 1] if t - j - 1 >= 0 else c_h)
        h[:, t] = acc
    return h


def garch_nll(u2, intercept, tau, nu, c_h):
    h = garch_variance(u2, intercept, tau, nu, c_h)
    bad = np.any(h <= 0.0, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.sum(np.log(h) + np.asarray(u2) / h, axis=1)
    out[bad] = np.inf
    return out


def simulate_arma_garch(eps, xb, mu, phi, psi, omega, tau, nu):
    eps = np.asarray(eps, dtype=float)
    phi = np.asarray(phi, dtype=float)
    psi = np.asarray(psi, dtype=float)
    tau = np.asarray(tau, dtype=float)
    nu = np.asarray(nu, dtype=float)
    omega = np.asarray(omega, dtype=float)
    n, nt = eps.shape
    intercept = omega * (1.0 - tau.sum() - nu.sum())
    y = np.empty((n, nt))
    u = np.empty((n, nt))
    h = np.empty((n, nt))
    for t in range(nt):
        ht = intercept.copy()
        for j in range(tau.shape[0]):
            if t - j - 1 >= 0:
                ht += tau[j] * u[:, t - j - 1] ** 2
        for j in range(nu.shape[0]):
            ht += nu[j] * (h[:, t - j - 1] if t - j - 1 >= 0 else omega)
        ut = np.sqrt(ht) * eps[:, t]
        acc = mu + xb[:, t] + ut
        for j in range(phi.shape[0]):
            if t - j - 1 >= 0:
                acc = acc + phi[j] * y[:, t - j - 1]
        for j in range(psi.shape[0]):
            if t - j - 1 >= 0:
                acc = acc + psi[j] * u[:, t - j - 1]
        h[:, t] = ht
        u[:, t] = ut
        y[:, t] = acc
    return y, u, h
