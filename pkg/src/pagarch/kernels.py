"""
Backend selection for the time recursions.

The compiled extension is used when it imports; otherwise the numpy fallback.
Set ``PAGARCH_PURE_PYTHON=1`` to force the fallback. All arrays passed in must
be C-contiguous float64; :func:`as_rows` does the conversion.
"""

import os

import numpy as np

from pagarch import _kernels_python

if os.environ.get("PAGARCH_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_python
else:
    try:
        from pagarch import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_python

BACKEND = "python" if _impl is _kernels_python else "compiled"

__all__ = [
    "BACKEND",
    "as_rows",
    "concentrated_ssr",
    "garch_nll",
    "garch_variance",
    "ma_filter",
    "simulate_arma_garch",
]


def as_rows(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _vec(a):
    return np.ascontiguousarray(np.atleast_1d(np.asarray(a, dtype=np.float64)))


def ma_filter(w, psi):
    return _impl.ma_filter(as_rows(w), _vec(psi))


def concentrated_ssr(w, psi):
    return _impl.concentrated_ssr(as_rows(w), _vec(psi))


def garch_variance(u2, intercept, tau, nu, c_h):
    return _impl.garch_variance(
        as_rows(u2), _vec(intercept), _vec(tau), _vec(nu), _vec(c_h)
    )


def garch_nll(u2, intercept, tau, nu, c_h):
    return _impl.garch_nll(
        as_rows(u2), _vec(intercept), _vec(tau), _vec(nu), _vec(c_h)
    )


def simulate_arma_garch(eps, xb, mu, phi, psi, omega, tau, nu):
    return _impl.simulate_arma_garch(
        as_rows(eps),
        as_rows(xb),
        _vec(mu),
        _vec(phi),
        _vec(psi),
        _vec(omega),
        _vec(tau),
        _vec(nu),
    )
