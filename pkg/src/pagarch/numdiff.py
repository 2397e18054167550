"""Central finite differences with the step rule ``max(1e-5, 1e-5 |x_j|)``."""

import numpy as np

__all__ = ["fd_steps", "gradient", "hessian", "jacobian"]


def fd_steps(x, rel: float = 1e-5, floor: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.maximum(floor, rel * np.abs(x))


def jacobian(fun, x, steps=None) -> np.ndarray:
    """Central-difference Jacobian of a vector-valued ``fun``; shape ``(m, n)``.

    A scalar-valued ``fun`` gives a ``(1, n)`` array.
    """
    x = np.asarray(x, dtype=float)
    steps = fd_steps(x) if steps is None else np.broadcast_to(steps, x.shape)
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = steps[j]
        fp = np.atleast_1d(np.asarray(fun(x + e), dtype=float))
        fm = np.atleast_1d(np.asarray(fun(x - e), dtype=float))
        cols.append((fp - fm) / (2.0 * steps[j]))
    if not cols:
        m = np.atleast_1d(np.asarray(fun(x), dtype=float)).size
        return np.zeros((m, 0))
    return np.stack(cols, axis=1)


def gradient(fun, x, steps=None) -> np.ndarray:
    return jacobian(fun, x, steps)[0]


def hessian(fun, x, steps=None) -> np.ndarray:
    """Symmetrized central-difference Hessian of a scalar ``fun``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    steps = fd_steps(x) if steps is None else np.broadcast_to(steps, x.shape)
    f0 = float(fun(x))
    out = np.empty((n, n))
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = steps[i]
        out[i, i] = (float(fun(x + ei)) - 2.0 * f0 + float(fun(x - ei))) / steps[i] ** 2
        for j in range(i):
            ej = np.zeros(n)
            ej[j] = steps[j]
            val = (
                float(fun(x + ei + ej))
                - float(fun(x + ei - ej))
                - float(fun(x - ei + ej))
                + float(fun(x - ei - ej))
            ) / (4.0 * steps[i] * steps[j])
            out[i, j] = out[j, i] = val
    return out
