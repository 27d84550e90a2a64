"""Shared deterministic numerical kernels.

Quadrature on uniform edge grids, root bracketing, dense linear algebra and
the index-permutation operator used by both tensor engines.
"""

import itertools
import math

import numpy as np
import scipy.integrate
import scipy.linalg
import scipy.optimize

from utils.errors import NumericsError


def _check_even_intervals(n_points):
    if n_points < 3 or (n_points - 1) % 2:
        raise NumericsError(
            f"Simpson quadrature needs an even number of intervals, got {n_points - 1}"
        )


def simpson_weights(n_points, h):
    """Composite Simpson weights (1, 4, 2, ..., 4, 1) * h / 3."""
    _check_even_intervals(n_points)
    weights = np.full(n_points, 2.0)
    weights[1::2] = 4.0
    weights[0] = weights[-1] = 1.0
    return weights * (h / 3.0)


def simpson(values, h):
    """Composite Simpson integral of uniformly sampled values."""
    y = np.asarray(values, dtype=float)
    _check_even_intervals(y.shape[-1])
    return float(scipy.integrate.simpson(y, dx=h))


def cumulative_simpson(values, h):
    """Running Simpson integral with result[0] = 0.

    Even nodes carry the composite Simpson value; odd nodes close the
    half panel with the quadratic through the surrounding panel.
    """
    y = np.asarray(values, dtype=float)
    _check_even_intervals(y.shape[-1])
    return scipy.integrate.cumulative_simpson(y, dx=h, axis=-1, initial=0.0)


def reverse_cumulative_simpson(values, h):
    """Running integral from the far end: result[i] = integral over [s_i, a]."""
    y = np.asarray(values, dtype=float)
    return cumulative_simpson(y[..., ::-1], h)[..., ::-1]


def scan_grid(window, step):
    """Uniform grid covering window with spacing no larger than step."""
    lo, hi = window
    if hi <= lo or step <= 0:
        raise NumericsError(f"Empty scan window {window} with step {step}")
    count = int(math.ceil((hi - lo) / step)) + 1
    return np.linspace(lo, hi, count)


def bracket_and_bisect(f, window, step, tol=1e-12, vectorized=False):
    """Sorted sign-change roots of f on the half-open window (lo, hi].

    Even-order roots show no sign change and are left to the caller. With
    vectorized=True f is evaluated once on the whole scan grid.
    """
    grid = scan_grid(window, step)
    count = len(grid)
    if vectorized:
        values = np.asarray(f(grid), dtype=float)
    else:
        values = np.array([f(k) for k in grid], dtype=float)

    roots = []
    for i in range(1, count):
        if values[i] == 0.0:
            roots.append(float(grid[i]))
            continue
        if values[i - 1] * values[i] < 0.0:
            root = scipy.optimize.brentq(f, grid[i - 1], grid[i], xtol=1e-300, rtol=tol)
            roots.append(float(root))
    return sorted(roots)


def refine_minimum(f, bracket, tol=1e-13):
    """Golden-section refinement of a bracketed minimum (a, b, c), f(b) <= f(a), f(c)."""
    result = scipy.optimize.minimize_scalar(
        f, bracket=bracket, method="golden", options={"xtol": tol}
    )
    return float(result.x), float(result.fun)


def null_space(matrix, threshold=1e-8):
    """Orthonormal null-space basis from the SVD, cut at threshold * sigma_max."""
    a = np.atleast_2d(np.asarray(matrix, dtype=float))
    if not np.all(np.isfinite(a)):
        raise NumericsError("Null space requested for a matrix with non-finite entries")
    return scipy.linalg.null_space(a, rcond=threshold)


def solve_dense(a, b, tol=1e-9):
    """Least-squares solve of a consistent (possibly overdetermined) system.

    Returns (x, rank). Raises when the residual shows the system is
    inconsistent.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.asarray(b, dtype=float)
    x, _, rank, _ = scipy.linalg.lstsq(a, b)
    residual = np.linalg.norm(a @ x - b)
    scale = np.linalg.norm(b) + np.linalg.norm(a) * np.linalg.norm(x)
    if residual > tol * max(scale, np.finfo(float).tiny):
        raise NumericsError(
            f"Inconsistent linear system: residual {residual:.3e} against scale {scale:.3e}"
        )
    return x, int(rank)


def permutation_sum(tensor):
    """Sum a tensor over all permutations of its indices.

    Entries that are permutations of one another are filled from a single
    sum, so the output is exactly symmetric.
    """
    t = np.asarray(tensor, dtype=float)
    rank = t.ndim
    out = np.empty_like(t)
    done = {}
    for index in itertools.product(range(t.shape[0]), repeat=rank):
        key = tuple(sorted(index))
        if key not in done:
            total = 0.0
            for perm in itertools.permutations(key):
                total += t[perm]
            done[key] = total
        out[index] = done[key]
    return out
