"""NumPy implementations of the per-column hot kernels.

Every function operates column-wise on a (q, n) array: one abundance
vector per pixel. The compiled extension in ``_kernels.pyx`` provides the
same signatures; ``backend.py`` picks one of the two at import time.
"""

import numpy as np

BACKEND = "numpy"


def project_simplex_cols(v):
    """Euclidean projection of every column of ``v`` onto the unit simplex.

    Sort-based exact algorithm (Held et al. / Condat).
    """
    v = np.ascontiguousarray(v, dtype=np.float64)
    q, n = v.shape
    u = np.sort(v, axis=0)[::-1]
    css = np.cumsum(u, axis=0) - 1.0
    ind = np.arange(1, q + 1, dtype=np.float64)[:, None]
    cond = u - css / ind > 0.0
    # last index where cond holds (cond[0] is always True)
    rho = q - 1 - np.argmax(cond[::-1], axis=0)
    theta = css[rho, np.arange(n)] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def prox_l1(v, t):
    """Soft threshold: prox of t*||.||_1, column-wise."""
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def prox_group(v, starts, stops, t):
    """Block soft threshold: prox of t * sum_p ||u_{G_p}||_2 per column."""
    out = np.empty_like(v)
    for a, b in zip(starts, stops):
        block = v[a:b]
        norms = np.sqrt(np.sum(block * block, axis=0))
        scale = np.zeros_like(norms)
        nz = norms > t
        scale[nz] = 1.0 - t / norms[nz]
        out[a:b] = block * scale
    return out


def prox_elitist(v, starts, stops, t):
    """Prox of t * sum_p ||u_{G_p}||_1^2 per column.

    Groupwise sorted-threshold closed form: with w the sorted magnitudes of
    the group block, the active count k* is the largest k such that
    w_k * (1 + 2tk) > 2t * S_k, and the shrinkage is 2t * S_k / (1 + 2tk).
    """
    out = np.empty_like(v)
    for a, b in zip(starts, stops):
        block = v[a:b]
        m = b - a
        w = np.sort(np.abs(block), axis=0)[::-1]
        s = np.cumsum(w, axis=0)
        k = np.arange(1, m + 1, dtype=np.float64)[:, None]
        cond = w * (1.0 + 2.0 * t * k) > 2.0 * t * s
        nact = np.sum(cond, axis=0)
        cols = np.arange(block.shape[1])
        shrink = np.zeros(block.shape[1])
        pos = nact > 0
        shrink[pos] = (
            2.0 * t * s[nact[pos] - 1, cols[pos]] / (1.0 + 2.0 * t * nact[pos])
        )
        out[a:b] = np.sign(block) * np.maximum(np.abs(block) - shrink, 0.0)
    return out


def prox_frac(v, starts, stops, t, s, max_iter=100, tol=1e-10):
    """Prox of t * sum_p ||u_{G_p}||_2^s per column (0 < s <= 1).

    The minimizer is colinear with the input block, so each group reduces to
    the scalar problem min_c 0.5*(c - rho)^2 + t*c^s with rho = ||v_G||_2,
    solved by safeguarded Newton on the stationarity equation, with a
    zero-vs-interior candidate comparison (half-thresholding structure).

    Returns ``(out, max_residual)`` where the residual is the largest
    stationarity violation among converged interior solutions.
    """
    out = np.empty_like(v)
    max_resid = 0.0
    for a, b in zip(starts, stops):
        block = v[a:b]
        rho = np.sqrt(np.sum(block * block, axis=0))
        c, resid = _frac_scalar(rho, t, s, max_iter, tol)
        max_resid = max(max_resid, resid)
        scale = np.zeros_like(rho)
        nz = rho > 0.0
        scale[nz] = c[nz] / rho[nz]
        out[a:b] = block * scale
    return out, max_resid


def _frac_scalar(rho, t, s, max_iter, tol):
    """Vectorized scalar fractional prox: argmin 0.5*(c-rho)^2 + t*c^s, c>=0."""
    rho = np.asarray(rho, dtype=np.float64)
    c = np.zeros_like(rho)
    if t == 0.0:
        return rho.copy(), 0.0
    if s >= 1.0:
        # convex: h'(c) = c - rho + t*s*c^(s-1) increasing; root in (0, rho]
        lo = np.zeros_like(rho)
        active = rho > (t if s == 1.0 else 0.0)
    else:
        # h'(c) dips below zero only past the inflection point c_infl
        c_infl = (t * s * (1.0 - s)) ** (1.0 / (2.0 - s))
        hp_infl = c_infl - rho + t * s * c_infl ** (s - 1.0)
        active = (hp_infl < 0.0) & (rho > 0.0)
        lo = np.full_like(rho, c_infl)
    if not np.any(active):
        return c, 0.0

    r = rho[active]
    lo = lo[active]
    hi = r.copy()
    x = hi.copy()
    for _ in range(max_iter):
        g = x - r + t * s * x ** (s - 1.0)
        if np.all(np.abs(g) <= tol * np.maximum(1.0, r)):
            break
        # maintain bracket: root has g<0 below, g>0 above (g increasing here)
        hi = np.where(g > 0.0, x, hi)
        lo = np.where(g < 0.0, x, lo)
        gp = 1.0 + t * s * (s - 1.0) * x ** (s - 2.0)
        step = np.where(gp > 0.0, g / np.where(gp > 0.0, gp, 1.0), 0.0)
        x_new = x - step
        bad = (x_new <= lo) | (x_new >= hi) | (step == 0.0)
        x = np.where(bad, 0.5 * (lo + hi), x_new)
    g = x - r + t * s * x ** (s - 1.0)
    resid = float(np.max(np.abs(g))) if x.size else 0.0
    # accept the interior candidate only where it beats c = 0
    h_int = 0.5 * (x - r) ** 2 + t * x ** s
    h_zero = 0.5 * r ** 2
    x = np.where(h_int < h_zero, x, 0.0)
    c[active] = x
    return c, resid
