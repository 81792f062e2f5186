"""Low-level adaptive Gauss-Kronrod quadrature engine.

Implements the (G7, K15) pair with QUADPACK-style per-panel error estimates,
globally adaptive refinement, a batched variant that shares one partition
across a whole family of integrands (used to vectorize marginal evaluation
over many query points), and a log-space variant for positive integrands
whose magnitude spans hundreds of orders.

Endpoint behaviour: finite intervals are integrated through the substitution
x = a + s**2 (and mirrored at the upper end), which removes integrable
algebraic singularities such as t**(-1/2) without any special casing.
"""

from __future__ import annotations

import numpy as np

from .errors import QuadratureError, TransformDivergenceError

# 15-point Kronrod nodes on [-1, 1] and the embedded 7-point Gauss weights.
# Values are the standard QUADPACK abscissae.
_XK = np.array([
    -0.991455371120813, -0.949107912342759, -0.864864423359769,
    -0.741531185599394, -0.586087235467691, -0.405845151377397,
    -0.207784955007898, 0.0,
    0.207784955007898, 0.405845151377397, 0.586087235467691,
    0.741531185599394, 0.864864423359769, 0.949107912342759,
    0.991455371120813,
])
_WK = np.array([
    0.022935322010529, 0.063092092629979, 0.104790010322250,
    0.140653259715525, 0.169004726639267, 0.190350578064785,
    0.204432940075298, 0.209482141084728,
    0.204432940075298, 0.190350578064785, 0.169004726639267,
    0.140653259715525, 0.104790010322250, 0.063092092629979,
    0.022935322010529,
])
_WG = np.array([
    0.0, 0.129484966168870, 0.0, 0.279705391489277, 0.0,
    0.381830050505119, 0.0, 0.417959183673469, 0.0,
    0.381830050505119, 0.0, 0.279705391489277, 0.0,
    0.129484966168870, 0.0,
])

_EPS = np.finfo(float).eps


def panel_nodes(a: float, b: float) -> np.ndarray:
    """Kronrod nodes mapped onto the interval (a, b); all interior."""
    half = 0.5 * (b - a)
    return 0.5 * (a + b) + half * _XK


def _panel_estimates(vals: np.ndarray, half: float):
    """K15 integral and error estimate from node values.

    ``vals`` has node axis last; returns (integral, error) with that axis
    contracted.  Error follows the QUADPACK rescaling of |K15-G7|.
    """
    resk = vals @ _WK
    resg = vals @ _WG
    resabs = np.abs(vals) @ _WK
    mean = resk * 0.5
    resasc = np.abs(vals - mean[..., None]) @ _WK
    err = np.abs(resk - resg)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(resasc > 0.0, np.minimum(1.0, (200.0 * err / np.where(resasc > 0, resasc, 1.0)) ** 1.5), 0.0)
    err = np.where(resasc > 0.0, resasc * scale, err)
    err = np.maximum(err, 50.0 * _EPS * resabs)
    return resk * half, err * half


def adaptive(f, a: float, b: float, rel_tol: float = 1e-10,
             abs_tol: float = 1e-14, max_depth: int = 40,
             max_panels: int = 4096, initial_panels: int = 4) -> float:
    """Globally adaptive G7/K15 quadrature of a vectorized scalar integrand.

    ``f`` must map a node array (m,) to values (m,).  Raises
    :class:`QuadratureError` when the subdivision budget is exhausted.
    """
    res = adaptive_batch(lambda x: np.atleast_2d(f(x)), a, b,
                         rel_tol=rel_tol, abs_tol=abs_tol,
                         max_depth=max_depth, max_panels=max_panels,
                         initial_panels=initial_panels)
    return float(res[0])


def adaptive_batch(fmat, a: float, b: float, rel_tol: float = 1e-10,
                   abs_tol: float = 1e-14, max_depth: int = 40,
                   max_panels: int = 4096, initial_panels: int = 4) -> np.ndarray:
    """Adaptive quadrature of a family of integrands over one shared partition.

    ``fmat`` maps node array (m,) -> values (P, m).  The partition is refined
    until every row meets max(abs_tol, rel_tol*|I_row|).  Returns (P,).
    """
    if not b > a:
        raise ValueError(f"empty integration interval ({a}, {b})")
    edges = np.linspace(a, b, initial_panels + 1)
    panels = []  # entries: [a, b, depth, I(P,), err(P,)]
    for lo, hi in zip(edges[:-1], edges[1:]):
        panels.append(_make_panel(fmat, lo, hi, 0))
    while True:
        total = np.sum([p[3] for p in panels], axis=0)
        err = np.sum([p[4] for p in panels], axis=0)
        scale = np.maximum(abs_tol, rel_tol * np.abs(total))
        bad = err > scale
        if not np.any(bad):
            return total
        # refine the panel contributing most to the worst row
        ratios = [np.max(p[4] / scale) for p in panels]
        idx = int(np.argmax(ratios))
        lo, hi, depth = panels[idx][0], panels[idx][1], panels[idx][2]
        if depth >= max_depth:
            raise QuadratureError(
                f"max_depth={max_depth} exceeded on [{lo:.6g}, {hi:.6g}]",
                worst_interval=(lo, hi), total=total, error=err)
        if len(panels) >= max_panels:
            raise QuadratureError(
                f"panel budget {max_panels} exhausted",
                worst_interval=(lo, hi), total=total, error=err)
        mid = 0.5 * (lo + hi)
        panels[idx] = _make_panel(fmat, lo, mid, depth + 1)
        panels.append(_make_panel(fmat, mid, hi, depth + 1))


def _make_panel(fmat, lo, hi, depth):
    half = 0.5 * (hi - lo)
    vals = np.asarray(fmat(panel_nodes(lo, hi)), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise QuadratureError(
            f"non-finite integrand values on [{lo:.6g}, {hi:.6g}]",
            worst_interval=(lo, hi))
    I, err = _panel_estimates(vals, half)
    return [lo, hi, depth, I, err]


def adaptive_batch_log(logf, a: float, b: float, rel_tol: float = 1e-10,
                       max_depth: int = 40, max_panels: int = 4096,
                       initial_panels: int = 4) -> np.ndarray:
    """Log-space adaptive quadrature for positive integrand families.

    ``logf`` maps nodes (m,) -> log-values (P, m) (-inf allowed where the
    integrand vanishes).  Returns log of the integral per row.  Values may
    span hundreds of orders of magnitude; only relative tolerance applies.
    """
    if not b > a:
        raise ValueError(f"empty integration interval ({a}, {b})")
    edges = np.linspace(a, b, initial_panels + 1)
    panels = []  # entries: [a, b, depth, logI(P,), logerr(P,)]
    for lo, hi in zip(edges[:-1], edges[1:]):
        panels.append(_make_panel_log(logf, lo, hi, 0))

    def _combine():
        logI = _logsumexp_rows([p[3] for p in panels])
        logE = _logsumexp_rows([p[4] for p in panels])
        return logI, logE

    log_rtol = np.log(rel_tol)
    while True:
        logI, logE = _combine()
        bad = logE > logI + log_rtol
        if not np.any(bad):
            return logI
        margins = [np.max(p[4] - logI) for p in panels]
        idx = int(np.argmax(margins))
        lo, hi, depth = panels[idx][0], panels[idx][1], panels[idx][2]
        if depth >= max_depth:
            raise QuadratureError(
                f"max_depth={max_depth} exceeded on [{lo:.6g}, {hi:.6g}] (log mode)",
                worst_interval=(lo, hi))
        if len(panels) >= max_panels:
            raise QuadratureError(
                f"panel budget {max_panels} exhausted (log mode)",
                worst_interval=(lo, hi))
        mid = 0.5 * (lo + hi)
        panels[idx] = _make_panel_log(logf, lo, mid, depth + 1)
        panels.append(_make_panel_log(logf, mid, hi, depth + 1))


def _make_panel_log(logf, lo, hi, depth):
    half = 0.5 * (hi - lo)
    lv = np.asarray(logf(panel_nodes(lo, hi)), dtype=float)
    if np.any(np.isnan(lv)) or np.any(lv == np.inf):
        raise QuadratureError(
            f"invalid log-integrand on [{lo:.6g}, {hi:.6g}]",
            worst_interval=(lo, hi))
    M = np.max(lv, axis=-1)
    M = np.where(np.isfinite(M), M, 0.0)
    vals = np.exp(lv - M[..., None])
    I, err = _panel_estimates(vals, half)
    with np.errstate(divide="ignore"):
        logI = M + np.log(np.maximum(I, 0.0))
        logerr = M + np.log(np.maximum(err, 5.0 * _EPS * np.max(vals, axis=-1) * half))
    return [lo, hi, depth, logI, logerr]


def _logsumexp_rows(arrs):
    stacked = np.stack(arrs, axis=0)
    M = np.max(stacked, axis=0)
    safe = np.where(np.isfinite(M), M, 0.0)
    out = safe + np.log(np.sum(np.exp(stacked - safe), axis=0))
    return np.where(np.isfinite(M), out, M)


def split_sqrt_maps(f, a: float, b: float):
    """Rewrite integral over (a, b) as two pieces with sqrt endpoint maps.

    Returns [(g, 0, s_max), ...] with g vectorized like f.  The maps
    x = a + s**2 and x = b - s**2 regularize integrable endpoint
    singularities; smooth integrands stay smooth.
    """
    mid = 0.5 * (a + b)

    def lower(s):
        x = a + s * s
        return f(x) * (2.0 * s)

    def upper(s):
        x = b - s * s
        return f(x) * (2.0 * s)

    return [(lower, 0.0, np.sqrt(mid - a)), (upper, 0.0, np.sqrt(b - mid))]


def integrate_finite(f, a: float, b: float, rel_tol: float = 1e-10,
                     abs_tol: float = 1e-14, max_depth: int = 40) -> float:
    """Integrate a vectorized integrand over a finite interval.

    Both endpoints are treated as potentially (integrably) singular.
    """
    total = 0.0
    for g, lo, hi in split_sqrt_maps(f, a, b):
        total += adaptive(g, lo, hi, rel_tol=rel_tol, abs_tol=max(abs_tol / 2, 1e-300),
                          max_depth=max_depth)
    return total


def scan_log_peak(log_g, lo: float, hi: float, tail_cut: float,
                  n_probe: int = 200, hard_horizon: float = 1e8):
    """Locate the peak of a log-integrand and truncation bounds for its tails.

    ``log_g`` maps a node array to log-magnitudes.  Returns
    (lo_eff, hi_eff, log_peak).  For an infinite upper limit the probe grid is
    extended decade by decade; if the integrand is still above the truncation
    threshold at the hard horizon and increasing, the integral is declared
    divergent.
    """
    if lo < 0:
        raise ValueError("scan requires a nonnegative lower limit")
    lo_probe = max(lo, 1e-10)
    finite_hi = np.isfinite(hi)
    hi_probe = hi if finite_hi else 1e4
    log_thresh_gap = -np.log(tail_cut)

    while True:
        xs = np.geomspace(lo_probe, hi_probe, n_probe)
        with np.errstate(all="ignore"):
            ls = np.asarray(log_g(xs), dtype=float)
        ls = np.where(np.isnan(ls), -np.inf, ls)
        peak_idx = int(np.argmax(ls))
        log_peak = ls[peak_idx]
        if not np.isfinite(log_peak):
            return lo, (hi if finite_hi else hi_probe), -np.inf
        thresh = log_peak - log_thresh_gap
        tail = ls[peak_idx:]
        below = np.nonzero(tail < thresh)[0]
        if below.size:
            hi_eff = xs[peak_idx + below[0]]
            break
        if finite_hi:
            hi_eff = hi
            break
        # tail never dropped below threshold: extend or declare divergence
        if hi_probe >= hard_horizon:
            if ls[-1] >= ls[-2]:
                raise TransformDivergenceError(
                    "integrand still above truncation threshold at the scan "
                    f"horizon x={hi_probe:.3g} and not decreasing",
                    horizon=hi_probe, log_value=float(ls[-1]),
                    log_peak=float(log_peak))
            hi_eff = hi_probe
            break
        hi_probe *= 100.0
        n_probe = min(2 * n_probe, 2000)

    head = ls[:peak_idx + 1]
    below = np.nonzero(head < thresh)[0]
    lo_eff = xs[below[-1]] if below.size else lo
    return float(lo_eff), float(hi_eff), float(log_peak)
