"""Limited-memory BFGS with a strong-Wolfe line search.

Follows Nocedal & Wright, *Numerical Optimization* (2nd ed.): the two-loop
recursion (Alg. 7.4) for the search direction and the bracketing/zoom line
search (Alg. 3.5/3.6) with safeguarded cubic interpolation.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

__all__ = ["LbfgsResult", "minimize_lbfgs", "strong_wolfe"]


@dataclass
class LbfgsResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iterations: int
    status: str
    info: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)
    evaluations: int = 0

    @property
    def warning(self) -> bool:
        return self.status == "line_search_failed"


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimiser of the cubic through two points with slopes, or None."""
    d1 = ga + gb - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - ga * gb
    if disc < 0:
        return None
    d2 = math.copysign(math.sqrt(disc), b - a)
    denom = gb - ga + 2.0 * d2
    if denom == 0:
        return None
    t = b - (b - a) * (gb + d2 - d1) / denom
    return t if math.isfinite(t) else None


def strong_wolfe(phi, f0, g0, alpha0, c1=1e-4, c2=0.9, alpha_max=1e10, max_evals=25):
    """Find a step satisfying the strong Wolfe conditions.

    ``phi(alpha)`` returns ``(f, dphi, payload)``.  Returns
    ``(alpha, f, payload, evals)`` or ``(None, best_f, best_payload, evals)``
    on failure, where the best entry is the lowest value seen that still
    satisfies sufficient decrease (``None`` payload if there was none).
    """
    evals = 0
    best = (None, f0, None)

    def probe(alpha):
        nonlocal evals, best
        evals += 1
        f, d, payload = phi(alpha)
        if f <= f0 + c1 * alpha * g0 and f < best[1]:
            best = (alpha, f, payload)
        return f, d, payload

    def zoom(lo, f_lo, d_lo, hi, f_hi, d_hi):
        while evals < max_evals:
            t = _cubic_min(lo, f_lo, d_lo, hi, f_hi, d_hi)
            left, right = min(lo, hi), max(lo, hi)
            margin = 0.1 * (right - left)
            if t is None or not (left + margin <= t <= right - margin):
                t = 0.5 * (lo + hi)
            if abs(hi - lo) * max(1.0, abs(d_lo)) < 1e-16:
                break
            f, d, payload = probe(t)
            if not math.isfinite(f) or f > f0 + c1 * t * g0 or f >= f_lo:
                hi, f_hi, d_hi = t, f, d
            else:
                if abs(d) <= -c2 * g0:
                    return t, f, payload
                if d * (hi - lo) >= 0:
                    hi, f_hi, d_hi = lo, f_lo, d_lo
                lo, f_lo, d_lo = t, f, d
        return None

    prev, f_prev, d_prev = 0.0, f0, g0
    alpha = alpha0
    first = True
    while evals < max_evals:
        f, d, payload = probe(alpha)
        if not math.isfinite(f) or f > f0 + c1 * alpha * g0 or (not first and f >= f_prev):
            found = zoom(prev, f_prev, d_prev, alpha, f, d)
            break
        if abs(d) <= -c2 * g0:
            return alpha, f, payload, evals
        if d >= 0:
            found = zoom(alpha, f, d, prev, f_prev, d_prev)
            break
        prev, f_prev, d_prev = alpha, f, d
        alpha = min(2.0 * alpha, alpha_max)
        first = False
    else:
        found = None
    if found is not None:
        return found[0], found[1], found[2], evals
    return None, best[1], best[2] if best[0] is not None else None, evals


def minimize_lbfgs(fun, x0, max_iters=1000, grad_tol=1e-6, memory=10, c1=1e-4, c2=0.9,
                   callback=None) -> LbfgsResult:
    """Minimise ``fun`` starting at ``x0``.

    ``fun(x)`` returns ``(f, grad)`` or ``(f, grad, info)``; ``info`` of the
    accepted iterate is kept in the result and passed to ``callback``.
    Iteration stops once ``max(|grad|) < grad_tol`` or after ``max_iters``
    accepted steps.  Every accepted step strictly satisfies sufficient
    decrease, so the objective never increases.
    """
    shape = np.shape(x0)
    x = np.array(x0, dtype=np.float64).ravel()

    def evaluate(v):
        out = fun(v.reshape(shape))
        f, g = float(out[0]), np.asarray(out[1], dtype=np.float64).ravel()
        info = out[2] if len(out) > 2 else {}
        return f, g, info

    f, g, info = evaluate(x)
    n_evals = 1
    hist = deque(maxlen=memory)
    trace = [dict(iteration=0, loss=f, grad_norm=float(np.max(np.abs(g), initial=0.0)),
                  step=0.0, line_search="init", **info)]
    if callback:
        callback(trace[-1])
    status = "max_iters"
    it = 0
    while True:
        gnorm = float(np.max(np.abs(g), initial=0.0))
        if gnorm < grad_tol:
            status = "converged"
            break
        if it >= max_iters:
            break
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, rho in reversed(hist):
            a = rho * s.dot(q)
            alphas.append(a)
            q -= a * y
        if hist:
            s, y, _ = hist[-1]
            q *= s.dot(y) / y.dot(y)
        for (s, y, rho), a in zip(hist, reversed(alphas)):
            b = rho * y.dot(q)
            q += (a - b) * s
        direction = -q
        dg = direction.dot(g)
        if not dg < 0:
            hist.clear()
            direction = -g
            dg = -g.dot(g)
        alpha0 = 1.0 if hist else min(1.0, 1.0 / float(np.abs(g).sum()))

        def phi(alpha):
            xt = x + alpha * direction
            ft, gt, it_info = evaluate(xt)
            return ft, gt.dot(direction), (xt, gt, it_info)

        step, f_new, payload, evals = strong_wolfe(phi, f, dg, alpha0, c1=c1, c2=c2)
        n_evals += evals
        ls_status = "ok"
        if step is None:
            if payload is None:
                status = "line_search_failed"
                break
            ls_status = "weak"
        x_new, g_new, info_new = payload
        if not f_new <= f:
            status = "line_search_failed"
            break
        s = x_new - x
        y = g_new - g
        sy = s.dot(y)
        if sy > 1e-12 * max(1.0, float(np.sqrt(y.dot(y) * s.dot(s)))):
            hist.append((s, y, 1.0 / sy))
        x, f, g, info = x_new, f_new, g_new, info_new
        it += 1
        trace.append(dict(iteration=it, loss=f, grad_norm=float(np.max(np.abs(g), initial=0.0)),
                          step=float(step if step is not None else np.linalg.norm(s)),
                          line_search=ls_status, **info))
        if callback:
            callback(trace[-1])
        if ls_status == "weak":
            # the point is still a descent step; keep going with a fresh memory
            hist.clear()
    return LbfgsResult(x.reshape(shape), f, g.reshape(shape), it, status, info, trace, n_evals)
