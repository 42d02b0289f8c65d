"""The fibering map t -> E(u^t) and its unique critical point t*.

All arithmetic runs on the five component integrals, using

    A(u^t) = t^2 A,  P(u^t) = t^(pd/2) P,  R(u^t) = t^(qd/2) R,

with B and M unchanged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NoFiberError
from .functionals import (
    Coefficients,
    Components,
    ModelParams,
    coeff_H,
    coeff_K,
    components,
    core_coefficients,
)
from .grid import Field


def scaled_components(c: Components, params: ModelParams, t: float) -> Components:
    d = params.d
    return Components(
        A=t * t * c.A, B=c.B, M=c.M,
        P=t ** (params.p * d / 2) * c.P, R=t ** (params.q * d / 2) * c.R,
    )


def fiber_energy(c: Components, params: ModelParams, t: float, co: Coefficients) -> float:
    return coeff_H(scaled_components(c, params, t), params, co)


def fiber_q(c: Components, params: ModelParams, t: float, co: Coefficients) -> float:
    return coeff_K(scaled_components(c, params, t), params, co)


def _y_of_t(c: Components, params: ModelParams, co: Coefficients, t: float) -> float:
    """Q(u^t)/t, the derivative of t -> E(u^t)."""
    return fiber_q(c, params, t, co) / t


@dataclass
class FiberResult:
    t_star: float
    q_at_tstar: float
    bracket: tuple[float, float]
    profile: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))
    iterations: int = 0


def tstar_from_components(c: Components, params: ModelParams, co: Coefficients | None = None,
                          tol: float = 1e-12, max_iter: int = 200) -> FiberResult:
    """Root of Q(u^t) by bracketed bisection followed by safeguarded Newton."""
    if co is None:
        co = core_coefficients(params)
    if not (c.A > 0.0) or not (co.s_q * c.R > 0.0):
        raise NoFiberError("fibering map needs a nonzero x-gradient and a nonzero q-term")
    p, q, d = params.p, params.q, params.d
    ap = co.s_p * p * d / (2 * (p + 2)) * c.P
    aq = co.s_q * q * d / (2 * (q + 2)) * c.R
    ep, eq = p * d / 2 - 2.0, q * d / 2 - 2.0

    # f(t) = Q(u^t)/t^2 = A + ap t^ep - aq t^eq has the same sign as y(t)
    def f(t):
        return c.A + ap * t**ep - aq * t**eq

    def fprime(t):
        return ap * ep * t ** (ep - 1) - aq * eq * t ** (eq - 1)

    lo, hi = 1e-6, 1.0
    while f(lo) <= 0.0:
        lo *= 1e-4
        if lo < 1e-200:
            raise NoFiberError("Q(u^t) is not positive near t = 0")
    hi = max(hi, 2.0 * lo)
    while f(hi) >= 0.0:
        hi *= 2.0
        if hi > 1e150:
            raise NoFiberError("no sign change of Q(u^t) found")
    bracket = (lo, hi)
    # bisection in log t until the bracket is tight enough for Newton
    it = 0
    a, b = lo, hi
    while b / a > 1.05 and it < max_iter:
        m = math.sqrt(a * b)
        if f(m) > 0.0:
            a = m
        else:
            b = m
        it += 1
    t = math.sqrt(a * b)
    for _ in range(60):
        it += 1
        ft = f(t)
        if ft > 0.0:
            a = t
        else:
            b = t
        der = fprime(t)
        step = ft / der if der != 0.0 else 0.0
        t_new = t - step
        if not (a < t_new < b) or der == 0.0:
            t_new = 0.5 * (a + b)
        if abs(t_new - t) <= 4e-16 * t:
            t = t_new
            break
        t = t_new
    # near a large t* one ulp of t moves Q by several ulps of its terms; keep the best neighbour
    cands = [t]
    lo_t = hi_t = t
    for _ in range(16):
        lo_t, hi_t = math.nextafter(lo_t, 0.0), math.nextafter(hi_t, math.inf)
        cands += [lo_t, hi_t]
    qvals = [fiber_q(c, params, s, co) for s in cands]
    k = int(np.argmin(np.abs(qvals)))
    t, qv = cands[k], qvals[k]
    scale = max(c.A * t * t, abs(ap) * t ** (ep + 2), aq * t ** (eq + 2), 1e-300)
    if abs(qv) > max(tol, 64 * np.finfo(float).eps * scale):
        raise NoFiberError(f"Newton iteration stalled with |Q(u^t*)| = {abs(qv):.3e}")
    return FiberResult(t, qv, bracket, iterations=it)


def find_tstar(u: Field, params: ModelParams, tol: float = 1e-10,
               co: Coefficients | None = None) -> FiberResult:
    c = components(u, params)
    return tstar_from_components(c, params, co, tol)


def profile_from_components(c: Components, params: ModelParams, t_grid,
                            co: Coefficients | None = None) -> np.ndarray:
    if co is None:
        co = core_coefficients(params)
    ts = np.atleast_1d(np.asarray(t_grid, dtype=float))
    rows = [(t, fiber_energy(c, params, t, co), fiber_q(c, params, t, co)) for t in ts]
    return np.array(rows, dtype=float).reshape(-1, 3)


def fiber_profile(u: Field, params: ModelParams, t_grid,
                  co: Coefficients | None = None) -> np.ndarray:
    """Table of (t, E(u^t), Q(u^t)) evaluated from the exact scaling laws."""
    return profile_from_components(components(u, params), params, t_grid, co)


def sign_changes(qvals: np.ndarray) -> int:
    s = np.sign(qvals)
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))
