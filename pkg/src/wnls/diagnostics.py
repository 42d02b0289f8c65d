"""Scattering-side diagnostics: Galilean boosts, localized momentum, the
localized coercivity inequality, interaction-Morawetz snapshots and a
heuristic dispersion proxy.

Cutoffs are evaluated on the periodic box: the displacement x - z is wrapped
into [-L, L) before the profile is applied.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .errors import DomainError, GateError, UnsupportedDimensionError
from .functionals import ModelParams, coeff_H, coeff_K, components, core_coefficients
from .grid import Field, GridSpec

DENOM_FLOOR = 1e-14


def chi(s):
    """1 on [0,1], 0 on [2,inf), smoothstep in between."""
    u = np.clip(np.asarray(s, dtype=float) - 1.0, 0.0, 1.0)
    return 1.0 - (3 * u**2 - 2 * u**3)


def chi_prime(s):
    u = np.clip(np.asarray(s, dtype=float) - 1.0, 0.0, 1.0)
    return -(6 * u - 6 * u**2)


@dataclass(frozen=True)
class CutoffSpec:
    R: float
    z: tuple = (0.0,)

    def __post_init__(self):
        if not self.R > 0:
            raise DomainError("cutoff radius must be positive")

    def displacement(self, spec: GridSpec) -> list[np.ndarray]:
        z = np.atleast_1d(np.asarray(self.z, dtype=float))
        if z.size != spec.d:
            raise DomainError(f"center has {z.size} components, grid has d={spec.d}")
        return [_wrap(c - zj, spec.L) for c, zj in zip(spec.x_coords(), z)]

    def values(self, spec: GridSpec) -> tuple[np.ndarray, list[np.ndarray]]:
        """chi_R(x - z) and its gradient on the x-grid."""
        disp = self.displacement(spec)
        r = np.sqrt(sum(d * d for d in disp))
        s = r / self.R
        val = chi(s)
        dr = chi_prime(s) / self.R
        safe = np.where(r > 0, r, 1.0)
        grad = [np.where(r > 0, dr * d / safe, 0.0) for d in disp]
        return val, grad


def _wrap(a, L):
    return (a + L) % (2 * L) - L


def galilean_boost(u: Field, xi) -> Field:
    """Multiplication by exp(i x . xi)."""
    spec = u.spec
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi.size != spec.d:
        raise DomainError(f"xi has {xi.size} components, grid has d={spec.d}")
    phase = sum(c * x for c, x in zip(xi, spec.x_coords()))
    return Field(spec, u.values * np.exp(1j * phase)[..., None])


def _grad_x(spec: GridSpec, values: np.ndarray) -> list[np.ndarray]:
    hat = sfft.fftn(values)
    return [sfft.ifftn(1j * k * hat) for k in spec.kx_axes]


def xi_localized(u: Field, cutoff: CutoffSpec) -> np.ndarray:
    """Localized momentum quotient; zero when the localized mass vanishes."""
    spec = u.spec
    w, _ = cutoff.values(spec)
    w2 = (w * w)[..., None]
    den = spec.weight * float(np.sum(w2 * np.abs(u.values) ** 2))
    if den < DENOM_FLOOR:
        return np.zeros(spec.d)
    grads = _grad_x(spec, u.values)
    ub = np.conj(u.values)
    num = np.array([spec.weight * float(np.sum(w2 * np.imag(ub * g))) for g in grads])
    return -num / den


def _localized(u: Field, cutoff: CutoffSpec, xi: np.ndarray):
    """chi_R(.-z) u^xi and its x-gradient by the product rule."""
    spec = u.spec
    w, gw = cutoff.values(spec)
    phase = np.exp(1j * sum(c * x for c, x in zip(xi, spec.x_coords())))[..., None]
    grads = _grad_x(spec, u.values)
    v = w[..., None] * u.values * phase
    dv = [phase * (gw[j][..., None] * u.values + w[..., None] * (grads[j] + 1j * xi[j] * u.values))
          for j in range(spec.d)]
    return v, dv


def _gate(u: Field, params: ModelParams, threshold_value, omega, want_q_positive=True) -> None:
    rec_c = components(u, params)
    co = core_coefficients(params)
    E = coeff_H(rec_c, params, co)
    Q = coeff_K(rec_c, params, co)
    if threshold_value is None:
        raise GateError("a threshold (m_c or gamma_omega) is required to certify the datum")
    level = E if params.mu == -1 else E + 0.5 * (omega if omega is not None else math.nan) * rec_c.M
    if params.mu == 1 and omega is None:
        raise GateError("mu = +1 needs omega to form the action")
    ok = level < threshold_value and ((Q > 0) if want_q_positive else (Q < 0))
    if not ok:
        raise GateError(f"datum not certified: level={level:.6g}, threshold={threshold_value:.6g}, Q={Q:.3e}")


def coercivity_check(u: Field, params: ModelParams, cutoff: CutoffSpec, delta: float,
                     threshold_value: float | None = None, omega: float | None = None,
                     z_grid=None, R_ladder=None) -> dict:
    """Margin K(chi_R(.-z) u^xi) - delta ||grad_x(chi_R(.-z) u^xi)||^2.

    The right-hand side uses the gradient of the whole localized field; the
    term with the gradient falling on the cutoff alone is reported as well.
    With ``z_grid`` and/or ``R_ladder`` the minimum margin over the scan is
    returned together with the per-point table.
    """
    spec = u.spec
    if not np.any(u.values):
        return {"margin": 0.0, "lhs": 0.0, "rhs": 0.0, "rhs_cutoff_only": 0.0, "table": []}
    _gate(u, params, threshold_value, omega)
    zs = [cutoff.z] if z_grid is None else [tuple(np.atleast_1d(z)) for z in z_grid]
    Rs = [cutoff.R] if R_ladder is None else list(R_ladder)
    co = core_coefficients(params)
    table = []
    for R in Rs:
        for z in zs:
            cut = CutoffSpec(R, z)
            xi = xi_localized(u, cut)
            v, dv = _localized(u, cut, xi)
            c = components(Field(spec, v), params)
            lhs = coeff_K(c, params, co)
            rhs = spec.weight * float(sum(np.sum(np.abs(g) ** 2) for g in dv))
            _, gw = cut.values(spec)
            rhs_cut = spec.weight * float(sum(np.sum((g * g)[..., None] * np.abs(u.values) ** 2) for g in gw))
            table.append({"R": R, "z": z, "xi": xi, "lhs": lhs, "rhs": rhs, "rhs_cutoff_only": rhs_cut,
                          "margin": lhs - delta * rhs})
    worst = min(table, key=lambda r: r["margin"])
    return {"margin": worst["margin"], "lhs": worst["lhs"], "rhs": worst["rhs"],
            "rhs_cutoff_only": worst["rhs_cutoff_only"], "delta": delta, "table": table}


# -- interaction Morawetz snapshot ---------------------------------------------------------


def _z_indices(spec: GridSpec, z_grid) -> np.ndarray:
    z = np.atleast_1d(np.asarray(z_grid, dtype=float))
    idx = np.rint((z + spec.L) / spec.h_x).astype(int)
    if np.any(np.abs(spec.x[idx % spec.n_x] - _wrap(z, spec.L)) > 1e-9 * spec.h_x):
        raise DomainError("z_grid points must lie on the x-grid")
    return idx % spec.n_x


def _correlate(f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """c[m] = sum_n f[n - m] g[n] on the periodic grid."""
    return np.real(sfft.ifft(np.conj(sfft.fft(f)) * sfft.fft(g)))


def imdm_snapshot(u: Field, params: ModelParams, R_ladder, z_grid) -> float:
    """z- and R-averaged two-body density |chi u|^2 |grad(chi u^xi)|^2 at one time.

    The R average is the mean over the ladder (the dR/R average for a
    geometric ladder) with the 1/R^d factor; the z integral is the rectangle
    rule over ``z_grid``, whose points must lie on the x-grid.
    """
    spec = u.spec
    if spec.d != 1:
        raise UnsupportedDimensionError("imdm_snapshot is implemented for d = 1 only")
    idx = _z_indices(spec, z_grid)
    dz = spec.h_x
    h = spec.h_x
    vals = u.values
    grads = _grad_x(spec, vals)[0]
    ub = np.conj(vals)
    rho = spec.h_y * np.sum(np.abs(vals) ** 2, axis=-1)
    e = spec.h_y * np.sum(np.abs(grads) ** 2, axis=-1)
    j = spec.h_y * np.sum(np.imag(ub * grads), axis=-1)
    rr = spec.h_y * np.sum(np.real(ub * grads), axis=-1)
    # displacement table s[n] = x_n - x_0 wrapped, so f(x_n - z_m) = f(s[n - m])
    s = _wrap(spec.x - spec.x[0], spec.L)
    total = 0.0
    Rs = list(R_ladder)
    if not Rs:
        raise DomainError("R_ladder must not be empty")
    for R in Rs:
        w = chi(np.abs(s) / R)
        gw = chi_prime(np.abs(s) / R) / R * np.sign(s)
        w2 = w * w
        mass_loc = h * _correlate(w2, rho)
        mom_loc = h * _correlate(w2, j)
        with np.errstate(invalid="ignore", divide="ignore"):
            xi = np.where(mass_loc >= DENOM_FLOOR, -mom_loc / np.where(mass_loc > 0, mass_loc, 1.0), 0.0)
        grad_part = (h * _correlate(gw * gw, rho) + h * _correlate(w2, e)
                     + xi * xi * mass_loc + 2 * xi * mom_loc + 2 * h * _correlate(w * gw, rr))
        integrand = mass_loc * grad_part
        total += dz * float(np.sum(integrand[idx])) / R**spec.d
    return total / len(Rs)


def imdm_double_sum(u: Field, params: ModelParams, R_ladder, z_grid) -> float:
    """Brute-force evaluation of the same snapshot (reference for tests)."""
    spec = u.spec
    if spec.d != 1:
        raise UnsupportedDimensionError("imdm_double_sum is implemented for d = 1 only")
    idx = _z_indices(spec, z_grid)
    total = 0.0
    for R in R_ladder:
        acc = 0.0
        for m in idx:
            cut = CutoffSpec(R, (float(spec.x[m]),))
            xi = xi_localized(u, cut)
            w, _ = cut.values(spec)
            b = (np.abs(w[:, None] * u.values) ** 2).ravel()
            _, dv = _localized(u, cut, xi)
            a = (np.abs(dv[0]) ** 2).ravel()
            acc += spec.h_x * float(np.sum(np.outer(a, b))) * spec.weight**2
        total += acc / R**spec.d
    return total / len(list(R_ladder))


# -- dispersion proxy -------------------------------------------------------------------------------


def scattering_proxy(log, threshold_value: float | None = None, omega: float | None = None,
                     decay_fraction: float = 0.5) -> dict:
    """Heuristic: both potential norms fall by decay_fraction and Q keeps its positive sign.

    Free-flow logs need no threshold; nonlinear logs must be certified
    E(u0) < m (or S(u0) < gamma) with Q(u0) > 0.
    """
    params = log.params
    Q = np.asarray(log.Q, dtype=float)
    if not log.linear:
        if threshold_value is None:
            raise GateError("a threshold (m_c or gamma_omega) is required to certify the run")
        E0, M0 = log.E[0], log.M[0]
        if params.mu == 1:
            if omega is None:
                raise GateError("mu = +1 needs omega to form the action")
            level = E0 + 0.5 * omega * M0
        else:
            level = E0
        if not (level < threshold_value and Q[0] > 0):
            raise GateError(f"run not certified: level={level:.6g}, threshold={threshold_value:.6g}, Q(u0)={Q[0]:.3e}")
    elif not Q[0] > 0:
        raise GateError("free-flow proxy needs a nonzero x-gradient")
    P = np.asarray(log.p_norm, dtype=float)
    R = np.asarray(log.q_norm, dtype=float)
    p_ratio = P[-1] / P[0]
    q_ratio = R[-1] / R[0]
    q_positive = bool(np.all(Q > 0))
    return {
        "p_norm_ratio": float(p_ratio), "q_norm_ratio": float(q_ratio),
        "p_monotone": bool(np.all(np.diff(P) <= 0)), "q_monotone": bool(np.all(np.diff(R) <= 0)),
        "q_positive": q_positive,
        "verdict": "dispersive-consistent" if (p_ratio <= 1 - decay_fraction and q_ratio <= 1 - decay_fraction
                                               and q_positive) else "inconclusive",
    }
