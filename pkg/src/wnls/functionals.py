"""Mass, energy, semivirial and reduced functionals with their rescaled and
R^d-reduced variants, plus the mass-preserving scalings.

Every functional in this module is assembled from five component integrals

    A = ||grad_x u||^2, B = ||d_y u||^2, M = ||u||_2^2,
    P = ||u||_{p+2}^{p+2}, R = ||u||_{q+2}^{q+2}

combined with a coefficient triple (a_y, s_p, s_q):

    H = a_y/2 B + 1/2 A + s_p P/(p+2) - s_q R/(q+2)
    K = A + s_p pd/(2(p+2)) P - s_q qd/(2(q+2)) R
    I = a_y/2 B + (1/2 - 2/(pd)) A + s_q (q/p - 1) R/(q+2)

The unscaled functionals use (1, mu, 1).  Gradient terms are evaluated as
Fourier mode sums so that they are exactly consistent with the spectral
derivatives used elsewhere.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .errors import (
    AliasingError,
    ConfigurationError,
    DegenerateInputError,
    DomainError,
    PreconditionError,
    UnsupportedDimensionError,
    UnsupportedProblemError,
)
from .grid import Discretization, Field, full_view, mass_radius, reduced_view, resample_x

Y_LENGTH = 2.0 * math.pi


@dataclass(frozen=True)
class ModelParams:
    mu: int
    p: float
    q: float
    d: int

    def __post_init__(self):
        if self.mu not in (-1, 1):
            raise ConfigurationError(f"mu must be -1 or +1, got {self.mu}")
        if self.d not in (1, 2):
            raise UnsupportedDimensionError(f"d={self.d} is not supported (only d=1 or d=2)")
        lo = 4.0 / self.d
        hi = math.inf if self.d == 1 else 4.0 / (self.d - 1)
        if not self.p > lo:
            raise ConfigurationError(f"admissibility violated: 4/d < p fails (p={self.p}, 4/d={lo:g})")
        if not self.p < self.q:
            raise ConfigurationError(f"admissibility violated: p < q fails (p={self.p}, q={self.q})")
        if not self.q < hi:
            raise ConfigurationError(
                f"admissibility violated: q < 4/(d-1) fails (q={self.q}, 4/(d-1)={hi:g})"
            )


@dataclass(frozen=True)
class Components:
    """The five component integrals of a field."""

    A: float
    B: float
    M: float
    P: float
    R: float


@dataclass(frozen=True)
class Coefficients:
    """Weights (a_y, s_p, s_q) of the d_y, p- and q-terms."""

    a_y: float = 1.0
    s_p: float = -1.0
    s_q: float = 1.0


def core_coefficients(params: ModelParams) -> Coefficients:
    return Coefficients(1.0, float(params.mu), 1.0)


def family_coefficients(params: ModelParams, lam: float, family: str) -> Coefficients:
    """Coefficients of the rescaled families as written in their definitions.

    ``sub``: lambda^(p/q-1) on the p-term (zero at lambda = inf).
    ``sup``: lambda^(q/p-1) on the q-term.
    """
    if family not in ("sub", "sup"):
        raise DomainError(f"family must be 'sub' or 'sup', got {family!r}")
    if isinstance(lam, (int, float)) and math.isinf(lam) and lam > 0:
        if family == "sup":
            raise UnsupportedProblemError("lambda = inf is only defined for the sub family")
        return Coefficients(math.inf, 0.0, 1.0)
    if not (lam > 0 and math.isfinite(lam)):
        raise DomainError(f"lambda must be positive, got {lam}")
    p, q = params.p, params.q
    if family == "sub":
        return Coefficients(lam, params.mu * lam ** (p / q - 1.0), 1.0)
    return Coefficients(lam, float(params.mu), lam ** (q / p - 1.0))


def coeff_H(c: Components, params: ModelParams, co: Coefficients) -> float:
    p, q = params.p, params.q
    yterm = 0.0 if c.B == 0.0 else 0.5 * co.a_y * c.B
    return yterm + 0.5 * c.A + co.s_p * c.P / (p + 2) - co.s_q * c.R / (q + 2)


def coeff_K(c: Components, params: ModelParams, co: Coefficients) -> float:
    p, q, d = params.p, params.q, params.d
    # the terms cancel on the fiber, so sum them with a single rounding
    return math.fsum((c.A, co.s_p * p * d / (2 * (p + 2)) * c.P, -co.s_q * q * d / (2 * (q + 2)) * c.R))


def coeff_I(c: Components, params: ModelParams, co: Coefficients) -> float:
    p, q, d = params.p, params.q, params.d
    yterm = 0.0 if c.B == 0.0 else 0.5 * co.a_y * c.B
    return yterm + (0.5 - 2.0 / (p * d)) * c.A + co.s_q * (q / p - 1.0) * c.R / (q + 2)


def components_array(values: np.ndarray, disc: Discretization, params: ModelParams,
                     hat: np.ndarray | None = None) -> Components:
    """Component integrals of raw samples laid out as ``disc.shape``."""
    if hat is None:
        hat = sfft.fftn(values)
    pw = np.abs(hat) ** 2
    spec_w = disc.weight / disc.size
    A = spec_w * float(np.sum(disc.k2x * pw))
    B = spec_w * float(np.sum(disc.k2y * pw))
    a = np.abs(values)
    a2 = a * a
    M = disc.weight * float(np.sum(a2))
    P = disc.weight * float(np.sum(a2 * a**params.p))
    R = disc.weight * float(np.sum(a2 * a**params.q))
    return Components(A, B, M, P, R)


def components(u: Field, params: ModelParams) -> Components:
    return components_array(u.values, full_view(u.spec), params)


@dataclass(frozen=True)
class FunctionalRecord:
    M: float
    E: float
    S_omega: float
    Q: float
    I: float
    omega: float
    grad_x2: float
    dy2: float
    p_norm: float
    q_norm: float

    @property
    def grad2(self) -> float:
        return self.grad_x2 + self.dy2


def record_from_components(c: Components, params: ModelParams, omega: float = 0.0) -> FunctionalRecord:
    co = core_coefficients(params)
    E = coeff_H(c, params, co)
    return FunctionalRecord(
        M=c.M, E=E, S_omega=E + 0.5 * omega * c.M, Q=coeff_K(c, params, co),
        I=coeff_I(c, params, co), omega=omega, grad_x2=c.A, dy2=c.B, p_norm=c.P, q_norm=c.R,
    )


def eval_core(u: Field, params: ModelParams, omega: float = 0.0) -> FunctionalRecord:
    return record_from_components(components(u, params), params, omega)


@dataclass(frozen=True)
class RescaledRecord:
    family: str
    lam: float
    hatted: bool
    M: float
    H: float
    K: float
    I: float
    S1: float


def is_y_independent(values: np.ndarray, tol: float = 1e-12) -> bool:
    ref = values[..., :1]
    scale = max(1.0, float(np.max(np.abs(values))) if values.size else 1.0)
    return float(np.max(np.abs(values - ref))) <= tol * scale


def hatted_components(u: Field, params: ModelParams) -> Components:
    """Component integrals on R^d of a y-independent field."""
    if not is_y_independent(u.values):
        raise PreconditionError("hatted functionals require a y-independent field")
    return components_array(u.values[..., :1], reduced_view(u.spec), params)


def eval_rescaled(u: Field, params: ModelParams, lam: float, family: str = "sub",
                  hatted: bool = False) -> RescaledRecord:
    co = family_coefficients(params, lam, family)
    c = hatted_components(u, params) if hatted else components(u, params)
    H = coeff_H(c, params, co)
    return RescaledRecord(
        family=family, lam=lam, hatted=hatted, M=c.M, H=H,
        K=coeff_K(c, params, co), I=coeff_I(c, params, co), S1=0.5 * c.M + H,
    )


# -- scalings -------------------------------------------------------------------

BANDWIDTH_TOL = 1e-10


def _scale_guard(u: Field, t: float) -> None:
    spec = u.spec
    r = mass_radius(spec, u.values, 0.999999)
    if t < 1.0 and r / t >= spec.L:
        raise AliasingError(
            f"scaled support radius {r / t:.4g} exceeds box half-width {spec.L:.4g}"
        )
    if t > 1.0:
        # modes beyond k_max/t are pushed past the grid bandwidth
        hat = sfft.fftn(u.values, axes=tuple(range(spec.d)))
        pw = np.abs(hat) ** 2
        total = float(pw.sum())
        if total > 0:
            kmax = math.pi / spec.h_x
            mask = np.zeros(spec.x_shape, dtype=bool)
            for j in range(spec.d):
                shape = [1] * spec.d
                shape[j] = spec.n_x
                mask = mask | (np.abs(spec.kx).reshape(shape) > kmax / t)
            frac = float(pw[mask].sum()) / total
            if frac > BANDWIDTH_TOL:
                raise AliasingError(
                    f"scaling by t={t:g} pushes a power fraction {frac:.2e} beyond the grid bandwidth"
                )


def _resample(u: Field, t: float, amp: float) -> Field:
    if not (t > 0 and math.isfinite(t)):
        raise DomainError(f"scaling parameter must be positive and finite, got {t}")
    if t == 1.0:
        return Field(u.spec, amp * u.values.copy())
    _scale_guard(u, t)
    return Field(u.spec, amp * resample_x(u.spec, u.values, t))


def fiber_scale(u: Field, t: float) -> Field:
    """Mass-preserving scaling t^(d/2) u(t x, y)."""
    return _resample(u, t, t ** (u.spec.d / 2.0))


def t_lambda_scale(u: Field, lam: float, alpha: float) -> Field:
    """lambda^(2/alpha) u(lambda x, y)."""
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    return _resample(u, lam, lam ** (2.0 / alpha))


def multiplier_omega(u: Field, params: ModelParams) -> float:
    """Frequency for which u best satisfies the stationary equation in the L^2 pairing."""
    c = components(u, params)
    if c.M < 1e-14:
        raise DegenerateInputError(f"mass {c.M:.3e} too small to extract a multiplier")
    return (-(c.A + c.B) - params.mu * c.P + c.R) / c.M


def multiplier_from_components(c: Components, params: ModelParams, co: Coefficients) -> float:
    yterm = 0.0 if c.B == 0.0 else co.a_y * c.B
    return (-(c.A + yterm) - co.s_p * c.P + co.s_q * c.R) / c.M


def gn_ratio(u: Field, params: ModelParams, alpha: float) -> float:
    """Ratio of ||u||_{a+2}^{a+2} to the scale-invariant Gagliardo-Nirenberg bound (constant 1)."""
    d = params.d
    hi = math.inf if d == 1 else 4.0 / (d - 1)
    if not (4.0 / d < alpha < hi):
        raise DomainError(f"alpha={alpha} outside ({4.0 / d:g}, {hi:g})")
    spec = u.spec
    disc = full_view(spec)
    hat = sfft.fftn(u.values)
    pw = np.abs(hat) ** 2
    A = disc.weight / disc.size * float(np.sum(disc.k2x * pw))
    B = disc.weight / disc.size * float(np.sum(disc.k2y * pw))
    a = np.abs(u.values)
    M = disc.weight * float(np.sum(a * a))
    if A <= 0.0 or M <= 0.0:
        raise DegenerateInputError("gradient-free or zero field: ratio undefined")
    lhs = disc.weight * float(np.sum(a ** (alpha + 2)))
    nx, n2, ny = math.sqrt(A), math.sqrt(M), math.sqrt(B)
    rhs = nx ** (alpha * d / 2) * n2 ** ((4 - alpha * (d - 1)) / 2) * (n2 ** (alpha / 2) + ny ** (alpha / 2))
    return lhs / rhs


def qdf_identity_rhs(rec: FunctionalRecord, params: ModelParams) -> float:
    """Right-hand side of the energy decomposition of Q (both signs of mu)."""
    p, q, d = params.p, params.q, params.d
    g = rec.grad_x2 + rec.dy2
    if params.mu == 1:
        return (d * q / 2) * rec.E + (1 - d * q / 4) * g - rec.dy2 + (d / 2) * (p - q) / (p + 2) * rec.p_norm
    return (d * p / 2) * rec.E + (1 - d * p / 4) * g - rec.dy2 + (d / 2) * (p - q) / (q + 2) * rec.q_norm
