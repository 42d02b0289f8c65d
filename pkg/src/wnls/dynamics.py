"""Strang-split time integration with conservation, virial and blow-up tracking."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .errors import DomainError, GateError
from .functionals import ModelParams, components, record_from_components
from .grid import Field, GridSpec, spectral_tail_fraction

TERMINATIONS = ("t_end", "blowup_detected", "aliasing_guard", "instability")


# -- cutoff weights --------------------------------------------------------------


def theta(s):
    """2 on [0,1], 0 on [2,inf), cubic with flat ends in between."""
    s = np.asarray(s, dtype=float)
    u = np.clip(s - 1.0, 0.0, 1.0)
    return 2.0 - 2.0 * (3 * u**2 - 2 * u**3)


def theta_int(s):
    """First antiderivative of theta from 0."""
    s = np.asarray(s, dtype=float)
    u = np.clip(s - 1.0, 0.0, 1.0)
    inner = 2.0 * np.minimum(s, 1.0)
    return inner + 2 * u - 2 * u**3 + u**4


def big_theta(r):
    """Second antiderivative: r^2 on [0,1], linear with slope 3 beyond 2."""
    r = np.asarray(r, dtype=float)
    u = np.clip(r - 1.0, 0.0, 1.0)
    core = np.minimum(r, 1.0) ** 2
    mid = 2 * u + u**2 - u**4 / 2 + u**5 / 5
    tail = 3.0 * np.maximum(r - 2.0, 0.0)
    return core + mid + tail


def vartheta(s):
    """0 on [0,1], 1 on [2,inf), smoothstep in between (derivative at most 1.5)."""
    u = np.clip(np.asarray(s, dtype=float) - 1.0, 0.0, 1.0)
    return 3 * u**2 - 2 * u**3


def vartheta_prime(s):
    u = np.clip(np.asarray(s, dtype=float) - 1.0, 0.0, 1.0)
    return 6 * u - 6 * u**2


@dataclass(frozen=True)
class WeightSpec:
    kind: str
    rho: float | None = None

    def __post_init__(self):
        if self.kind not in ("quadratic", "phi_rho", "vartheta_rho"):
            raise DomainError(f"unknown weight kind {self.kind!r}")
        if self.kind != "quadratic" and not (self.rho is not None and self.rho > 0):
            raise DomainError(f"{self.kind} needs rho > 0")

    @property
    def name(self) -> str:
        return self.kind if self.kind == "quadratic" else f"{self.kind}({self.rho:g})"

    def radial(self, r):
        """Weight value and radial derivative at radius r."""
        r = np.asarray(r, dtype=float)
        if self.kind == "quadratic":
            return r * r, 2.0 * r
        s = r / self.rho
        if self.kind == "phi_rho":
            return self.rho**2 * big_theta(s), self.rho * theta_int(s)
        return vartheta(s), vartheta_prime(s) / self.rho

    def tables(self, spec: GridSpec):
        """phi and the components of grad phi on the x-grid."""
        r = spec.radius
        val, dr = self.radial(r)
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(r > 0, dr / np.where(r > 0, r, 1.0), 0.0)
        return val, [ratio * c for c in spec.x_coords()]


# -- log ---------------------------------------------------------------------------


@dataclass
class DtPolicy:
    dt_max: float = 1e-3
    c_cfl: float = 1.0
    c_nl: float = 0.1
    dt_min: float = 1e-12
    sup_ceiling: float = 1e6
    adaptive: bool = True
    tail_tol: float = 1e-4
    growth_factor: float = 5.0
    guard_fraction: float = 0.9
    guard_tol: float = 1e-6

    def step(self, spec: GridSpec, sup: float, q: float) -> float:
        if not self.adaptive:
            return self.dt_max
        return min(self.dt_max, self.c_cfl * spec.h_x**2 / math.pi, self.c_nl / (1.0 + sup**q))


@dataclass
class TrajectoryLog:
    params: ModelParams
    spec: GridSpec
    times: list = field(default_factory=list)
    M: list = field(default_factory=list)
    E: list = field(default_factory=list)
    Q: list = field(default_factory=list)
    grad2: list = field(default_factory=list)
    dy2: list = field(default_factory=list)
    p_norm: list = field(default_factory=list)
    q_norm: list = field(default_factory=list)
    sup: list = field(default_factory=list)
    tail: list = field(default_factory=list)
    virial: dict = field(default_factory=dict)
    exterior: list = field(default_factory=list)
    radii: np.ndarray | None = None
    dt_history: list = field(default_factory=list)
    termination: str = "t_end"
    linear: bool = False
    steps: int = 0

    def arrays(self) -> dict:
        keys = ("times", "M", "E", "Q", "grad2", "dy2", "p_norm", "q_norm", "sup")
        return {k: np.asarray(getattr(self, k), dtype=float) for k in keys}

    def rows(self, omega: float | None = None) -> tuple[list[str], list[list[float]]]:
        """Flat table for CSV output; S_omega is included when omega is given."""
        header = ["t", "M", "E", "Q", "I"] + (["S_omega"] if omega is not None else [])
        header += ["grad2", "dy2", "p_norm", "q_norm", "sup"]
        names = sorted(self.virial)
        for n in names:
            header += [f"V[{n}]", f"dV[{n}]"]
        k = 2.0 / (self.params.p * self.params.d)
        rows = []
        for i, t in enumerate(self.times):
            row = [t, self.M[i], self.E[i], self.Q[i], self.E[i] - k * self.Q[i]]
            if omega is not None:
                row.append(self.E[i] + 0.5 * omega * self.M[i])
            row += [self.grad2[i], self.dy2[i], self.p_norm[i], self.q_norm[i], self.sup[i]]
            for n in names:
                row += [self.virial[n]["V"][i], self.virial[n]["dV"][i]]
            rows.append(row)
        return header, rows

    def exterior_mass(self, rho: float) -> np.ndarray:
        """Mass in {|x| >= rho} at every sample."""
        if self.radii is None:
            raise DomainError("log carries no radial mass table")
        k = int(np.searchsorted(self.radii, rho - 1e-12 * max(1.0, rho)))
        ext = np.asarray(self.exterior)
        if k >= ext.shape[1]:
            return np.zeros(ext.shape[0])
        return ext[:, k]


class _Sampler:
    """Computes the logged quantities of one state."""

    def __init__(self, spec: GridSpec, params: ModelParams, weights, linear: bool):
        self.spec = spec
        self.params = params
        self.linear = linear
        self.weights = list(weights)
        self.tables = [w.tables(spec) for w in self.weights]
        r = spec.radius
        self.radii, inv = np.unique(np.round(r, 12), return_inverse=True)
        self.inv = inv.ravel()

    def __call__(self, log: TrajectoryLog, t: float, u: np.ndarray, hat: np.ndarray | None = None):
        spec, params = self.spec, self.params
        c = components(Field(spec, u), params)
        if self.linear:
            E = 0.5 * (c.A + c.B)
            Q = c.A
        else:
            rec = record_from_components(c, params)
            E, Q = rec.E, rec.Q
        a = np.abs(u)
        log.times.append(t)
        log.M.append(c.M)
        log.E.append(E)
        log.Q.append(Q)
        log.grad2.append(c.A + c.B)
        log.dy2.append(c.B)
        log.p_norm.append(c.P)
        log.q_norm.append(c.R)
        log.sup.append(float(a.max()))
        dens = (a * a).sum(axis=-1) * spec.weight
        per_r = np.bincount(self.inv, weights=dens.ravel(), minlength=self.radii.size)
        log.exterior.append(np.cumsum(per_r[::-1])[::-1])
        if self.weights:
            if hat is None:
                hat = sfft.fftn(u)
            for w, (phi, grad) in zip(self.weights, self.tables):
                V = spec.weight * float(np.sum(phi[..., None] * a * a))
                dV = 0.0
                for j, g in enumerate(grad):
                    du = sfft.ifftn(1j * spec.kx_axes[j] * hat)
                    dV += 2.0 * spec.weight * float(np.sum(g[..., None] * np.imag(du * np.conj(u))))
                entry = log.virial.setdefault(w.name, {"weight": w, "V": [], "dV": []})
                entry["V"].append(V)
                entry["dV"].append(dV)


# -- integrator -------------------------------------------------------------------------


def _nonlinear_phase(u: np.ndarray, tau: float, params: ModelParams) -> np.ndarray:
    a = np.abs(u)
    return u * np.exp(-1j * tau * (params.mu * a**params.p - a**params.q))


def _guard_mask(spec: GridSpec, fraction: float) -> np.ndarray:
    mask = np.zeros(spec.x_shape, dtype=bool)
    for c in spec.x_coords():
        mask = mask | (np.abs(c) > fraction * spec.L)
    return mask


def evolve(u0: Field, params: ModelParams, t_end: float, dt_policy: DtPolicy | None = None,
           weights=(), sample_every: float | None = None, linear: bool = False,
           reverse: bool = False) -> tuple[Field, TrajectoryLog]:
    """Integrate (i d_t + Lap) u = mu |u|^p u - |u|^q u up to t_end.

    ``linear`` drops the nonlinearity (free flow).  ``reverse`` integrates
    backwards in time; times in the log are then negative.  Samples are taken
    at multiples of ``sample_every`` (every step when None).
    """
    if not (t_end > 0 and math.isfinite(t_end)):
        raise DomainError(f"t_end must be positive, got {t_end}")
    pol = dt_policy or DtPolicy()
    spec = u0.spec
    u = np.array(u0.values, dtype=np.complex128, copy=True)
    sign = -1.0 if reverse else 1.0
    log = TrajectoryLog(params=params, spec=spec, linear=linear)
    sampler = _Sampler(spec, params, weights, linear)
    log.radii = sampler.radii
    sampler(log, 0.0, u)
    grad0 = max(log.grad2[0], 1e-300)
    guard = _guard_mask(spec, pol.guard_fraction)
    # data that already reach the guard shell (plane waves, say) are only
    # flagged when the shell mass grows
    guard0 = _guard_share(u, guard)
    k2 = spec.k2
    t = 0.0
    next_sample = sample_every if sample_every else None
    eps_t = 1e-12 * t_end
    while t < t_end - eps_t:
        sup = float(np.abs(u).max())
        dt = pol.step(spec, sup, params.q)
        if next_sample is not None:
            dt = min(dt, next_sample - t)
        dt = min(dt, t_end - t)
        if pol.adaptive and dt < pol.dt_min and t_end - t > pol.dt_min:
            log.termination = "blowup_detected"
            break
        tau = sign * dt
        if linear:
            u = sfft.ifftn(np.exp(-1j * tau * k2) * sfft.fftn(u))
        else:
            u = _nonlinear_phase(u, tau / 2, params)
            u = sfft.ifftn(np.exp(-1j * tau * k2) * sfft.fftn(u))
            u = _nonlinear_phase(u, tau / 2, params)
        t += dt
        log.steps += 1
        log.dt_history.append(dt)
        if not np.all(np.isfinite(u)):
            log.termination = "instability"
            break
        at_sample = next_sample is None or t >= next_sample - eps_t or t >= t_end - eps_t
        if at_sample:
            sampler(log, sign * t, u)
            if next_sample is not None:
                while next_sample <= t + eps_t:
                    next_sample += sample_every
            reason = _check_stop(log, spec, u, pol, guard, guard0, grad0)
            if reason:
                log.termination = reason
                break
    return Field(spec, u, diverged=log.termination == "instability"), log


def _guard_share(u: np.ndarray, guard: np.ndarray) -> float:
    dens = (np.abs(u) ** 2).sum(axis=-1)
    total = float(dens.sum())
    return float(dens[guard].sum()) / total if total > 0 else 0.0


def _check_stop(log: TrajectoryLog, spec: GridSpec, u: np.ndarray, pol: DtPolicy,
                guard: np.ndarray, guard0: float, grad0: float) -> str | None:
    if log.sup[-1] > pol.sup_ceiling:
        return "blowup_detected"
    if _guard_share(u, guard) > guard0 + pol.guard_tol:
        return "aliasing_guard"
    tail = spectral_tail_fraction(spec, u)
    log.tail.append(tail)
    # the free flow leaves the spectrum unchanged
    if not log.linear and tail > pol.tail_tol:
        # the grid can no longer represent the solution: a collapse if the
        # gradient has grown substantially, a numerical failure otherwise
        if log.grad2[-1] > pol.growth_factor * grad0:
            return "blowup_detected"
        return "instability"
    return None


# -- virial series ------------------------------------------------------------------------


def _second_difference(t: np.ndarray, v: np.ndarray) -> np.ndarray:
    out = np.full_like(v, np.nan)
    h1 = t[1:-1] - t[:-2]
    h2 = t[2:] - t[1:-1]
    out[1:-1] = 2.0 * (h1 * v[2:] - (h1 + h2) * v[1:-1] + h2 * v[:-2]) / (h1 * h2 * (h1 + h2))
    return out


def _first_difference(t: np.ndarray, v: np.ndarray) -> np.ndarray:
    out = np.full_like(v, np.nan)
    h1 = t[1:-1] - t[:-2]
    h2 = t[2:] - t[1:-1]
    out[1:-1] = (h1**2 * v[2:] - h2**2 * v[:-2] + (h2**2 - h1**2) * v[1:-1]) / (h1 * h2 * (h1 + h2))
    return out


def virial_series(log: TrajectoryLog, weight: WeightSpec) -> dict:
    """Columns t, V, dV (flux identity), dV_fd, d2V_fd, and d2V_exact = 8Q for |x|^2."""
    if weight.name not in log.virial:
        raise DomainError(f"weight {weight.name} was not registered with evolve")
    t = np.asarray(log.times, dtype=float)
    if t.size < 5:
        raise DomainError("virial series needs at least 5 samples")
    entry = log.virial[weight.name]
    V = np.asarray(entry["V"], dtype=float)
    dV = np.asarray(entry["dV"], dtype=float)
    out = {"t": t, "V": V, "dV": dV, "dV_fd": _first_difference(t, V),
           "d2V_fd": _second_difference(t, V), "boundary_warning": False}
    if weight.kind == "quadratic":
        out["d2V_exact"] = 8.0 * np.asarray(log.Q, dtype=float)
        spec = log.spec
        ext = log.exterior_mass(0.9 * spec.L)
        M = np.asarray(log.M)
        out["boundary_warning"] = bool(np.any(ext > 1e-10 * M))
    return out


# -- blow-up rate ---------------------------------------------------------------------------------


def bound_exponent(params: ModelParams) -> float:
    d = params.d
    a = params.q if params.mu == 1 else params.p
    return 2 * a * (d - 1) / ((d - 2) * a + 4)


def _fit_vanishing(t: np.ndarray, g: np.ndarray, gammas) -> tuple[float, float, float, float]:
    """Best gamma with grad^(-gamma) linear in t; returns (gamma, T, slope, rel. residual)."""
    best = None
    for gam in gammas:
        y = g ** (-gam / 2.0)
        A = np.vstack([t, np.ones_like(t)]).T
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        a, b = coef
        if a >= 0:
            continue
        resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)) / (np.ptp(y) or 1.0))
        T = -b / a
        if best is None or resid < best[3]:
            best = (float(gam), float(T), float(-a), resid)
    return best


def blowup_rate_fit(log: TrajectoryLog, params: ModelParams, slack: float = 0.15,
                    min_samples: int = 30, fit_fraction: float = 0.5) -> dict:
    """Estimate the blow-up time and the decay slope of
    g(t) = int_t^T (T - s) ||grad u(s)||^2 ds against the bound exponent."""
    report = {"verdict": "inconclusive", "bound_exponent": bound_exponent(params), "slack": slack}
    if log.termination != "blowup_detected":
        report["reason"] = "run did not terminate with blowup_detected"
        return report
    t = np.asarray(log.times, dtype=float)
    g2 = np.asarray(log.grad2, dtype=float)
    # fit on the growth phase: samples past the given fraction of the final gradient
    start = int(np.argmax(g2 >= fit_fraction * g2[-1] ** 0.5 * g2[0] ** 0.5)) if g2[-1] > g2[0] else 0
    ts, gs = t[start:], g2[start:]
    if ts.size < 5 or np.any(np.diff(gs) <= 0):
        # accept mild noise only if the growth phase is monotone
        if ts.size < 5 or np.count_nonzero(np.diff(gs) <= 0) > 0.05 * ts.size:
            report["reason"] = "gradient growth is not monotone"
            return report
    fit = _fit_vanishing(ts, gs, np.arange(0.2, 6.0001, 0.05))
    if fit is None:
        report["reason"] = "no vanishing power law fits the gradient"
        return report
    gam, T, a, resid = fit
    report.update({"gamma": gam, "T_hat": T, "fit_residual": resid})
    s_last = T - t[-1]
    if not s_last > 0 or gam <= 1.0:
        report["reason"] = "extrapolated tail is not integrable"
        return report
    # tail beyond the last sample from the fitted law ||grad u||^2 = (a (T - s))^(-2/gamma)
    e = 2.0 / gam
    tail = a ** (-e) * s_last ** (2.0 - e) / (2.0 - e)
    w = (T - t) * g2
    seg = 0.5 * (w[1:] + w[:-1]) * np.diff(t)
    gint = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]]) + tail
    s = T - t
    keep = (s <= 10.0 * s_last) & (s > 0)
    report["samples_in_decade"] = int(np.count_nonzero(keep))
    if report["samples_in_decade"] < min_samples or np.ptp(np.log(s[keep])) <= 0:
        report["reason"] = "too few samples inside the final decade"
        report["g"] = gint
        return report
    slope = float(np.polyfit(np.log(s[keep]), np.log(gint[keep]), 1)[0])
    report.update({"slope": slope, "g": gint})
    if params.d < 2:
        report["verdict"] = "suppressed"
        report["reason"] = "rate verdicts need d >= 2"
        return report
    report["verdict"] = "consistent" if slope >= report["bound_exponent"] - slack else "violated"
    return report


# -- Q-control and exterior mass --------------------------------------------------------------------


def q_control_check(log: TrajectoryLog, threshold_value: float, omega: float | None = None,
                    tol: float = 1e-8) -> dict:
    """Check Q(u(t)) <= E(u0) - m (or S(u0) - gamma) and sup Q/||grad u||^2 < 0."""
    params = log.params
    E0, Q0, M0 = log.E[0], log.Q[0], log.M[0]
    if params.mu == -1:
        level = E0
    else:
        if omega is None:
            raise GateError("mu = +1 runs need the frequency omega for the action gate")
        level = E0 + 0.5 * omega * M0
    if not (level < threshold_value and Q0 < 0):
        raise GateError(
            f"initial datum not certified: level={level:.6g}, threshold={threshold_value:.6g}, Q(u0)={Q0:.3e}"
        )
    Q = np.asarray(log.Q, dtype=float)
    g = np.asarray(log.grad2, dtype=float)
    bound = level - threshold_value
    ratio = Q / g
    return {
        "bound": bound, "max_excess": float(np.max(Q - bound)),
        "bound_holds": bool(np.all(Q <= bound + tol)),
        "sup_ratio": float(np.max(ratio)), "delta_prime": float(-np.max(ratio)),
        "negative_throughout": bool(np.all(Q < 0)),
    }


def mass_leak_check(log: TrajectoryLog, rho: float) -> dict:
    """Exterior mass beyond rho against o + C t/rho.

    The fitted C is the smallest slope keeping the samples under the line
    through the initial exterior mass.  The bound C_bound follows from the flux
    of the vartheta cutoff at scale rho/2.
    """
    if not rho > 0:
        raise DomainError("rho must be positive")
    t = np.abs(np.asarray(log.times, dtype=float))
    ext = log.exterior_mass(rho)
    o = float(ext[0])
    with np.errstate(divide="ignore", invalid="ignore"):
        slopes = np.where(t > 0, rho * (ext - o) / np.where(t > 0, t, 1.0), 0.0)
    C_fit = float(max(np.max(slopes), 0.0))
    # d/dt int vartheta_{rho/2} |u|^2 <= 2 sup|vartheta'| (2/rho) ||grad_x u|| ||u||
    A = np.asarray(log.grad2, dtype=float) - np.asarray(log.dy2, dtype=float)
    G = float(np.max(np.sqrt(np.maximum(A, 0.0) * np.asarray(log.M, dtype=float))))
    C_bound = 2.0 * 1.5 * 2.0 * G
    o_bound = _radial_weighted_mass(log, 0, vartheta(log.radii / (0.5 * rho)))
    envelope = o_bound + C_bound * t / rho
    return {
        "rho": rho, "o": o, "C_fit": C_fit, "C_bound": C_bound, "o_bound": o_bound,
        "exterior": ext, "envelope_holds": bool(np.all(ext <= envelope + 1e-14)),
    }


def _radial_weighted_mass(log: TrajectoryLog, i: int, w: np.ndarray) -> float:
    ext = np.asarray(log.exterior[i])
    per_r = ext - np.concatenate([ext[1:], [0.0]])
    return float(np.sum(per_r * w))
