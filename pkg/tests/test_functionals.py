import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wnls.errors import (
    AliasingError,
    ConfigurationError,
    DegenerateInputError,
    PreconditionError,
    UnsupportedProblemError,
)
from wnls.fibering import find_tstar
from wnls.functionals import (
    ModelParams,
    components,
    eval_core,
    eval_rescaled,
    fiber_scale,
    gn_ratio,
    hatted_components,
    multiplier_from_components,
    multiplier_omega,
    family_coefficients,
    qdf_identity_rhs,
    t_lambda_scale,
)
from wnls.grid import Field, embed_y_independent, integrate, make_grid
from wnls.groundstate import soliton_profile

from conftest import gaussian, random_smooth

P156 = ModelParams(-1, 5, 6, 1)


@pytest.mark.parametrize("mu, p, q, d, needle", [
    (-1, 3, 6, 1, "4/d < p"),
    (-1, 6, 5, 1, "p < q"),
    (1, 2.5, 4.5, 2, "q < 4/(d-1)"),
    (0, 5, 6, 1, "mu"),
])
def test_params_admissibility(mu, p, q, d, needle):
    with pytest.raises(ConfigurationError, match=needle.replace("(", r"\(").replace(")", r"\)")):
        ModelParams(mu, p, q, d)


def test_zero_field(grid1_small):
    rec = eval_core(Field(grid1_small, np.zeros(grid1_small.shape)), P156, omega=2.0)
    assert all(v == 0.0 for v in (rec.M, rec.E, rec.S_omega, rec.Q, rec.I, rec.grad_x2, rec.dy2))


def test_gaussian_closed_forms():
    spec = make_grid(1, 16 * math.pi, 512, 16)
    rec = eval_core(gaussian(spec), P156)
    M = 2 * math.pi * math.sqrt(math.pi)
    A = math.pi**1.5
    P = 2 * math.pi * math.sqrt(2 * math.pi / 7)
    R = 2 * math.pi * math.sqrt(2 * math.pi / 8)
    assert rec.M == pytest.approx(M, abs=1e-8)
    assert rec.grad_x2 == pytest.approx(A, abs=1e-8)
    assert rec.grad_x2 == pytest.approx(5.568, abs=1e-3)
    assert rec.p_norm == pytest.approx(P, abs=1e-8)
    assert rec.dy2 == pytest.approx(0.0, abs=1e-12)
    assert rec.E == pytest.approx(0.5 * A - P / 7 - R / 8, abs=1e-8)
    assert rec.Q == pytest.approx(A - 5 / 14 * P - 6 / 16 * R, abs=1e-8)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**63), mu=st.sampled_from([-1, 1]), omega=st.floats(0.1, 5))
def test_reduced_identity(seed, mu, omega):
    spec = make_grid(1, 10.0, 64, 16)
    params = ModelParams(mu, 5, 6, 1)
    rec = eval_core(random_smooth(spec, seed), params, omega)
    assert rec.I == pytest.approx(rec.E - 2 / (5 * 1) * rec.Q, rel=1e-12, abs=1e-14)
    assert rec.S_omega == pytest.approx(rec.E + 0.5 * omega * rec.M, rel=1e-12)
    assert min(rec.M, rec.grad_x2, rec.dy2, rec.p_norm, rec.q_norm) >= 0


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**63), mu=st.sampled_from([-1, 1]),
       pq=st.sampled_from([(1, 5, 6), (1, 4.5, 9), (2, 2.5, 3.5)]))
def test_energy_decomposition_of_q(seed, mu, pq):
    d, p, q = pq
    spec = make_grid(d, 8.0, 64 if d == 1 else 16, 8)
    params = ModelParams(mu, p, q, d)
    rec = eval_core(random_smooth(spec, seed), params)
    assert qdf_identity_rhs(rec, params) == pytest.approx(rec.Q, rel=1e-12, abs=1e-12 * rec.grad2)


def test_rescaled_identity_at_lambda_one(grid1_small):
    u = random_smooth(grid1_small, 3)
    rec = eval_core(u, P156)
    r = eval_rescaled(u, P156, 1.0, "sub")
    assert r.K == pytest.approx(rec.Q, rel=1e-12)
    assert r.H == pytest.approx(rec.E, rel=1e-12)
    s = eval_rescaled(u, P156, 1.0, "sup")
    assert s.K == pytest.approx(rec.Q, rel=1e-12)


def test_rescaled_infinite_lambda_drops_p_term(grid1_small):
    u = gaussian(grid1_small)
    c = components(u, P156)
    r = eval_rescaled(u, P156, math.inf, "sub")
    assert family_coefficients(P156, math.inf, "sub").s_p == 0.0
    assert r.H == pytest.approx(0.5 * c.A - c.R / 8, rel=1e-12)
    with pytest.raises(UnsupportedProblemError):
        eval_rescaled(u, P156, math.inf, "sup")


def test_hatted_mass(grid1):
    u = gaussian(grid1)
    h = eval_rescaled(u, P156, 1.0, "sub", hatted=True)
    assert h.M == pytest.approx(eval_core(u, P156).M / (2 * math.pi), rel=1e-12)
    with pytest.raises(PreconditionError):
        hatted_components(gaussian(grid1, eps=0.1), P156)


def test_fiber_scale_identity_and_gaussian():
    spec = make_grid(1, 16 * math.pi, 512, 8)
    u = gaussian(spec)
    assert np.array_equal(fiber_scale(u, 1.0).values, u.values)
    v = fiber_scale(u, 2.0)
    assert components(v, P156).A == pytest.approx(4 * math.pi**1.5, abs=1e-6)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**63), t=st.floats(0.6, 1.8))
def test_fiber_scale_laws(seed, t):
    spec = make_grid(1, 24.0, 512, 8)
    u = random_smooth(spec, seed, width=1.0, support=6.0)
    c, ct = components(u, P156), components(fiber_scale(u, t), P156)
    assert ct.M == pytest.approx(c.M, rel=1e-8)
    assert ct.A == pytest.approx(t * t * c.A, rel=1e-6)
    assert ct.B == pytest.approx(c.B, rel=1e-6)
    assert ct.P == pytest.approx(t ** 2.5 * c.P, rel=1e-6)
    assert ct.R == pytest.approx(t ** 3 * c.R, rel=1e-6)


def test_fiber_scale_aliasing_guard():
    spec = make_grid(1, 8.0, 64, 8)
    u = gaussian(spec, width=2.0)
    with pytest.raises(AliasingError):
        fiber_scale(u, 0.2)
    with pytest.raises(AliasingError):
        fiber_scale(gaussian(spec, width=0.3), 4.0)


def test_t_lambda_scale():
    spec = make_grid(1, 16 * math.pi, 512, 8)
    u = gaussian(spec)
    assert np.array_equal(t_lambda_scale(u, 1.0, 5).values, u.values)
    v = t_lambda_scale(u, 2.0, 5)
    assert integrate(v, 2) == pytest.approx(2 ** (4 / 5 - 1) * 2 * math.pi * math.sqrt(math.pi), abs=1e-6)
    assert components(v, P156).A == pytest.approx(2 ** (2 + 4 / 5 - 1) * math.pi**1.5, rel=1e-6)


def test_t_lambda_makes_q_nonpositive():
    spec = make_grid(1, 16.0, 512, 8)
    u = gaussian(spec, 0.8, eps=0.2)
    t = find_tstar(u, P156).t_star
    w = fiber_scale(u, t)
    assert abs(eval_core(w, P156).Q) < 1e-6 * components(w, P156).A
    for lam in (1.0, 1.2, 1.5, 2.0):
        assert eval_core(t_lambda_scale(w, lam, 5), P156).Q <= 1e-6


def test_multiplier_of_soliton():
    spec = make_grid(1, 30.0, 2048, 8)
    prof = soliton_profile(spec.x, 6.0, 1.0)
    u = embed_y_independent(spec, prof)
    c = hatted_components(u, P156)
    co = family_coefficients(P156, math.inf, "sub")
    assert multiplier_from_components(c, P156, co) == pytest.approx(1.0, abs=1e-6)


def test_multiplier_phase_invariant_and_degenerate(grid1_small):
    u = random_smooth(grid1_small, 9)
    w = multiplier_omega(u, P156)
    assert multiplier_omega(u * np.exp(0.7j), P156) == pytest.approx(w, rel=1e-12)
    with pytest.raises(DegenerateInputError):
        multiplier_omega(Field(grid1_small, np.zeros(grid1_small.shape)), P156)


def _gn_grid():
    return make_grid(1, 32.0, 1024, 8)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**63))
def test_gn_ratio_scaling_invariance(seed):
    spec = _gn_grid()
    u = random_smooth(spec, seed, width=1.0)
    base = gn_ratio(u, P156, 5)
    for t in (0.5, 2.0, 4.0):
        assert gn_ratio(fiber_scale(u, t), P156, 5) == pytest.approx(base, rel=1e-6)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**63), c=st.floats(0.01, 100))
def test_gn_ratio_homogeneity(seed, c):
    spec = make_grid(1, 10.0, 64, 8)
    u = random_smooth(spec, seed)
    d, a = 1, 5.0
    # numerator scales as c^(a+2); denominator as c^(a d/2 + (4 - a(d-1))/2 + a/2)
    expo = (a + 2) - (a * d / 2 + (4 - a * (d - 1)) / 2 + a / 2)
    assert expo == 0
    assert gn_ratio(u * c, P156, a) == pytest.approx(c**expo * gn_ratio(u, P156, a), rel=1e-10)


def test_gn_ratio_empirical_constant():
    spec = make_grid(1, 10.0, 64, 8)
    ratios = [gn_ratio(random_smooth(spec, s), P156, 5) for s in range(1000)]
    assert np.all(np.isfinite(ratios)) and min(ratios) > 0
    assert max(ratios) < 10.0


def test_gn_ratio_degenerate(grid1_small):
    x, y = grid1_small.coords()
    u = Field(grid1_small, np.cos(y) * np.ones(grid1_small.shape))
    with pytest.raises(DegenerateInputError):
        gn_ratio(u, P156, 5)
