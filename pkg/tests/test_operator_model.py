from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ultracarleman.carleman import conjugate
from ultracarleman.coefficients import Coefficient, constant_diffusion
from ultracarleman.errors import DimensionError, StateError, SupportError, ValidationError
from ultracarleman.operator_model import (Field, GridSpec, MatrixField, OperatorSpec,
                                          apply_K_split, apply_P, apply_P_tilde, beta_of_t,
                                          check_support, ddt, pde_residual, quad,
                                          validate_assumptions)
from ultracarleman.presets import operator_preset, variable_diffusion
from ultracarleman.testfuncs import gen_test_function


def test_grid_validation():
    with pytest.raises(ValidationError):
        GridSpec(t2=0.0, nt=32, m=1, nv=32, Lv=1.0)
    with pytest.raises(ValidationError):
        GridSpec(t2=1.0, nt=8, m=1, nv=32, Lv=1.0)
    with pytest.raises(ValidationError):
        GridSpec(t2=1.0, nt=32, m=1, nv=32, Lv=1.0, n=1, nw=12)


def test_grid_axes():
    g = GridSpec(t2=0.04, nt=17, m=1, nv=20, Lv=0.5, n=2, nw=8, Lw=1.0)
    assert g.t[0] == 0.0 and g.t[-1] == pytest.approx(0.04)
    assert np.allclose(g.v_axis, -0.5 + (np.arange(20) + 0.5) * 0.05)
    assert np.allclose(g.w_axis, -1.0 + np.arange(8) * 0.25)
    assert np.allclose(g.eta_axis, np.pi * g.k_axis / g.Lw)
    assert g.full_shape == (17, 20, 8, 8)


def test_field_is_read_only_and_checked():
    g = GridSpec(t2=1.0, nt=16, m=1, nv=16, Lv=1.0)
    f = Field(g, np.zeros(g.slice_shape), "slice")
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0
    with pytest.raises(DimensionError):
        Field(g, np.zeros((3, 3)), "slice")
    bad = np.zeros(g.slice_shape)
    bad[3, 3] = np.inf
    with pytest.raises(ValidationError):
        Field(g, bad, "slice")


@given(st.lists(st.floats(-3, 3), min_size=5, max_size=5))
def test_ddt_exact_on_quartics(coefs):
    t = np.linspace(0.0, 1.0, 21)
    p = np.polynomial.Polynomial(coefs)
    tol = 1e-9 * (1 + max(map(abs, coefs)))
    assert np.allclose(ddt(p(t), t[1] - t[0]), p.deriv()(t), atol=tol)


def test_ddt_is_odd_under_reversal(rng):
    f = rng.standard_normal(40)
    assert np.allclose(ddt(f[::-1], 0.1), -ddt(f, 0.1)[::-1], atol=1e-12)


def test_energy_density_summation_by_parts(rng):
    g = GridSpec(t2=1.0, nt=16, m=2, nv=16, Lv=1.0)
    A = MatrixField(Coefficient("matrix", 2, [[1.0, 0.2], [0.2, 1.5]]), g)
    X = rng.standard_normal(g.slice_shape) + 1j * rng.standard_normal(g.slice_shape)
    Y = rng.standard_normal(g.slice_shape)
    lhs = A.energy_density(X, Y)
    rhs = -np.real(np.sum(A.div_flux(X) * np.conj(Y), axis=(1, 2))) * g.dv ** 2
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


def test_apply_P_oracle_L1():
    # P u = u_t + v u_{w1} + w1 u_{w2} + u_vv on a separable field, Gaussian in
    # (t, v) (negligible at the box edges) and band-limited in w
    spec = operator_preset("L1")
    errs = []
    for nt, nv in ((65, 128), (129, 256)):
        g = GridSpec(t2=0.04, nt=nt, m=1, nv=nv, Lv=0.5, n=2, nw=16, Lw=1.0)
        t, v, w = g.t, g.v_axis, g.w_axis
        k = np.pi / g.Lw
        ft = np.exp(-((t - 0.02) / 0.004) ** 2)
        dft = -2.0 * (t - 0.02) / 0.004 ** 2 * ft
        fv = np.exp(-v ** 2 / 0.005)
        fvv = fv * ((2 * v / 0.005) ** 2 - 2 / 0.005)
        f1, d1 = np.sin(k * w), k * np.cos(k * w)
        f2, d2 = np.cos(2 * k * w), -2 * k * np.sin(2 * k * w)
        u = np.einsum("t,v,a,b->tvab", ft, fv, f1, f2)
        exact = (np.einsum("t,v,a,b->tvab", dft, fv, f1, f2)
                 + np.einsum("t,v,a,b->tvab", ft, v * fv, d1, f2)
                 + np.einsum("t,v,a,b->tvab", ft, fv, w * f1, d2)
                 + np.einsum("t,v,a,b->tvab", ft, fvv, f1, f2))
        got = apply_P(spec, Field(g, u), check=False).values
        errs.append(np.linalg.norm(got - exact) / np.linalg.norm(exact))
    assert errs[1] < 2e-3
    # second order in v dominates
    assert errs[0] / errs[1] > 3.5


def test_apply_P_rejects_unsupported():
    spec = operator_preset("L1")
    g = GridSpec(t2=0.04, nt=16, m=1, nv=16, Lv=0.5, n=2, nw=8)
    with pytest.raises(SupportError):
        apply_P(spec, Field(g, np.ones(g.full_shape)))
    with pytest.raises(StateError):
        apply_P(spec, Field(g, np.zeros(g.full_shape), "frequency"))


def test_check_support_passes_for_bumps():
    g = GridSpec(t2=0.04, nt=64, m=1, nv=64, Lv=0.5)
    check_support(gen_test_function(g, seed=0).values, g)


@pytest.mark.parametrize("variable", [False, True])
def test_K_split_invariant_form(variable):
    # (t+b)^-a P~0 h = (K1 + K2)((t+b)^-a h), up to time discretization
    spec = operator_preset("jerk", variable=variable)
    rho = np.array([0.5, -0.3, 0.2])
    alpha, b = 16.0, 0.04
    errs = []
    for nt in (128, 256):
        g = GridSpec(t2=0.04, nt=nt, m=1, nv=64, Lv=0.5)
        h = gen_test_function(g, "modulated-bump", seed=2)
        w = ((g.t + b) / b) ** (-alpha)
        lhs = w[:, None] * apply_P_tilde(spec, h, rho, include_trace=False).values
        gfield = h.with_values(conjugate(h, alpha, b))
        K1, K2 = apply_K_split(spec, gfield, rho, alpha, b)
        errs.append(np.linalg.norm(K1.values + K2.values - lhs) / np.linalg.norm(lhs))
    assert errs[1] < 1e-4
    assert errs[0] / errs[1] > 8.0


def test_K_split_parts_are_skew_and_symmetric(rng):
    spec = operator_preset("L1")
    g = GridSpec(t2=0.04, nt=64, m=1, nv=48, Lv=0.5)
    f = gen_test_function(g, "modulated-bump", seed=1)
    K1, K2 = apply_K_split(spec, f, np.array([1.0, 2.0]), 8.0, 0.04)
    # Re <K1 f, f> and Im <K2 f, f> vanish for compactly supported slices
    ip1 = np.sum(K1.values * np.conj(f.values))
    ip2 = np.sum(K2.values * np.conj(f.values))
    nf = np.linalg.norm(f.values)
    assert abs(ip1.real) <= 1e-8 * nf * np.linalg.norm(K1.values)
    assert abs(ip2.imag) <= 1e-8 * nf * np.linalg.norm(K2.values)


def test_beta_of_t_oracle_jerk():
    spec = operator_preset("jerk")
    rho = np.array([1.0, 2.0, 3.0])
    t = np.array([0.0, 0.01, 0.03])
    # B1^T exp(-t B2^T) rho = -(rho1 + t rho2 + t^2/2 rho3) for the jerk chain
    want = -(rho[0] + t * rho[1] + t ** 2 / 2 * rho[2])
    assert np.allclose(beta_of_t(spec, t, rho)[:, 0], want, rtol=1e-13)


def test_validate_assumptions():
    g = GridSpec(t2=0.04, nt=16, m=1, nv=32, Lv=0.5)
    assert validate_assumptions(operator_preset("jerk", variable=True), g).passed
    strong = OperatorSpec(operator_preset("jerk").drift,
                          variable_diffusion(1, amp=0.5, omega=50.0), lam=1.1)
    rep = validate_assumptions(strong, g)
    assert not rep.passed and rep.details["failed"]
    with pytest.raises(ValidationError):
        validate_assumptions(strong, g, samples=10)


def test_pde_residual_of_zero_field():
    spec = operator_preset("jerk")
    g = GridSpec(t2=0.04, nt=16, m=1, nv=16, Lv=0.5, n=3, nw=8)
    assert pde_residual(spec, Field(g, np.zeros(g.full_shape)))["relative"] == 0.0


def test_quad_integrates_constants():
    g = GridSpec(t2=2.0, nt=16, m=1, nv=16, Lv=0.5, n=1, nw=8, Lw=1.5)
    assert quad(g, np.ones(g.full_shape), "physical") == pytest.approx(2.0 * 1.0 * 3.0)


def test_operator_spec_dimension_check():
    with pytest.raises(DimensionError):
        OperatorSpec(operator_preset("L1").drift, constant_diffusion(2))
