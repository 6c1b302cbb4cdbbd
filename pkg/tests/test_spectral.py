from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ultracarleman.errors import StateError, ValidationError
from ultracarleman.linalg_core import DriftPair
from ultracarleman.operator_model import Field, GridSpec
from ultracarleman.presets import drift_preset, operator_preset
from ultracarleman.spectral import (FrequencyRegion, apply_S_R, apply_T, build_plan,
                                    fourier_w, invariance_check, physical_slice_norms,
                                    region_membership, rho_map, saturating_R,
                                    verify_commutation, verify_conjugation)
from ultracarleman.testfuncs import gen_test_function


def _grid(n=2, nw=8, nt=16, nv=16):
    return GridSpec(t2=0.04, nt=nt, m=1, nv=nv, Lv=0.5, n=n, nw=nw, Lw=1.0)


def test_single_mode_transforms_to_a_spike():
    g = _grid(n=1, nw=16)
    k = 3
    vals = np.exp(1j * np.pi * k * g.w_axis / g.Lw)
    u = Field(g, np.broadcast_to(vals, g.full_shape).copy())
    uh = fourier_w(u).values.copy()
    idx = list(g.k_axis).index(k)
    assert np.allclose(uh[..., idx], np.sqrt(g.nw))
    uh[..., idx] = 0.0
    assert np.max(np.abs(uh)) < 1e-12


@given(st.integers(0, 2 ** 31 - 1))
def test_fourier_roundtrip_and_parseval(seed):
    g = _grid()
    rng = np.random.default_rng(seed)
    vals = rng.standard_normal(g.full_shape) + 1j * rng.standard_normal(g.full_shape)
    u = Field(g, vals)
    uh = fourier_w(u)
    back = fourier_w(uh, "inverse").values
    assert np.allclose(back, vals, atol=1e-13)
    assert np.linalg.norm(uh.values) == pytest.approx(np.linalg.norm(vals), rel=1e-13)


def test_fourier_direction_checks():
    g = _grid()
    u = Field(g, np.zeros(g.full_shape))
    with pytest.raises(StateError):
        fourier_w(u, "inverse")
    with pytest.raises(ValidationError):
        fourier_w(u, "sideways")


@pytest.mark.parametrize("name", ["L1", "example1"])
def test_T_is_unitary_per_slice(name, rng):
    d = drift_preset(name, n=2)
    g = _grid()
    u = Field(g, rng.standard_normal(g.full_shape))
    Tu = apply_T(u, d)
    assert np.allclose(Tu.slice_norms(), physical_slice_norms(u), rtol=1e-12)
    assert np.allclose(apply_T(Tu, d, "inverse").values, u.values, atol=1e-13)
    if d.trace_B2:
        # the trace factor is present: raw coefficients are not norm-preserving
        raw = np.linalg.norm(fourier_w(u).values[-1])
        assert np.linalg.norm(Tu.values[-1]) == pytest.approx(
            raw * np.exp(-0.5 * g.t2 * d.trace_B2), rel=1e-12)


def test_rho_map_roundtrip(rng):
    d = drift_preset("example1", n=3)
    eta = rng.standard_normal((5, 3))
    rho = rho_map(d, 0.03, eta)
    assert np.allclose(rho_map(d, 0.03, rho, "to_eta"), eta, atol=1e-13)


def test_invariance_along_characteristics(rng):
    for _ in range(5):
        d = DriftPair(rng.standard_normal((3, 1)), rng.standard_normal((3, 3)))
        assert invariance_check(d, rng.standard_normal(3), 0.04).passed


def test_region_membership_margin():
    d = drift_preset("L1")
    reg = FrequencyRegion(d, R=1e-4, b=0.04, t2=0.04)
    inside, m_in = region_membership(reg, np.array([0.0, 0.0]))
    outside, m_out = region_membership(reg, np.array([10.0, 0.0]))
    assert inside and m_in == pytest.approx(1e-4)
    assert not outside and m_out < 0
    with pytest.raises(ValidationError):
        FrequencyRegion(d, R=-1.0, b=0.04, t2=0.04)


def test_S_R_idempotent_and_saturation(rng):
    d = drift_preset("L1")
    g = _grid(nw=16)
    u = Field(g, rng.standard_normal(g.full_shape))
    Rsat = saturating_R(g, d, 0.04)
    part = build_plan(g, d, 0.1 * Rsat, 0.04)
    assert 0.0 < part.masks.mean() < 1.0
    S1 = apply_S_R(u, part)
    assert np.array_equal(apply_S_R(S1, part).values, S1.values)
    full = apply_S_R(u, build_plan(g, d, Rsat, 0.04))
    assert np.max(np.abs(full.values - u.values)) <= 1e-12 * np.max(np.abs(u.values))
    # just below saturation some lattice point must drop out
    assert not build_plan(g, d, Rsat * (1 - 1e-6), 0.04).masks.all()


def test_S_R_at_zero_keeps_only_the_mean(rng):
    d = drift_preset("L1")
    g = _grid(nw=8)
    u = Field(g, rng.standard_normal(g.full_shape))
    S = apply_S_R(u, build_plan(g, d, 0.0, 0.04)).values
    mean = u.values.mean(axis=(-2, -1), keepdims=True)
    assert np.allclose(S, np.broadcast_to(mean, S.shape), atol=1e-13)


def test_static_mask_for_zero_B2():
    g = _grid(n=1)
    plan = build_plan(g, drift_preset("heat"), 1.0, 0.04)
    assert np.all(plan.masks == plan.masks[:1])


def test_mask_csv_layout():
    g = _grid(n=2, nw=8)
    plan = build_plan(g, drift_preset("L1"), 1e-3, 0.04)
    rows = plan.mask_csv().strip().split("\n")
    assert rows[0] == "t_index,k1,k2,bit"
    assert len(rows) == 1 + g.nt * g.nw ** 2


def test_plan_grid_mismatch(rng):
    d = drift_preset("L1")
    plan = build_plan(_grid(nw=8), d, 1.0, 0.04)
    g2 = _grid(nw=16)
    with pytest.raises(ValidationError):
        apply_S_R(Field(g2, np.zeros(g2.full_shape)), plan)


def test_commutation_with_v_operations():
    spec = operator_preset("L1")
    g = GridSpec(t2=0.04, nt=24, m=1, nv=24, Lv=0.5, n=2, nw=32, Lw=1.0)
    u = gen_test_function(g, "bump-product", seed=0, with_w=True)
    plan = build_plan(g, spec.drift, 0.2, 0.04)
    rep = verify_commutation(spec, u, plan)
    assert rep.passed
    assert rep.details["mask_time_dependent"]


def test_commutation_static_mask_is_exact():
    spec = operator_preset("heat")
    g = GridSpec(t2=0.04, nt=24, m=1, nv=24, Lv=0.5, n=1, nw=32, Lw=1.0)
    u = gen_test_function(g, "bump-product", seed=0, with_w=True)
    rep = verify_commutation(spec, u, build_plan(g, spec.drift, 1.0, 0.04))
    assert rep.passed and rep.details["P_strong"] <= 1e-10


def test_conjugation_report():
    spec = operator_preset("L1")
    g = GridSpec(0.04, 24, 1, 24, 0.5, 2, 32, 32 / 6)
    u = gen_test_function(g, "gaussian-window", seed=1, with_w=True, sigma=0.667)
    assert verify_conjugation(spec, u).passed
    # a field with spectral mass at the lattice edge is not checkable
    g2 = GridSpec(0.04, 24, 1, 24, 0.5, 2, 8, 1.0)
    u2 = gen_test_function(g2, "gaussian-window", seed=1, with_w=True, sigma=0.1)
    assert verify_conjugation(spec, u2).status == "inconclusive"
