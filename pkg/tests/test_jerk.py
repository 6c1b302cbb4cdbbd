from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ultracarleman.coefficients import Coefficient
from ultracarleman.errors import SimulationError, ValidationError
from ultracarleman.jerk import (JerkState, Manufactured, SchemeConfig, _tensor_interp,
                                boundary_mass_fraction, build_jerk_operator,
                                characteristic_feet, convergence_study, diffusion_step,
                                export_trajectory, forward_residual, read_trajectory,
                                reversed_residual, simulate, time_reverse, transport_step)
from ultracarleman.linalg_core import flow_map
from ultracarleman.operator_model import GridSpec
from ultracarleman.presets import jerk_drift, variable_diffusion
from ultracarleman.testfuncs import bump

T = 0.04


def _grid(nv=16, nw=16, Lv=0.5, Lw=1.0):
    return GridSpec(t2=T, nt=16, m=1, nv=nv, Lv=Lv, n=3, nw=nw, Lw=Lw)


def _compact_state(g, width=0.4):
    J = bump(g.v_axis / (width * g.Lv))
    w = bump(g.w_axis / (width * g.Lw))
    vals = np.einsum("j,a,b,c->jabc", J, w, w, w)
    return JerkState(g, vals)


def test_operator_validation():
    spec = build_jerk_operator()
    assert spec.drift.n == 3
    with pytest.raises(ValidationError):
        build_jerk_operator(a_bar=variable_diffusion(1, amp=0.5, omega=50.0))


@pytest.mark.parametrize("theta", [0.5, 0.75, 1.0])
def test_diffusion_mode_decay(theta):
    # discrete sine modes are eigenvectors of the Dirichlet stencil
    spec = build_jerk_operator()
    g = _grid(nv=32, nw=4)
    j = np.arange(1, g.nv + 1)
    dt = 1e-3
    for k in (1, 5, 17):
        mode = np.sin(k * math.pi * j / (g.nv + 1))
        X = np.broadcast_to(mode.reshape(-1, 1, 1, 1), (g.nv,) + (g.nw,) * 3).copy()
        out = diffusion_step(JerkState(g, X), spec, 0.0, dt, theta).values
        k2 = 4 / g.dv ** 2 * math.sin(k * math.pi / (2 * (g.nv + 1))) ** 2
        want = (1 - (1 - theta) * k2 * dt) / (1 + theta * k2 * dt)
        assert np.allclose(out, want * X, rtol=1e-12, atol=1e-13)


def test_constant_potential_factor():
    # with c = gamma the mode factor shifts k2 -> k2 + gamma, close to exp(-gamma dt)
    gamma, dt = 0.5, 1e-3
    spec0 = build_jerk_operator()
    spec = build_jerk_operator(c_bar=Coefficient("scalar", 1, gamma))
    g = _grid(nv=32, nw=4)
    j = np.arange(1, g.nv + 1)
    mode = np.sin(math.pi * j / (g.nv + 1))
    X = np.broadcast_to(mode.reshape(-1, 1, 1, 1), (g.nv,) + (g.nw,) * 3).copy()
    a = diffusion_step(JerkState(g, X), spec0, 0.0, dt).values
    b = diffusion_step(JerkState(g, X), spec, 0.0, dt).values
    k2 = 4 / g.dv ** 2 * math.sin(math.pi / (2 * (g.nv + 1))) ** 2

    def cn(q):
        return (1 - 0.5 * q * dt) / (1 + 0.5 * q * dt)

    ratio = b[0, 0, 0, 0] / a[0, 0, 0, 0]
    assert ratio == pytest.approx(cn(k2 + gamma) / cn(k2), rel=1e-12)
    assert ratio == pytest.approx(math.exp(-gamma * dt), abs=(gamma * dt) ** 2)


@settings(max_examples=15)
@given(st.floats(0.5, 1.0), st.floats(1e-5, 1e-2), st.integers(0, 1000))
def test_diffusion_does_not_increase_norm(theta, dt, seed):
    spec = build_jerk_operator(a_bar=variable_diffusion(1))
    g = _grid(nv=24, nw=4)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((g.nv,) + (g.nw,) * 3)
    out = diffusion_step(JerkState(g, X), spec, 0.01, dt, theta).values
    assert np.linalg.norm(out) <= np.linalg.norm(X) * (1 + 1e-12)


def test_scheme_config_validation():
    with pytest.raises(ValidationError):
        SchemeConfig(dt=0.0)
    with pytest.raises(ValidationError):
        SchemeConfig(dt=1e-3, diffusion_theta=0.3)
    with pytest.raises(ValidationError):
        SchemeConfig(dt=1e-3, transport_interp="linear")


def test_transport_exact_for_affine_fields_away_from_seam():
    g = _grid(nv=16, nw=32)
    coef = np.array([0.7, -1.3, 2.1])
    J = g.v_axis.reshape(-1, 1, 1, 1)
    W = [g.w_axis.reshape((1,) * (1 + k) + (-1,) + (1,) * (2 - k)) for k in range(3)]
    X = 0.3 + sum(coef[k] * W[k] for k in range(3)) + 0 * J
    dt = 0.01
    out = transport_step(JerkState(g, X), dt).values
    E, F = flow_map(jerk_drift(), dt)
    feet = characteristic_feet(g, jerk_drift(), dt)
    want = 0.3 + feet @ coef
    inner = (slice(None),) + (slice(4, g.nw - 4),) * 3
    assert np.allclose(out[inner], want[inner], atol=1e-12)
    # feet are the affine pull-back E w + F J
    assert np.allclose(feet[3, 5, 6, 7], E @ g.w_axis[[5, 6, 7]] + F[:, 0] * g.v_axis[3])


def test_shear_and_tensor_interpolation_agree_away_from_seam():
    # an affine shear is not periodic, so only the middle of the box is compared
    g = _grid(nv=16, nw=32)
    k = math.pi / g.Lw

    def f(a, b, c):
        return np.cos(k * a) * np.sin(k * b) * np.cos(2 * k * c)

    W = [g.w_axis.reshape((1,) * (1 + i) + (-1,) + (1,) * (2 - i)) for i in range(3)]
    X = np.broadcast_to(f(*W), (g.nv,) + (g.nw,) * 3).copy()
    dt = 0.02
    feet = characteristic_feet(g, jerk_drift(), dt)
    exact = f(feet[..., 0], feet[..., 1], feet[..., 2])
    shear = transport_step(JerkState(g, X), dt).values
    tensor = _tensor_interp(X, feet, g)
    inner = (slice(None),) + (slice(g.nw // 4, 3 * g.nw // 4),) * 3
    e_shear = np.max(np.abs(shear - exact)[inner])
    e_tensor = np.max(np.abs(tensor - exact)[inner])
    assert e_shear < 5e-4 and e_tensor < 5e-4
    assert e_shear == pytest.approx(e_tensor, rel=0.05)


def test_transport_rejects_large_steps():
    g = _grid(nw=8)
    st0 = _compact_state(g)
    with pytest.raises(ValidationError):
        transport_step(st0, -1e-3)
    with pytest.raises(SimulationError):
        transport_step(st0, 10.0)


@pytest.fixture(scope="module")
def short_run():
    spec = build_jerk_operator()
    g = _grid(nv=48, nw=16, Lv=2.0)
    return spec, simulate(_compact_state(g, 0.3), spec, SchemeConfig(dt=T / 64), T, nt=17)


def test_simulation_residual_and_norm(short_run):
    spec, traj = short_run
    assert traj.time_direction == "forward-s"
    assert traj.residual is not None and traj.residual["relative"] < 5e-2
    norms = np.linalg.norm(traj.values.reshape(traj.values.shape[0], -1), axis=1)
    assert np.all(np.diff(norms) <= 1e-12 * norms[0])


def test_residual_parity_and_double_reversal(short_run):
    spec, traj = short_run
    rev = time_reverse(traj)
    assert rev.time_direction == "reversed-t"
    fwd = forward_residual(spec, traj)
    back = reversed_residual(spec, rev)
    assert np.allclose(fwd, -back[::-1], atol=1e-10 * np.max(np.abs(fwd)))
    twice = time_reverse(rev)
    assert twice.time_direction == "forward-s"
    assert np.array_equal(twice.values, traj.values)
    with pytest.raises(ValidationError):
        forward_residual(spec, rev)
    with pytest.raises(ValidationError):
        reversed_residual(spec, traj)


def test_export_roundtrip(short_run, tmp_path):
    _, traj = short_run
    path, meta = export_trajectory(traj, str(tmp_path / "traj.bin"))
    back = read_trajectory(path)
    assert np.array_equal(back, traj.values.real)
    assert (tmp_path / "traj.bin.json").exists()
    (tmp_path / "bad.bin").write_bytes(b"NOTATRAJ" + bytes(16))
    with pytest.raises(ValidationError):
        read_trajectory(str(tmp_path / "bad.bin"))


def test_export_rejects_complex(short_run, tmp_path):
    _, traj = short_run
    import dataclasses
    cplx = dataclasses.replace(traj, values=traj.values * (1 + 1j))
    with pytest.raises(ValidationError):
        export_trajectory(cplx, str(tmp_path / "c.bin"))


def test_simulate_guards():
    spec = build_jerk_operator()
    g = _grid(nv=16, nw=8)
    with pytest.raises(ValidationError):
        simulate(_compact_state(g), spec, SchemeConfig(dt=T / 32), T)
    # mass at the box faces is rejected up front
    man = Manufactured(spec, g, T)
    with pytest.raises(ValidationError):
        simulate(JerkState(g, man.exact(0.0)), spec, SchemeConfig(dt=T / 64), T)
    assert boundary_mass_fraction(np.zeros((8, 8, 8, 8)), g) == 0.0


def test_manufactured_convergence_small():
    spec = build_jerk_operator()
    res = convergence_study(spec, levels=((16, 8, 8), (32, 16, 16)))
    assert res["errors"][1] < res["errors"][0]
    assert res["orders"][0] > 1.5
