import math

import numpy as np
import pytest

from esn_adjoint.errors import (
    DivergedAdjointError,
    IntegrationBlowupError,
    InvalidStateError,
)
from esn_adjoint.lorenz import (
    IntegrationConfig,
    LorenzParams,
    LorenzState,
    Trajectory,
    _rhs,
    export_trajectory_csv,
    lorenz_jacobian,
    lorenz_param_grad,
    lorenz_rhs,
    lyapunov_time,
    rk4_step,
    sample_attractor,
    simulate,
    true_window_sensitivity,
    window_average_objective,
)
from esn_adjoint.objectives import ObjectiveSpec

REF = LorenzParams(10.0, 28.0, 8.0 / 3.0)


def test_params_reject_nonfinite_and_nonpositive():
    with pytest.raises(InvalidStateError):
        LorenzParams(float("nan"), 28.0, 8.0 / 3.0)
    with pytest.raises(InvalidStateError):
        LorenzParams(-1.0, 28.0, 8.0 / 3.0)
    with pytest.raises(InvalidStateError):
        LorenzParams(10.0, 28.0, 0.0)


def test_state_rejects_nonfinite():
    with pytest.raises(InvalidStateError):
        LorenzState(0.0, float("inf"), 0.0)


def test_rhs_origin_is_fixed_point():
    assert np.all(lorenz_rhs(LorenzState(0.0, 0.0, 0.0), REF) == 0.0)


def test_rhs_direct_substitution():
    out = lorenz_rhs(LorenzState(1.0, 1.0, 1.0), REF)
    assert np.allclose(out, [0.0, 26.0, 1.0 - 8.0 / 3.0])


def test_rhs_matches_finite_difference_of_positions():
    # d/dt x(t) from centered differences of simulated positions, O(dt^2)
    traj = simulate(REF, LorenzState(-8.0, 7.0, 27.0),
                    IntegrationConfig(dt=0.001, n_steps=200, transient_steps=5000))
    k = 100
    fd = (traj.states[k + 1] - traj.states[k - 1]) / (2 * 0.001)
    rhs = lorenz_rhs(LorenzState.from_array(traj.states[k]), REF)
    assert np.linalg.norm(fd - rhs) / np.linalg.norm(rhs) < 1e-4


def test_jacobian_trace_identity():
    rng = np.random.default_rng(0)
    for _ in range(20):
        state = LorenzState.from_array(rng.uniform(-20, 20, 3))
        jac = lorenz_jacobian(state, REF)
        assert np.isclose(np.trace(jac), -(REF.s + 1 + REF.b))


def test_jacobian_at_origin():
    jac = lorenz_jacobian(LorenzState(0.0, 0.0, 0.0), REF)
    expected = np.array([[-10.0, 10.0, 0.0], [28.0, -1.0, 0.0], [0.0, 0.0, -8.0 / 3.0]])
    assert np.allclose(jac, expected)


def test_param_grad_trivia():
    assert np.all(lorenz_param_grad(LorenzState(0.0, 0.0, 0.0)) == 0.0)
    pg = lorenz_param_grad(LorenzState(1.0, 1.0, 1.0))
    assert np.allclose(pg, [[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]])


def test_linearisations_match_finite_differences():
    rng = np.random.default_rng(1)
    h = 1e-5
    for _ in range(100):
        u = rng.uniform([-20, -25, 0], [20, 25, 50])
        jac_fd = np.empty((3, 3))
        pg_fd = np.empty((3, 3))
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            jac_fd[:, j] = (
                _rhs(u + e, REF.s, REF.r, REF.b) - _rhs(u - e, REF.s, REF.r, REF.b)
            ) / (2 * h)
            pv = REF.as_array()
            pg_fd[:, j] = (
                _rhs(u, *(pv + e)) - _rhs(u, *(pv - e))
            ) / (2 * h)
        state = LorenzState.from_array(u)
        jac = lorenz_jacobian(state, REF)
        pg = lorenz_param_grad(state)
        assert np.linalg.norm(jac - jac_fd) / np.linalg.norm(jac) <= 1e-6
        assert np.linalg.norm(pg - pg_fd) / max(np.linalg.norm(pg), 1e-12) <= 1e-6


def test_rk4_zero_rhs_keeps_state():
    state = np.array([1.0, -2.0, 3.0])
    out = rk4_step(lambda u: np.zeros_like(u), state, 0.1)
    assert np.all(out == state)


def test_rk4_exponential_oracle():
    out = rk4_step(lambda u: u, np.array([1.0]), 0.1)
    assert abs(out[0] - math.exp(0.1)) < 1e-7


def test_rk4_fourth_order_convergence():
    ic = LorenzState(-8.0, 7.0, 27.0)
    ref_end = simulate(REF, ic, IntegrationConfig(dt=1e-4, n_steps=10_000)).states[-1]
    dts = [0.02, 0.01, 0.005, 0.0025]
    errs = []
    for dt in dts:
        end = simulate(REF, ic, IntegrationConfig(dt=dt, n_steps=round(1.0 / dt)))
        errs.append(np.linalg.norm(end.states[-1] - ref_end))
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert slope >= 3.8
    # halving dt cuts the error by roughly 16x
    assert 8 < errs[0] / errs[1] < 32


def test_rk4_blowup_carries_step_index():
    params = LorenzParams(10.0, 28.0, 8.0 / 3.0)
    with pytest.raises(IntegrationBlowupError) as err:
        simulate(params, LorenzState(1e150, 1e150, 1e150),
                 IntegrationConfig(dt=1000.0, n_steps=10))
    assert err.value.step is not None


def test_simulate_zero_steps_returns_initial_condition():
    traj = simulate(REF, LorenzState(1.0, 2.0, 3.0), IntegrationConfig(dt=0.01, n_steps=0))
    assert traj.states.shape == (1, 3)
    assert np.allclose(traj.states[0], [1.0, 2.0, 3.0])


@pytest.mark.slow
def test_simulate_ergodic_mean_self_consistency():
    cfg = IntegrationConfig(dt=0.01, n_steps=150_000, transient_steps=2000)
    z1 = simulate(REF, LorenzState(1.0, 1.0, 1.0), cfg).states[:, 2].mean()
    z2 = simulate(REF, LorenzState(-3.0, 4.0, 15.0), cfg).states[:, 2].mean()
    assert abs(z1 - z2) / z1 < 0.02


def test_subcritical_regime_converges_to_origin():
    params = LorenzParams(10.0, 0.5, 8.0 / 3.0)
    traj = simulate(params, LorenzState(1.0, 1.0, 1.0),
                    IntegrationConfig(dt=0.01, n_steps=5000))
    assert np.linalg.norm(traj.states[-1]) < 1e-6


def test_sample_attractor_single_and_deterministic():
    s1 = sample_attractor(REF, 1, 1.0, seed=3)
    assert s1.shape == (1, 3)
    a = sample_attractor(REF, 10, 1.0, seed=4)
    b = sample_attractor(REF, 10, 1.0, seed=4)
    assert np.array_equal(a, b)
    c = sample_attractor(REF, 10, 1.0, seed=5)
    assert not np.array_equal(a, c)


@pytest.mark.slow
def test_sample_attractor_z_mean_near_long_run_mean():
    samples = sample_attractor(REF, 100, 1.1, seed=7)
    zbar = simulate(
        REF, LorenzState(1.0, 1.0, 1.0),
        IntegrationConfig(dt=0.01, n_steps=200_000, transient_steps=2000),
    ).states[:, 2].mean()
    assert abs(samples[:, 2].mean() - zbar) / zbar < 0.10


@pytest.mark.slow
def test_lyapunov_time_reference_regime():
    est = lyapunov_time(REF, seed=1)
    assert est.is_chaotic
    assert abs(est.lyapunov_time - 1.1) / 1.1 < 0.10
    assert np.isclose(est.lyapunov_time, 1.0 / est.lambda_max)


@pytest.mark.slow
def test_lyapunov_reproducibility_across_seeds():
    cfg = IntegrationConfig(dt=0.01, n_steps=60_000, transient_steps=2000)
    a = lyapunov_time(REF, cfg, seed=1)
    b = lyapunov_time(REF, cfg, seed=2)
    assert abs(a.lyapunov_time - b.lyapunov_time) / a.lyapunov_time < 0.05


def test_lyapunov_subcritical_flags_nonchaotic():
    cfg = IntegrationConfig(dt=0.01, n_steps=20_000, transient_steps=2000)
    est = lyapunov_time(LorenzParams(10.0, 0.5, 8.0 / 3.0), cfg, seed=1)
    assert est.lambda_max < 0
    assert not est.is_chaotic
    assert math.isinf(est.lyapunov_time)


def test_window_sensitivity_vanishes_with_window():
    ic = LorenzState.from_array(sample_attractor(REF, 1, 1.0, seed=11)[0])
    g_small = true_window_sensitivity(REF, ic, 0.02).djdp
    g_big = true_window_sensitivity(REF, ic, 1.1).djdp
    assert np.linalg.norm(g_small) < 0.1 * np.linalg.norm(g_big)


def test_window_sensitivity_matches_finite_differences():
    obj = ObjectiveSpec()
    ics = sample_attractor(REF, 3, 1.1, seed=12)
    eps = 1e-4
    for window in (0.55, 1.1):
        for ic_arr in ics:
            ic = LorenzState.from_array(ic_arr)
            sv = true_window_sensitivity(REF, ic, window, obj)
            fd = np.empty(3)
            for j in range(3):
                p_hi = REF.replace_component(j, REF.as_array()[j] + eps)
                p_lo = REF.replace_component(j, REF.as_array()[j] - eps)
                fd[j] = (
                    window_average_objective(p_hi, ic, window, obj)
                    - window_average_objective(p_lo, ic, window, obj)
                ) / (2 * eps)
            rel = np.max(np.abs(sv.djdp - fd) / np.abs(fd))
            assert rel <= 1e-3


def test_window_sensitivity_diverges_for_long_windows():
    ic = LorenzState.from_array(sample_attractor(REF, 1, 1.0, seed=13)[0])
    with pytest.raises(DivergedAdjointError) as err:
        true_window_sensitivity(REF, ic, 40.0, norm_cap=1e6)
    assert err.value.step is not None


def test_export_trajectory_csv(tmp_path):
    traj = simulate(REF, LorenzState(1.0, 1.0, 1.0), IntegrationConfig(dt=0.01, n_steps=5))
    path = tmp_path / "traj.csv"
    export_trajectory_csv(traj, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "t,x,y,z"
    assert len(lines) == 7
    # full-precision round trip
    first = [float(v) for v in lines[1].split(",")]
    assert first[1:] == [1.0, 1.0, 1.0]
