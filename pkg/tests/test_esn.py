import numpy as np
import pytest
import scipy.sparse as sparse

from esn_adjoint.errors import (
    IllConditionedTrainingError,
    IntegrationBlowupError,
    NotTrainedError,
    ShapeError,
)
from esn_adjoint.esn import (
    EsnHyperParams,
    EsnModel,
    ReservoirMatrices,
    augment_input,
    build_reservoir,
    closed_loop,
    esn_step,
    long_term_stats,
    open_loop,
    predictability_horizon,
    readout,
    spectral_radius,
    train,
)

from conftest import SMALL_HYPER, SMALL_REGIMES, make_dataset


def hyper_with(**kwargs):
    base = dict(
        n_reservoir=50, n_conn=3, rho=0.5, sigma_in=0.3, alpha=0.9,
        tikhonov=1e-8, sigma_p=(0.1, 0.1, 0.1), k_p=(0.0, 0.0, 0.0), seed=1,
    )
    base.update(kwargs)
    return EsnHyperParams(**base)


def test_hyper_validation():
    with pytest.raises(ValueError):
        hyper_with(n_reservoir=0)
    with pytest.raises(ValueError):
        hyper_with(n_conn=0)
    with pytest.raises(ValueError):
        hyper_with(n_conn=51)
    with pytest.raises(ValueError):
        hyper_with(rho=0.0)
    with pytest.raises(ValueError):
        hyper_with(alpha=0.0)
    with pytest.raises(ValueError):
        hyper_with(alpha=1.5)
    with pytest.raises(ValueError):
        hyper_with(tikhonov=-1.0)
    with pytest.raises(ValueError):
        hyper_with(sigma_p=(0.1, -0.1, 0.1))
    with pytest.raises(ValueError):
        hyper_with(sigma_p=(0.1, 0.1))


def test_build_reservoir_structure_and_radius():
    hyper = hyper_with(n_reservoir=120, n_conn=4, rho=0.7)
    mats = build_reservoir(hyper, 3, 3)
    w = mats.w.toarray()
    assert np.all((w != 0).sum(axis=1) == 4)
    in_full = np.concatenate([mats.w_in_y, mats.w_in_p], axis=1)
    assert np.all((in_full != 0).sum(axis=1) == 1)
    assert np.all(np.abs(in_full) <= hyper.sigma_in)
    # independent oracle: dense eigenvalues
    rho_meas = np.max(np.abs(np.linalg.eigvals(w)))
    assert abs(rho_meas - 0.7) / 0.7 <= 1e-6


def test_build_reservoir_paper_scale_radius():
    hyper = hyper_with(n_reservoir=1200, n_conn=3, rho=0.2201, seed=3)
    mats = build_reservoir(hyper, 3, 3)
    rho_meas = np.max(np.abs(np.linalg.eigvals(mats.w.toarray())))
    assert abs(rho_meas - 0.2201) <= 1e-4


def test_build_reservoir_one_by_one():
    hyper = hyper_with(n_reservoir=1, n_conn=1, rho=0.3)
    mats = build_reservoir(hyper, 3, 3)
    assert mats.w.shape == (1, 1)
    assert np.isclose(abs(mats.w.toarray()[0, 0]), 0.3)


def test_build_reservoir_deterministic():
    hyper = hyper_with(seed=42)
    a = build_reservoir(hyper, 3, 3)
    b = build_reservoir(hyper, 3, 3)
    assert np.array_equal(a.w.toarray(), b.w.toarray())
    assert np.array_equal(a.w_in_y, b.w_in_y)
    assert np.array_equal(a.w_in_p, b.w_in_p)


def test_spectral_radius_matches_dense():
    rng = np.random.default_rng(0)
    w = sparse.random_array((80, 80), density=0.05, rng=rng, data_sampler=rng.standard_normal)
    ref = np.max(np.abs(np.linalg.eigvals(w.toarray())))
    assert abs(spectral_radius(sparse.csr_array(w)) - ref) / ref < 1e-8


def test_augment_input_shift_and_scale():
    hyper = hyper_with(sigma_p=(0.5, 0.5, 0.5), k_p=(1.0, 2.0, 3.0))
    out = augment_input(np.zeros(3), np.array([1.0, 2.0, 3.0]), hyper)
    assert np.all(out[3:] == 0.0)
    hyper0 = hyper_with(sigma_p=(0.0, 0.0, 0.0))
    out0 = augment_input(np.zeros(3), np.array([5.0, -4.0, 2.0]), hyper0)
    assert np.all(out0[3:] == 0.0)


def test_augment_input_reference_arithmetic():
    # published hyperparameter set, parameter block recomputed by substitution
    hyper = hyper_with(sigma_p=(0.0028, 0.0015, 0.0393), k_p=(68.73, 84.81, 74.46))
    out = augment_input(np.zeros(3), np.array([10.0, 28.0, 8.0 / 3.0]), hyper)
    assert np.allclose(out[3:], [-0.1644440, -0.0852150, -2.8214780], atol=1e-7)


def test_esn_step_zero_maps_to_zero():
    hyper = hyper_with(alpha=1.0)
    mats = build_reservoir(hyper, 3, 3)
    mats.w = sparse.csr_array(np.zeros((50, 50)))
    mats.w_in_y = np.zeros_like(mats.w_in_y)
    mats.w_in_p = np.zeros_like(mats.w_in_p)
    out = esn_step(mats, hyper, np.full(50, 0.3), np.ones(3), np.ones(3))
    assert np.all(out == 0.0)


def test_esn_step_alpha_zero_bypass_keeps_state():
    # alpha = 0 violates the invariant; bypass it to check the degenerate leak
    hyper = hyper_with()
    object.__setattr__(hyper, "alpha", 0.0)
    mats = build_reservoir(hyper_with(), 3, 3)
    r = np.linspace(-0.5, 0.5, 50)
    out = esn_step(mats, hyper, r, np.ones(3), np.ones(3))
    assert np.array_equal(out, r)


def test_esn_step_matches_dense_reference():
    hyper = hyper_with()
    mats = build_reservoir(hyper, 3, 3)
    rng = np.random.default_rng(2)
    r = rng.uniform(-1, 1, 50)
    y = rng.uniform(-2, 2, 3)
    p = rng.uniform(0, 50, 3)
    w_dense = mats.w.toarray()
    w_in = np.concatenate([mats.w_in_y, mats.w_in_p], axis=1)
    aug = np.concatenate([y, hyper.sigma_p_vec * (p - hyper.k_p_vec)])
    expected = (1 - hyper.alpha) * r + hyper.alpha * np.tanh(w_in @ aug + w_dense @ r)
    out = esn_step(mats, hyper, r, y, p)
    assert np.allclose(out, expected, rtol=0, atol=1e-15)


def test_esn_step_keeps_components_bounded():
    hyper = hyper_with()
    mats = build_reservoir(hyper, 3, 3)
    rng = np.random.default_rng(3)
    r = rng.uniform(-1, 1, 50)
    for _ in range(100):
        r = esn_step(mats, hyper, r, rng.uniform(-5, 5, 3), rng.uniform(0, 60, 3))
        assert np.all(np.abs(r) <= 1.0)


def test_esn_step_shape_error():
    hyper = hyper_with()
    mats = build_reservoir(hyper, 3, 3)
    with pytest.raises(ShapeError):
        esn_step(mats, hyper, np.zeros(50), np.zeros(4), np.zeros(3))


def test_readout_requires_training_and_is_linear(small_model):
    hyper = hyper_with()
    mats = build_reservoir(hyper, 3, 3)
    with pytest.raises(NotTrainedError):
        readout(mats, np.zeros(50))
    m = small_model.mats
    assert np.all(readout(m, np.zeros(m.n_reservoir)) == 0.0)
    rng = np.random.default_rng(4)
    r1 = rng.uniform(-1, 1, m.n_reservoir)
    r2 = rng.uniform(-1, 1, m.n_reservoir)
    lhs = readout(m, 2.0 * r1 - 3.0 * r2)
    rhs = 2.0 * readout(m, r1) - 3.0 * readout(m, r2)
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-12)


def test_open_loop_single_step_and_concatenation(small_model, small_datasets):
    model = small_model
    ds = small_datasets[0]
    y = model.standardize(ds.train_series[:40])
    r0 = np.zeros(model.n_reservoir)
    one = open_loop(model.mats, model.hyper, r0, y[:1], ds.regime)
    step = esn_step(model.mats, model.hyper, r0, y[0], ds.regime)
    assert np.allclose(one[0], step)
    full = open_loop(model.mats, model.hyper, r0, y, ds.regime)
    first = open_loop(model.mats, model.hyper, r0, y[:17], ds.regime)
    rest = open_loop(model.mats, model.hyper, first[-1], y[17:], ds.regime)
    assert np.allclose(np.concatenate([first, rest]), full)


def test_washout_contraction(small_model, small_datasets):
    model = small_model
    ds = small_datasets[0]
    y = model.standardize(np.concatenate([ds.washout_series, ds.train_series])[:400])
    a = open_loop(model.mats, model.hyper, np.zeros(model.n_reservoir), y, ds.regime)
    rng = np.random.default_rng(5)
    b = open_loop(model.mats, model.hyper, rng.uniform(-1, 1, model.n_reservoir), y,
                  ds.regime)
    assert np.max(np.abs(a[-1] - b[-1])) < 1e-6


def test_closed_loop_zero_steps(small_model, small_datasets):
    model = small_model
    r0 = np.zeros(model.n_reservoir)
    outputs, states = closed_loop(model.mats, model.hyper, r0,
                                  0, small_datasets[0].regime)
    assert outputs.shape == (0, 3)
    assert states.shape == (1, model.n_reservoir)


def test_closed_loop_consistent_with_open_loop_on_own_outputs(small_model, small_datasets):
    model = small_model
    ds = small_datasets[0]
    r0 = model.washout(ds.washout_series, ds.regime)
    outputs, states = closed_loop(model.mats, model.hyper, r0, 30, ds.regime)
    # feeding the rollout's own readouts as teacher reproduces the states
    fed = np.concatenate([(r0 @ model.mats.w_out.T)[None, :], outputs[:-1]], axis=0)
    replay = open_loop(model.mats, model.hyper, r0, fed, ds.regime)
    assert np.allclose(replay, states[1:], rtol=0, atol=1e-14)


def test_closed_loop_requires_training():
    hyper = hyper_with()
    mats = build_reservoir(hyper, 3, 3)
    with pytest.raises(NotTrainedError):
        closed_loop(mats, hyper, np.zeros(50), 5, np.ones(3))


def test_train_exact_least_squares_with_zero_regularizer(small_datasets):
    hyper = hyper_with(n_reservoir=40, tikhonov=0.0, seed=11)
    mats = build_reservoir(hyper, 3, 3)
    model = train(mats, hyper, small_datasets[:1])
    ds = small_datasets[0]
    y = model.standardize(np.concatenate([ds.washout_series, ds.train_series]))
    states = open_loop(mats, hyper, np.zeros(40), y[:-1], ds.regime)
    S = states[len(ds.washout_series):]
    Y = y[len(ds.washout_series) + 1:]
    ours = np.linalg.norm(S @ model.mats.w_out.T - Y)
    optimum = np.linalg.norm(S @ np.linalg.lstsq(S, Y, rcond=None)[0] - Y)
    # the normal-equation route squares the conditioning, so allow a hair
    assert ours <= optimum * (1 + 1e-3)


def test_train_singular_with_zero_regularizer_raises():
    hyper = hyper_with(n_reservoir=80, tikhonov=0.0, seed=12)
    mats = build_reservoir(hyper, 3, 3)
    tiny = make_dataset(SMALL_REGIMES[0], 0, wash_steps=5, train_steps=20)
    with pytest.raises(IllConditionedTrainingError):
        train(mats, hyper, [tiny])


def test_train_normal_equation_residual(small_datasets):
    hyper = hyper_with(n_reservoir=60, tikhonov=1e-6, seed=13)
    mats = build_reservoir(hyper, 3, 3)
    model = train(mats, hyper, small_datasets)
    blocks_s, blocks_y = [], []
    for ds in small_datasets:
        y = model.standardize(np.concatenate([ds.washout_series, ds.train_series]))
        states = open_loop(mats, hyper, np.zeros(60), y[:-1], ds.regime)
        blocks_s.append(states[len(ds.washout_series):])
        blocks_y.append(y[len(ds.washout_series) + 1:])
    S = np.concatenate(blocks_s)
    Y = np.concatenate(blocks_y)
    gram = S.T @ S + hyper.tikhonov * np.eye(60)
    rhs = S.T @ Y
    resid = np.linalg.norm(gram @ model.mats.w_out.T - rhs) / np.linalg.norm(rhs)
    assert resid <= 1e-8


def test_train_ridge_optimum_is_a_minimum(small_datasets):
    hyper = hyper_with(n_reservoir=40, tikhonov=1e-4, seed=14)
    mats = build_reservoir(hyper, 3, 3)
    model = train(mats, hyper, small_datasets[:1])
    ds = small_datasets[0]
    y = model.standardize(np.concatenate([ds.washout_series, ds.train_series]))
    states = open_loop(mats, hyper, np.zeros(40), y[:-1], ds.regime)
    S = states[len(ds.washout_series):]
    Y = y[len(ds.washout_series) + 1:]

    def loss(w_out):
        return (np.linalg.norm(S @ w_out.T - Y) ** 2
                + hyper.tikhonov * np.linalg.norm(w_out) ** 2)

    base = loss(model.mats.w_out)
    rng = np.random.default_rng(6)
    for _ in range(20):
        i = rng.integers(0, 3)
        j = rng.integers(0, 40)
        for delta in (1e-6, -1e-6):
            w = model.mats.w_out.copy()
            w[i, j] += delta
            assert loss(w) >= base - 1e-12


def test_parameter_blind_network_ignores_regime(small_datasets):
    hyper = hyper_with(n_reservoir=40, sigma_p=(0.0, 0.0, 0.0), seed=15)
    mats = build_reservoir(hyper, 3, 3)
    model = train(mats, hyper, small_datasets)
    r0 = model.washout(small_datasets[0].washout_series, small_datasets[0].regime)
    out_a, _ = closed_loop(model.mats, model.hyper, r0, 50, np.array([10.0, 28.0, 2.0]))
    out_b, _ = closed_loop(model.mats, model.hyper, r0, 50, np.array([16.0, 50.0, 1.0]))
    assert np.array_equal(out_a, out_b)


def test_predictability_horizon_self_prediction(small_model, small_datasets):
    model = small_model
    ds = small_datasets[0]
    r0 = model.washout(ds.washout_series, ds.regime)
    synthetic, _ = model.predict(r0, 500, ds.regime)
    truth = np.concatenate([ds.washout_series, synthetic])
    h = predictability_horizon(model, ds.regime, truth, lt=1.0, washout_time=2.0)
    assert h == pytest.approx(500 * model.dt / 1.0)


def test_predictability_horizon_random_readout_fails_fast(small_model, small_datasets):
    from dataclasses import replace

    model = small_model
    ds = small_datasets[0]
    rng = np.random.default_rng(7)
    broken = EsnModel(
        hyper=model.hyper,
        mats=ReservoirMatrices(
            w_in_y=model.mats.w_in_y, w_in_p=model.mats.w_in_p, w=model.mats.w,
            w_out=rng.standard_normal(model.mats.w_out.shape),
        ),
        dt=model.dt, y_mean=model.y_mean, y_scale=model.y_scale,
    )
    truth = np.concatenate([ds.washout_series, ds.train_series])
    h = predictability_horizon(broken, ds.regime, truth, lt=1.0, washout_time=2.0)
    assert h < 0.2


def test_long_term_stats_validation_and_histogram(small_model, small_datasets):
    model = small_model
    ds = small_datasets[0]
    with pytest.raises(ValueError):
        long_term_stats(model, ds.regime, 0.0, ds.washout_series, lt=1.0)
    stats = long_term_stats(model, ds.regime, 30.0, ds.washout_series, lt=1.0,
                            transient_time=5.0)
    for c in range(3):
        edges, masses = stats.histogram(c)
        assert len(edges) == len(masses) + 1
        assert np.isclose(masses.sum() if hasattr(masses, "sum") else sum(masses), 1.0)
    assert np.all(np.isfinite(stats.mean))
