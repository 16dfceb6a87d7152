"""Dev scratch: does the ESN's own Lyapunov exponent flag bad-adjoint models?"""
import itertools

import numpy as np

from esn_adjoint.adjoint import _jac_dot, adjoint_sweep_batch
from esn_adjoint.esn import (
    EsnHyperParams, RegimeDataset, build_reservoir, closed_loop, train,
)
from esn_adjoint.lorenz import (
    IntegrationConfig, LorenzParams, LorenzState, _attractor_run,
    lyapunov_time_grid, simulate, window_sensitivity_batch,
)
from esn_adjoint.objectives import ObjectiveSpec
from esn_adjoint.seeding import rng_for

DT = 0.01
SEED = 7001

grid = list(itertools.product([8, 10, 12, 14, 16], [30, 35, 40, 45, 50],
                              [1.0, 1.5, 2.0, 2.5, 3.0]))
rng = rng_for(SEED, "regime-choice")
idx = rng.choice(len(grid), size=25, replace=False)
regimes = [LorenzParams(*grid[i]) for i in idx]
lts = lyapunov_time_grid(regimes, seed=SEED)
wash_steps, train_steps = int(4.0 / DT), int(10.0 / DT)


def make_dataset(params, lt, k):
    cfg = IntegrationConfig(dt=DT, n_steps=wash_steps + train_steps,
                            transient_steps=int(20.0 / DT))
    ic = LorenzState.from_array(
        rng_for(SEED, "data-ic", k).uniform([-15, -15, 5], [15, 15, 35]))
    tr = simulate(params, ic, cfg)
    return RegimeDataset(regime=params.as_array(),
                         washout_series=tr.states[:wash_steps],
                         train_series=tr.states[wash_steps:], dt=DT,
                         lyapunov_time=lt.lyapunov_time if lt.lambda_max > 0.05 else None)


datasets = [make_dataset(p, lt, k) for k, (p, lt) in enumerate(zip(regimes, lts))]
train_data, val_data = datasets[:20], datasets[20:]
REF = LorenzParams(10.0, 28.0, 8.0 / 3.0)
obj = ObjectiveSpec()


def model_lyapunov(model, p, r0, n_lt, lt, seed=0):
    """Leading exponent of the closed-loop map via tangent renormalisation."""
    n = int(round(n_lt * lt / model.dt))
    _, states = closed_loop(model.mats, model.hyper, r0, n, p)
    v = rng_for(seed, "esn-tangent").standard_normal(model.n_reservoir)
    v /= np.linalg.norm(v)
    alpha = model.hyper.alpha
    log_sum = 0.0
    renorm = max(1, int(round(1.0 / model.dt)))
    for i in range(n):
        rt = np.clip((states[i + 1] - (1 - alpha) * states[i]) / alpha, -1, 1)
        v = _jac_dot(model, rt, v[:, None])[:, 0]
        if (i + 1) % renorm == 0 or i == n - 1:
            nv = np.linalg.norm(v)
            log_sum += np.log(nv)
            v /= nv
    return log_sum / (n * model.dt)


# recover exact configs from the rng(7) stream again
srng = np.random.default_rng(7)
SPANS = np.array([8.0, 20.0, 2.0])
SP_LO, SP_HI = 0.1 / SPANS, 2.0 / SPANS
cands = []
for k in range(200):
    d = dict(
        rho=float(np.exp(srng.uniform(np.log(0.1), np.log(1.0)))),
        sigma_in=float(np.exp(srng.uniform(np.log(0.05), np.log(3.0)))),
        alpha=float(srng.uniform(0.3, 1.0)),
        tikhonov=float(np.exp(srng.uniform(np.log(1e-11), np.log(1e-5)))),
        sigma_p=tuple(np.exp(srng.uniform(np.log(SP_LO), np.log(SP_HI)))),
        k_p=tuple(srng.uniform(0.0, 100.0, 3)),
    )
    seed = int(srng.integers(2**31))
    cands.append((d, seed))

targets = [(0.18, 0.30, 0.64), (0.79, 0.31, 0.86), (0.77, 1.25, 0.91),
           (0.24, 0.52, 0.69), (0.57, 0.11, 0.49), (0.29, 0.74, 0.37)]
picked = []
for d, seed in cands:
    for t in targets:
        if (abs(d["rho"] - t[0]) < 0.01 and abs(d["sigma_in"] - t[1]) < 0.01
                and abs(d["alpha"] - t[2]) < 0.01):
            picked.append((d, seed))

samples, hist4 = _attractor_run(REF, 500, 1.1, seed=33, history_steps=wash_steps)
true_grads = window_sensitivity_batch(REF, samples, 0.5 * 1.1, obj, dt=DT)
tm = true_grads.mean(axis=0)
print(f"true 500-member mean: {tm}")
print(f"true lambda(ref) = {1/1.1:.3f}")

n_half = int(round(0.5 * 1.1 / DT))
for d, seed in picked:
    h = EsnHyperParams(n_reservoir=300, n_conn=3, seed=seed, **d)
    model = train(build_reservoir(h, 3, 3), h, train_data)
    r0 = model.washout(hist4[0], REF.as_array())
    lam = model_lyapunov(model, REF.as_array(), r0, 30, 1.1)
    r0b = model.washout(np.swapaxes(hist4, 0, 1), REF.as_array())
    _, states_b = closed_loop(model.mats, model.hyper, r0b, n_half, REF.as_array())
    esn_grads, div = adjoint_sweep_batch(model, states_b, REF.as_array(), obj)
    em = np.nanmean(esn_grads, axis=0)
    estd = np.nanstd(esn_grads, axis=0, ddof=1)
    print(f"rho={d['rho']:.2f} sin={d['sigma_in']:.2f} a={d['alpha']:.2f}: "
          f"lam={lam:.3f} ens={np.round(em,3)} memberstd={np.round(estd,2)}")
