"""Dev scratch: packaged 50-candidate search vs acceptance quantities, 3 seeds."""
import itertools
import sys
import time

import numpy as np

from esn_adjoint.adjoint import adjoint_sweep_batch
from esn_adjoint.esn import (
    EsnHyperParams, RegimeDataset, build_reservoir, closed_loop, long_term_stats,
    predictability_horizon, train,
)
from esn_adjoint.hyperopt import SearchSpace, search
from esn_adjoint.lorenz import (
    IntegrationConfig, LorenzParams, LorenzState, _attractor_run,
    lyapunov_time_grid, simulate, window_sensitivity_batch,
)
from esn_adjoint.objectives import ObjectiveSpec
from esn_adjoint.seeding import rng_for

DT = 0.01
obj = ObjectiveSpec()
REF = LorenzParams(10.0, 28.0, 8.0 / 3.0)
UNSEEN = LorenzParams(13.0, 52.0, 2.0)

grid = list(itertools.product([8, 10, 12, 14, 16], [30, 35, 40, 45, 50],
                              [1.0, 1.5, 2.0, 2.5, 3.0]))


def build_data(seed):
    rng = rng_for(seed, "regime-choice")
    idx = rng.choice(len(grid), size=25, replace=False)
    regimes = [LorenzParams(*grid[i]) for i in idx]
    lts = lyapunov_time_grid(regimes, seed=seed)
    wash_steps, train_steps = int(4.0 / DT), int(10.0 / DT)
    datasets = []
    for k, (p, lt) in enumerate(zip(regimes, lts)):
        cfg = IntegrationConfig(dt=DT, n_steps=wash_steps + train_steps,
                                transient_steps=int(20.0 / DT))
        ic = LorenzState.from_array(
            rng_for(seed, "data-ic", k).uniform([-15, -15, 5], [15, 15, 35]))
        tr = simulate(p, ic, cfg)
        datasets.append(RegimeDataset(
            regime=p.as_array(), washout_series=tr.states[:wash_steps],
            train_series=tr.states[wash_steps:], dt=DT,
            lyapunov_time=lt.lyapunov_time if lt.lambda_max > 0.05 else None))
    return datasets[:20], datasets[20:]


def truth_set(params, lt, n_ics, seed):
    wash_steps = int(4.0 / DT)
    ics = _attractor_run(params, n_ics, max(1.0, lt), seed=seed)[0]
    n = wash_steps + int(round(10 * lt / DT))
    return [simulate(params, LorenzState.from_array(ic),
                     IntegrationConfig(dt=DT, n_steps=n)).states for ic in ics]


wash_steps = int(4.0 / DT)
samples, hist4 = _attractor_run(REF, 500, 1.1, seed=333, history_steps=wash_steps)
true_grads = window_sensitivity_batch(REF, samples, 0.5 * 1.1, obj, dt=DT)
tm = true_grads.mean(axis=0)
tsd = true_grads.std(axis=0, ddof=1)
n_half = int(round(0.5 * 1.1 / DT))
hist_sw = np.swapaxes(hist4, 0, 1)

for SEED in [int(sys.argv[1])] if len(sys.argv) > 1 else [7001, 1234, 42]:
    t0 = time.time()
    train_data, val_data = build_data(SEED)
    space = SearchSpace(budget=50, refine_fraction=0.4)
    winner, history = search(space, train_data, val_data, seed=SEED)
    t_search = time.time() - t0
    model = train(build_reservoir(winner, 3, 3), winner, train_data)

    truths_ref = truth_set(REF, 1.1, 20, 901)
    truths_un = truth_set(UNSEEN, 0.8, 20, 902)
    ph_r = predictability_horizon(model, REF.as_array(), truths_ref, 1.1)
    ph_u = predictability_horizon(model, UNSEEN.as_array(), truths_un, 0.8)

    st = long_term_stats(model, REF.as_array(), 300, hist4[0], 1.1)
    zerr = abs(st.mean[2] - 23.538) / 23.538

    r0b = model.washout(hist_sw, REF.as_array())
    _, states_b = closed_loop(model.mats, model.hyper, r0b, n_half, REF.as_array())
    esn_grads, div = adjoint_sweep_batch(model, states_b, REF.as_array(), obj)
    em = np.nanmean(esn_grads, axis=0)
    esd = np.nanstd(esn_grads, axis=0, ddof=1)
    diffs = np.abs(em - tm)
    band = np.maximum(0.15 * np.abs(tm),
                      3 * np.sqrt(tsd**2 + esd**2) / np.sqrt(500))
    feas = sum(1 for r in history if r.feasible)
    print(f"seed {SEED}: search {t_search:.0f}s feasible {feas}/50 "
          f"score={min(r.score for r in history if r.feasible):.3f}")
    print(f"  PH(ref)={ph_r:.2f} PH(un)={ph_u:.2f} zerr={zerr:.2%}")
    print(f"  winner: rho={winner.rho:.3f} sin={winner.sigma_in:.3f} "
          f"a={winner.alpha:.3f} tik={winner.tikhonov:.1e} "
          f"sp={np.round(winner.sigma_p, 4)} kp={np.round(winner.k_p, 1)}")
    print(f"  em={np.round(em, 3)} tm={np.round(tm, 3)} diffs={np.round(diffs, 3)} "
          f"band={np.round(band, 3)} pass8a={bool(np.all(diffs <= band))}")
