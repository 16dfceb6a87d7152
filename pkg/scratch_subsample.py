"""Dev scratch: does ESN subsampling (step = k*dt) improve desk-scale quality?"""
import itertools
import time

import numpy as np

from esn_adjoint.adjoint import adjoint_sweep_batch
from esn_adjoint.esn import (
    EsnHyperParams, RegimeDataset, build_reservoir, closed_loop, long_term_stats,
    predictability_horizon, train,
)
from esn_adjoint.lorenz import (
    IntegrationConfig, LorenzParams, LorenzState, _attractor_run,
    lyapunov_time_grid, simulate, window_sensitivity_batch,
)
from esn_adjoint.objectives import ObjectiveSpec
from esn_adjoint.seeding import rng_for

DT = 0.01
SEED = 7001
obj = ObjectiveSpec()
REF = LorenzParams(10.0, 28.0, 8.0 / 3.0)
UNSEEN = LorenzParams(13.0, 52.0, 2.0)

grid = list(itertools.product([8, 10, 12, 14, 16], [30, 35, 40, 45, 50],
                              [1.0, 1.5, 2.0, 2.5, 3.0]))
rng = rng_for(SEED, "regime-choice")
idx = rng.choice(len(grid), size=25, replace=False)
regimes = [LorenzParams(*grid[i]) for i in idx]
lts = lyapunov_time_grid(regimes, seed=SEED)
wash_steps, train_steps = int(4.0 / DT), int(10.0 / DT)

raw = []
for k, (p, lt) in enumerate(zip(regimes, lts)):
    cfg = IntegrationConfig(dt=DT, n_steps=wash_steps + train_steps,
                            transient_steps=int(20.0 / DT))
    ic = LorenzState.from_array(
        rng_for(SEED, "data-ic", k).uniform([-15, -15, 5], [15, 15, 35]))
    tr = simulate(p, ic, cfg)
    raw.append((p, lt, tr.states))


def datasets_sub(sub):
    out = []
    for p, lt, states in raw:
        s = states[::sub]
        w = wash_steps // sub
        out.append(RegimeDataset(
            regime=p.as_array(), washout_series=s[:w], train_series=s[w:],
            dt=DT * sub,
            lyapunov_time=lt.lyapunov_time if lt.lambda_max > 0.05 else None))
    return out


samples, hist4 = _attractor_run(REF, 600, 1.1, seed=333, history_steps=wash_steps)
true_grads = window_sensitivity_batch(REF, samples, 0.5 * 1.1, obj, dt=DT)
tm = true_grads.mean(axis=0)
tsd = true_grads.std(axis=0, ddof=1)
print(f"tm = {np.round(tm, 3)}")

ics_ref = _attractor_run(REF, 10, 1.1, seed=51)[0]
truths_ref_full = [simulate(REF, LorenzState.from_array(ic),
                            IntegrationConfig(dt=DT, n_steps=wash_steps + int(11 / DT))).states
                   for ic in ics_ref]
ics_un = _attractor_run(UNSEEN, 10, 1.0, seed=52)[0]
truths_un_full = [simulate(UNSEEN, LorenzState.from_array(ic),
                           IntegrationConfig(dt=DT, n_steps=wash_steps + int(8 / DT))).states
                  for ic in ics_un]


def evaluate(d, seed, sub):
    data = datasets_sub(sub)
    train_data = data[:20]
    h = EsnHyperParams(n_reservoir=300, n_conn=3, seed=seed, **d)
    model = train(build_reservoir(h, 3, 3), h, train_data)
    dts = DT * sub
    truths_ref = [t[::sub] for t in truths_ref_full]
    truths_un = [t[::sub] for t in truths_un_full]
    ph_r = predictability_horizon(model, REF.as_array(), truths_ref, 1.1)
    ph_u = predictability_horizon(model, UNSEEN.as_array(), truths_un, 0.8)
    st = long_term_stats(model, REF.as_array(), 150, hist4[0][::sub], 1.1)
    zerr = abs(st.mean[2] - 23.538) / 23.538
    # washout-mode ensemble at ref
    hist_sw = np.swapaxes(hist4[:, ::sub], 0, 1)
    r0b = model.washout(hist_sw, REF.as_array())
    n_win = max(1, int(round(0.5 * 1.1 / dts)))
    _, states_b = closed_loop(model.mats, model.hyper, r0b, n_win, REF.as_array())
    grads, div = adjoint_sweep_batch(model, states_b, REF.as_array(), obj)
    em = np.nanmean(grads, axis=0)
    esd = np.nanstd(grads, axis=0, ddof=1)
    diffs = np.abs(em - tm)
    band = np.maximum(0.15 * np.abs(tm), 3 * np.sqrt((tsd**2 + esd**2) / 2000))
    ok = bool(np.all(diffs <= band))
    return ph_r, ph_u, zerr, em, esd, ok


srng = np.random.default_rng(2025)
SP_LO = np.array([0.1, 0.02, 0.3])
SP_HI = np.array([0.25, 0.1, 1.5])
t0 = time.time()
for trial in range(8):
    d = dict(
        rho=float(np.exp(srng.uniform(np.log(0.6), np.log(1.0)))),
        sigma_in=float(np.exp(srng.uniform(np.log(0.3), np.log(1.2)))),
        alpha=float(srng.uniform(0.7, 1.0)),
        tikhonov=float(np.exp(srng.uniform(np.log(1e-10), np.log(1e-7)))),
        sigma_p=tuple(np.exp(srng.uniform(np.log(SP_LO), np.log(SP_HI)))),
        k_p=tuple(srng.uniform(0.0, 100.0, 3)),
    )
    seed = int(srng.integers(2**31))
    line = f"trial {trial}:"
    for sub in (1, 2, 3):
        try:
            ph_r, ph_u, zerr, em, esd, ok = evaluate(d, seed, sub)
            line += (f" | k={sub}: ph={ph_r:.2f}/{ph_u:.2f} z={zerr:.1%} "
                     f"em=({em[0]:.2f},{em[1]:.2f},{em[2]:.2f}) {'PASS' if ok else 'f'}")
        except Exception as e:
            line += f" | k={sub}: err({type(e).__name__})"
    print(line + f" ({time.time()-t0:.0f}s)", flush=True)
