"""Dev scratch: ESN-member IC protocol (true-washout vs self-sampled) + seed sweep."""
import itertools
import json
import time

import numpy as np

from esn_adjoint.adjoint import adjoint_sweep_batch
from esn_adjoint.esn import (
    EsnHyperParams, RegimeDataset, build_reservoir, closed_loop, long_term_stats,
    predictability_horizon, train,
)
from esn_adjoint.hyperopt import (
    _climate_loss, _climate_slopes, _self_ensemble, _short_term_loss,
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

grid = list(itertools.product([8, 10, 12, 14, 16], [30, 35, 40, 45, 50],
                              [1.0, 1.5, 2.0, 2.5, 3.0]))
rng = rng_for(SEED, "regime-choice")
idx = rng.choice(len(grid), size=25, replace=False)
regimes = [LorenzParams(*grid[i]) for i in idx]
lts = lyapunov_time_grid(regimes, seed=SEED)
wash_steps, train_steps = int(4.0 / DT), int(10.0 / DT)

datasets = []
for k, (p, lt) in enumerate(zip(regimes, lts)):
    cfg = IntegrationConfig(dt=DT, n_steps=wash_steps + train_steps,
                            transient_steps=int(20.0 / DT))
    ic = LorenzState.from_array(
        rng_for(SEED, "data-ic", k).uniform([-15, -15, 5], [15, 15, 35]))
    tr = simulate(p, ic, cfg)
    datasets.append(RegimeDataset(
        regime=p.as_array(), washout_series=tr.states[:wash_steps],
        train_series=tr.states[wash_steps:], dt=DT,
        lyapunov_time=lt.lyapunov_time if lt.lambda_max > 0.05 else None))
train_data, val_data = datasets[:20], datasets[20:]
slopes = _climate_slopes(train_data, 2)

samples, hist4 = _attractor_run(REF, 800, 1.1, seed=333, history_steps=wash_steps)
true_grads = window_sensitivity_batch(REF, samples, 0.5 * 1.1, obj, dt=DT)
tm = true_grads.mean(axis=0)
n_half = int(round(0.5 * 1.1 / DT))
hist_sw = np.swapaxes(hist4, 0, 1)
print(f"tm = {np.round(tm, 3)}")


def esn_ens_true_washout(model, p):
    r0b = model.washout(hist_sw, p)
    _, states_b = closed_loop(model.mats, model.hyper, r0b, n_half, p)
    grads, div = adjoint_sweep_batch(model, states_b, p, obj)
    return np.nanmean(grads, axis=0), np.nanstd(grads, axis=0, ddof=1)


def esn_ens_self(model, p, n_members=800):
    r = model.washout(hist4[0], p)
    spacing = int(round(1.1 / model.dt))
    n_skip = int(round(20 / model.dt))
    n_run = spacing * n_members + n_skip
    _, states = closed_loop(model.mats, model.hyper, r, n_run, p)
    r0s = states[n_skip::spacing][:n_members]
    _, states_b = closed_loop(model.mats, model.hyper, r0s, n_half, p)
    grads, div = adjoint_sweep_batch(model, states_b, p, obj)
    return np.nanmean(grads, axis=0), np.nanstd(grads, axis=0, ddof=1)


# a few hypers spanning quality (from bigsweep notes)
cands = [
    ("champion", dict(rho=0.93, sigma_in=0.55, alpha=0.84, tikhonov=6e-10,
                      sigma_p=(0.2095, 0.0412, 0.6108), k_p=(37.4, 32.7, 33.7)), 1347742509),
]
# pull a few more from bigsweep.json with varying agree
rows = json.load(open("bigsweep.json"))
deep = sorted([r for r in rows if isinstance(r.get("agree"), float)
               and not np.isnan(r["agree"]) and "ph_ref" in r], key=lambda r: r["agree"])
for r in [deep[1], deep[2], deep[6], deep[10]]:
    cands.append((f"agree={r['agree']:.2f}", dict(
        rho=r["rho"], sigma_in=r["sigma_in"], alpha=r["alpha"], tikhonov=r["tikhonov"],
        sigma_p=tuple(r["sigma_p"]), k_p=tuple(r["k_p"])), r["seed"]))

# recover champion's actual seed from stream 202
srng = np.random.default_rng(202)
SPANS = np.array([8.0, 20.0, 2.0])
SP_LO, SP_HI = 0.1 / SPANS, 2.0 / SPANS
champ_seed = None
for k in range(400):
    d = dict(rho=float(np.exp(srng.uniform(np.log(0.1), np.log(1.0)))),
             sigma_in=float(np.exp(srng.uniform(np.log(0.05), np.log(2.0)))),
             alpha=float(srng.uniform(0.3, 1.0)),
             tikhonov=float(np.exp(srng.uniform(np.log(1e-11), np.log(1e-4)))),
             sigma_p=tuple(np.exp(srng.uniform(np.log(SP_LO), np.log(SP_HI)))),
             k_p=tuple(srng.uniform(0.0, 100.0, 3)))
    s = int(srng.integers(2**31))
    if abs(d["rho"] - 0.93) < 0.005 and abs(d["sigma_in"] - 0.55) < 0.01:
        champ_seed = s
        cands[0] = ("champion", d, s)
print(f"champion seed {champ_seed}")

for tag, d, seed in cands:
    h = EsnHyperParams(n_reservoir=300, n_conn=3, seed=seed, **d)
    model = train(build_reservoir(h, 3, 3), h, train_data)
    m1, s1 = esn_ens_true_washout(model, REF.as_array())
    m2, s2 = esn_ens_self(model, REF.as_array())
    a1 = np.max(np.abs(m1 - tm) / (np.abs(tm) + 0.05))
    a2 = np.max(np.abs(m2 - tm) / (np.abs(tm) + 0.05))
    print(f"{tag:>12}: washout em={np.round(m1,3)} (agree {a1:.2f} sd {np.round(s1,1)}) | "
          f"self em={np.round(m2,3)} (agree {a2:.2f} sd {np.round(s2,1)})")

# seed sweep on champion hyper: does val composite discriminate seeds?
print("\nseed sweep on champion hyper:")
tag, d, _ = cands[0]
for j in range(8):
    seed_j = int(rng_for(999, "seedsweep", j).integers(2**31))
    h = EsnHyperParams(n_reservoir=300, n_conn=3, seed=seed_j, **d)
    model = train(build_reservoir(h, 3, 3), h, train_data)
    sts = np.mean([_short_term_loss(model, ds, 2.0, 0.5, 3, wash_steps, 1e3)
                   for ds in val_data])
    cls = np.mean([_climate_loss(model, ds, 30.0, wash_steps) for ds in val_data])
    sls, sds = [], []
    for ds in val_data:
        lt = ds.lyapunov_time or 1.1
        try:
            m, sd = _self_ensemble(model, ds.regime, ds.washout_series, lt, 100, 0.5, obj)
            sls.append(float(np.mean(np.abs(m - slopes) / (np.abs(slopes) + 0.5))))
            sds.append(float(np.mean(np.minimum(sd, 10.0))))
        except Exception:
            sls.append(2.0); sds.append(10.0)
    comp = sts + cls + 0.5 * np.mean(sls) + 0.05 * np.mean(sds)
    m2, _ = esn_ens_self(model, REF.as_array(), 400)
    a2 = np.max(np.abs(m2 - tm) / (np.abs(tm) + 0.05))
    st = long_term_stats(model, REF.as_array(), 150, hist4[0], 1.1)
    zerr = abs(st.mean[2] - 23.538) / 23.538
    print(f"  seed {j}: comp={comp:.3f} (st {sts:.3f} cl {cls:.3f} "
          f"sl {np.mean(sls):.2f} sd {np.mean(sds):.1f}) agree={a2:.2f} zerr={zerr:.2%}")
