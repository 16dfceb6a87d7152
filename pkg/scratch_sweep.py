"""Dev scratch: 200-candidate exploration to find the PH(ref) ceiling."""
import itertools
import time

import numpy as np

from esn_adjoint.esn import (
    EsnHyperParams, RegimeDataset, build_reservoir, predictability_horizon, train,
)
from esn_adjoint.lorenz import (
    IntegrationConfig, LorenzParams, LorenzState, lyapunov_time_grid,
    sample_attractor, simulate,
)
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
UNSEEN = LorenzParams(13.0, 52.0, 2.0)


def truth_set(params, lt, n_ics, tag):
    ics = sample_attractor(params, n_ics, max(1.0, lt), seed=abs(hash(tag)) % 2**31)
    n = wash_steps + int(round(10 * lt / DT))
    return [simulate(params, LorenzState.from_array(ic),
                     IntegrationConfig(dt=DT, n_steps=n)).states for ic in ics]

truths_ref = truth_set(REF, 1.1, 20, "ref20")
truths_unseen = truth_set(UNSEEN, 0.8, 20, "unseen20")

THRESH = 0.5


def val_frac(model):
    fracs = []
    for ds in val_data:
        lt = ds.lyapunov_time or 1.1
        h = int(round(2 * lt / DT))
        series = np.concatenate([ds.washout_series, ds.train_series])
        n_anchor = 3
        step = (len(series) - wash_steps - h) // max(1, n_anchor - 1)
        for a in range(n_anchor):
            anchor = a * step
            wash = series[anchor:anchor + wash_steps]
            tgt = series[anchor + wash_steps: anchor + wash_steps + h]
            if len(tgt) < h:
                continue
            r = model.washout(wash, ds.regime)
            try:
                pred, _ = model.predict_outputs(r, len(tgt), ds.regime)
            except Exception:
                fracs.append(1.0)
                continue
            e = (np.linalg.norm(pred - tgt, axis=-1)
                 / np.sqrt(np.mean(np.sum(tgt**2, axis=-1))))
            fracs.append(float(np.mean(e > THRESH)))
    return float(np.mean(fracs))


SPANS = np.array([8.0, 20.0, 2.0])
SP_LO, SP_HI = 0.1 / SPANS, 2.0 / SPANS

srng = np.random.default_rng(7)
rows = []
t0 = time.time()
for k in range(200):
    d = dict(
        rho=float(np.exp(srng.uniform(np.log(0.1), np.log(1.0)))),
        sigma_in=float(np.exp(srng.uniform(np.log(0.05), np.log(3.0)))),
        alpha=float(srng.uniform(0.3, 1.0)),
        tikhonov=float(np.exp(srng.uniform(np.log(1e-11), np.log(1e-5)))),
        sigma_p=tuple(np.exp(srng.uniform(np.log(SP_LO), np.log(SP_HI)))),
        k_p=tuple(srng.uniform(0.0, 100.0, 3)),
    )
    h = EsnHyperParams(n_reservoir=300, n_conn=3, seed=int(srng.integers(2**31)), **d)
    try:
        model = train(build_reservoir(h, 3, 3), h, train_data)
        vf = val_frac(model)
    except Exception:
        continue
    rows.append((vf, d, h, model))
    if (k + 1) % 50 == 0:
        print(f"...{k+1} candidates ({time.time()-t0:.0f}s)")

rows.sort(key=lambda t: t[0])
print(f"\ntop 12 by val fraction ({time.time()-t0:.0f}s total):")
for vf, d, h, model in rows[:12]:
    ph_r = predictability_horizon(model, REF.as_array(), truths_ref, 1.1)
    ph_u = predictability_horizon(model, UNSEEN.as_array(), truths_unseen, 0.8)
    print(f"vf={vf:.3f} PH(ref)={ph_r:.2f} PH(un)={ph_u:.2f} "
          f"rho={d['rho']:.2f} sin={d['sigma_in']:.2f} a={d['alpha']:.2f} "
          f"tik={d['tikhonov']:.0e} sp=({d['sigma_p'][0]:.3f},{d['sigma_p'][1]:.3f},"
          f"{d['sigma_p'][2]:.3f}) kp=({d['k_p'][0]:.0f},{d['k_p'][1]:.0f},{d['k_p'][2]:.0f})")
