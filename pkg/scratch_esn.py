"""Dev scratch: ESN training quality at desk scale, hyperparameter probing."""
import itertools
import time

import numpy as np

from esn_adjoint.esn import (
    EsnHyperParams, RegimeDataset, build_reservoir, predictability_horizon,
    spectral_radius, train,
)
from esn_adjoint.lorenz import (
    IntegrationConfig, LorenzParams, LorenzState, lyapunov_time_grid,
    sample_attractor, simulate,
)
from esn_adjoint.seeding import rng_for

DT = 0.01
SEED = 7001

# --- datasets: 20 train + 5 val regimes from the section-4 grid
grid = list(itertools.product([8, 10, 12, 14, 16], [30, 35, 40, 45, 50],
                              [1.0, 1.5, 2.0, 2.5, 3.0]))
rng = rng_for(SEED, "regime-choice")
idx = rng.choice(len(grid), size=25, replace=False)
regimes = [LorenzParams(*grid[i]) for i in idx]
t0 = time.time()
lts = lyapunov_time_grid(regimes, seed=SEED)
print(f"LTs: {[f'{e.lyapunov_time:.2f}' for e in lts]} ({time.time()-t0:.0f}s)")

wash_steps, train_steps = int(4.0 / DT), int(10.0 / DT)


def make_dataset(params, lt, k):
    cfg = IntegrationConfig(dt=DT, n_steps=wash_steps + train_steps,
                            transient_steps=int(20.0 / DT))
    ic = LorenzState.from_array(
        rng_for(SEED, "data-ic", k).uniform([-15, -15, 5], [15, 15, 35]))
    tr = simulate(params, ic, cfg)
    return RegimeDataset(
        regime=params.as_array(),
        washout_series=tr.states[: wash_steps],
        train_series=tr.states[wash_steps:],
        dt=DT,
        lyapunov_time=lt.lyapunov_time if lt.lambda_max > 0.05 else None,
    )


t0 = time.time()
datasets = [make_dataset(p, lt, k) for k, (p, lt) in enumerate(zip(regimes, lts))]
train_data, val_data = datasets[:20], datasets[20:]
print(f"datasets built ({time.time()-t0:.0f}s)")

REF = LorenzParams(10.0, 28.0, 8.0 / 3.0)
REF_LT = 1.1
UNSEEN = LorenzParams(13.0, 52.0, 2.0)
UNSEEN_LT = 0.8

# truth trajectories for horizon scoring: 20 ICs, washout 4 TU + 10 LT window
def truth_set(params, lt, n_ics, tag):
    ics = sample_attractor(params, n_ics, max(1.0, lt), seed=hash(tag) % 2**31)
    n = wash_steps + int(round(10 * lt / DT))
    out = []
    for ic in ics:
        tr = simulate(params, LorenzState.from_array(ic), IntegrationConfig(dt=DT, n_steps=n))
        out.append(tr.states)
    return out

truths_ref = truth_set(REF, REF_LT, 10, "ref")
truths_unseen = truth_set(UNSEEN, UNSEEN_LT, 10, "unseen")


def evaluate(hyper, tag=""):
    t0 = time.time()
    mats = build_reservoir(hyper, 3, 3)
    model = train(mats, hyper, train_data)
    ph_ref = predictability_horizon(model, REF.as_array(), truths_ref, REF_LT)
    ph_un = predictability_horizon(model, UNSEEN.as_array(), truths_unseen, UNSEEN_LT)
    # validation error, 2 LT closed loop
    errs = []
    for ds in val_data:
        lt = ds.lyapunov_time or 1.1
        h = min(int(round(2 * lt / DT)), len(ds.train_series) - 1)
        r = model.washout(ds.washout_series, ds.regime)
        pred, _ = model.predict_outputs(r, h, ds.regime)
        tgt = ds.train_series[:h]
        errs.append(float(np.mean(np.linalg.norm(pred - tgt, axis=-1))
                          / np.sqrt(np.mean(np.sum(tgt**2, axis=-1)))))
    print(f"{tag} PH(ref)={ph_ref:.2f}LT PH(unseen)={ph_un:.2f}LT "
          f"val={np.mean(errs):.4f} ({time.time()-t0:.1f}s)")
    return np.mean(errs), ph_ref, ph_un


# probe a few hand-picked hyperparameter sets, N_r=300
base = dict(n_reservoir=300, n_conn=3, seed=1)
cands = [
    EsnHyperParams(**base, rho=0.22, sigma_in=0.07, alpha=0.885, tikhonov=1e-10,
                   sigma_p=(0.0028, 0.0015, 0.0393), k_p=(68.73, 84.81, 74.46)),
    EsnHyperParams(**base, rho=0.4, sigma_in=0.5, alpha=0.9, tikhonov=1e-8,
                   sigma_p=(0.02, 0.02, 0.2), k_p=(12.0, 40.0, 2.0)),
    EsnHyperParams(**base, rho=0.8, sigma_in=1.0, alpha=1.0, tikhonov=1e-6,
                   sigma_p=(0.05, 0.05, 0.5), k_p=(12.0, 40.0, 2.0)),
    EsnHyperParams(**base, rho=0.6, sigma_in=0.2, alpha=0.7, tikhonov=1e-9,
                   sigma_p=(0.01, 0.005, 0.1), k_p=(30.0, 60.0, 30.0)),
]
for i, h in enumerate(cands):
    evaluate(h, f"cand{i}")
