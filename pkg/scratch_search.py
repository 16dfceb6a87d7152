"""Dev scratch: random search over hyperparameter bounds, N_r=300."""
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
    return RegimeDataset(
        regime=params.as_array(),
        washout_series=tr.states[: wash_steps],
        train_series=tr.states[wash_steps:],
        dt=DT,
        lyapunov_time=lt.lyapunov_time if lt.lambda_max > 0.05 else None,
    )


datasets = [make_dataset(p, lt, k) for k, (p, lt) in enumerate(zip(regimes, lts))]
train_data, val_data = datasets[:20], datasets[20:]

REF = LorenzParams(10.0, 28.0, 8.0 / 3.0)
UNSEEN = LorenzParams(13.0, 52.0, 2.0)


def truth_set(params, lt, n_ics, tag):
    ics = sample_attractor(params, n_ics, max(1.0, lt), seed=abs(hash(tag)) % 2**31)
    n = wash_steps + int(round(10 * lt / DT))
    return [simulate(params, LorenzState.from_array(ic),
                     IntegrationConfig(dt=DT, n_steps=n)).states for ic in ics]

truths_ref = truth_set(REF, 1.1, 10, "ref")
truths_unseen = truth_set(UNSEEN, 0.8, 10, "unseen")


def val_error(model):
    errs = []
    for ds in val_data:
        lt = ds.lyapunov_time or 1.1
        h = min(int(round(2 * lt / DT)), len(ds.train_series) - 1)
        r = model.washout(ds.washout_series, ds.regime)
        try:
            pred, _ = model.predict_outputs(r, h, ds.regime)
        except Exception:
            errs.append(1e3)
            continue
        tgt = ds.train_series[:h]
        errs.append(float(np.mean(np.linalg.norm(pred - tgt, axis=-1))
                          / np.sqrt(np.mean(np.sum(tgt**2, axis=-1)))))
    return float(np.mean(errs))


def one_step_error(model):
    ds = val_data[0]
    y_std = model.standardize(ds.train_series)
    r = model.washout(ds.washout_series, ds.regime)
    from esn_adjoint.esn import open_loop
    states = open_loop(model.mats, model.hyper, r, y_std[:-1], ds.regime)
    pred = states @ model.mats.w_out.T
    return float(np.sqrt(np.mean((pred - y_std[1:]) ** 2)))


srng = np.random.default_rng(42)
results = []
t0 = time.time()
for k in range(60):
    h = EsnHyperParams(
        n_reservoir=300, n_conn=3, seed=int(srng.integers(2**31)),
        rho=float(np.exp(srng.uniform(np.log(0.05), np.log(1.2)))),
        sigma_in=float(np.exp(srng.uniform(np.log(0.02), np.log(5.0)))),
        alpha=float(srng.uniform(0.2, 1.0)),
        tikhonov=float(np.exp(srng.uniform(np.log(1e-12), np.log(1e-4)))),
        sigma_p=tuple(np.exp(srng.uniform(np.log(1e-4), np.log(0.5), 3))),
        k_p=tuple(srng.uniform(0.0, 100.0, 3)),
    )
    try:
        mats = build_reservoir(h, 3, 3)
        model = train(mats, h, train_data)
        ve = val_error(model)
    except Exception as e:
        results.append((1e3, k, None, str(e)))
        continue
    results.append((ve, k, h, model))

results.sort(key=lambda t: t[0])
print(f"search done ({time.time()-t0:.0f}s); top 5:")
for ve, k, h, model in results[:5]:
    ph_r = predictability_horizon(model, REF.as_array(), truths_ref, 1.1)
    ph_u = predictability_horizon(model, UNSEEN.as_array(), truths_unseen, 0.8)
    ose = one_step_error(model)
    print(f"  val={ve:.4f} PH(ref)={ph_r:.2f} PH(unseen)={ph_u:.2f} 1step={ose:.2e} "
          f"rho={h.rho:.3f} sin={h.sigma_in:.3f} a={h.alpha:.3f} tik={h.tikhonov:.1e}")
    print(f"    sp=({h.sigma_p[0]:.4f},{h.sigma_p[1]:.4f},{h.sigma_p[2]:.4f}) "
          f"kp=({h.k_p[0]:.1f},{h.k_p[1]:.1f},{h.k_p[2]:.1f})")
