"""Dev scratch: compute all score terms for deep candidates, tune weights."""
import itertools
import json
import time

import numpy as np

from esn_adjoint.esn import EsnHyperParams, RegimeDataset, build_reservoir, train
from esn_adjoint.hyperopt import (
    _climate_loss, _climate_slopes, _self_ensemble, _short_term_loss,
)
from esn_adjoint.lorenz import (
    IntegrationConfig, LorenzParams, LorenzState, lyapunov_time_grid, simulate,
)
from esn_adjoint.objectives import ObjectiveSpec
from esn_adjoint.seeding import rng_for

DT = 0.01
SEED = 7001
obj = ObjectiveSpec()

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

rows = json.load(open("bigsweep.json"))
deep = [r for r in rows if isinstance(r.get("agree"), float)
        and not np.isnan(r["agree"]) and "ph_ref" in r]
print(f"{len(deep)} deep candidates; computing score terms...")


class FakeSpace:
    sens_members = 100
    sens_window_lt = 0.5
    sens_slope_weight = 1.0
    sens_spread_weight = 1.0


t0 = time.time()
out = []
for n, r in enumerate(deep):
    h = EsnHyperParams(n_reservoir=300, n_conn=3, seed=r["seed"],
                       rho=r["rho"], sigma_in=r["sigma_in"], alpha=r["alpha"],
                       tikhonov=r["tikhonov"], sigma_p=tuple(r["sigma_p"]),
                       k_p=tuple(r["k_p"]))
    model = train(build_reservoir(h, 3, 3), h, train_data)
    sts, cls, sls, sds = [], [], [], []
    for ds in val_data:
        sts.append(_short_term_loss(model, ds, 2.0, 0.5, 3, wash_steps, 1e3))
        cls.append(_climate_loss(model, ds, 30.0, wash_steps))
        lt = ds.lyapunov_time or 1.1
        try:
            m, sd = _self_ensemble(model, ds.regime, ds.washout_series, lt,
                                   100, 0.5, obj)
            sls.append(float(np.mean(np.abs(m - slopes) / (np.abs(slopes) + 0.5))))
            sds.append(float(np.mean(sd)))
        except Exception:
            sls.append(2.0)
            sds.append(10.0)
    out.append(dict(agree=r["agree"], ph=r["ph_ref"], zerr=r["zbar_err"],
                    st=float(np.mean(sts)), cl=float(np.mean(cls)),
                    sl=float(np.mean(np.minimum(sls, 2.0))),
                    sd=float(np.mean(np.minimum(sds, 10.0)))))
    if (n + 1) % 20 == 0:
        print(f"...{n+1} ({time.time()-t0:.0f}s)")

json.dump(out, open("score_terms.json", "w"))

arr = {k: np.array([o[k] for o in out]) for k in out[0]}
best_combo = None
print("\nweight scan (w_cl, w_sl, w_sd): top-3 [agree | ph | zerr]")
for w_cl in (0.5, 1.0, 2.0):
    for w_sl in (0.25, 0.5, 1.0):
        for w_sd in (0.02, 0.05, 0.1):
            score = arr["st"] + w_cl * arr["cl"] + w_sl * arr["sl"] + w_sd * arr["sd"]
            order = np.argsort(score)
            t3 = [out[i] for i in order[:3]]
            good = sum(1 for o in t3 if o["agree"] < 0.45 and o["ph"] >= 2.0
                       and o["zerr"] <= 0.05)
            print(f"({w_cl},{w_sl},{w_sd}): "
                  + " | ".join(f"{o['agree']:.2f},{o['ph']:.1f},{o['zerr']:.2f}"
                               for o in t3) + f"  n_good={good}")
EOF_MARKER_NOT_USED = None
