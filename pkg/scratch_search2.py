"""Dev scratch: staged search (random + refine), 2 realisations, 2 anchors."""
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

truths_ref = truth_set(REF, 1.1, 20, "ref20")
truths_unseen = truth_set(UNSEEN, 0.8, 20, "unseen20")


def val_error(model):
    """Mean normalized closed-loop error, two anchors per regime."""
    errs = []
    for ds in val_data:
        lt = ds.lyapunov_time or 1.1
        h = int(round(2 * lt / DT))
        series = np.concatenate([ds.washout_series, ds.train_series])
        for anchor in (0, len(ds.train_series) // 2):
            wash = series[anchor:anchor + wash_steps]
            tgt = series[anchor + wash_steps: anchor + wash_steps + h]
            if len(tgt) < h:
                continue
            r = model.washout(wash, ds.regime)
            try:
                pred, _ = model.predict_outputs(r, len(tgt), ds.regime)
            except Exception:
                errs.append(1e3)
                continue
            errs.append(float(np.mean(np.linalg.norm(pred - tgt, axis=-1))
                              / np.sqrt(np.mean(np.sum(tgt**2, axis=-1)))))
    return float(np.mean(errs))


BOUNDS = dict(rho=(0.05, 1.2), sigma_in=(0.02, 5.0), alpha=(0.2, 1.0),
              tikhonov=(1e-12, 1e-4), sigma_p=(1e-4, 0.5), k_p=(0.0, 100.0))
LOG = {"rho", "sigma_in", "tikhonov", "sigma_p"}


def sample_random(srng):
    d = {}
    for name in ("rho", "sigma_in", "alpha", "tikhonov"):
        lo, hi = BOUNDS[name]
        d[name] = (float(np.exp(srng.uniform(np.log(lo), np.log(hi))))
                   if name in LOG else float(srng.uniform(lo, hi)))
    lo, hi = BOUNDS["sigma_p"]
    d["sigma_p"] = tuple(np.exp(srng.uniform(np.log(lo), np.log(hi), 3)))
    lo, hi = BOUNDS["k_p"]
    d["k_p"] = tuple(srng.uniform(lo, hi, 3))
    return d


def to_t(d):
    out = []
    for name in ("rho", "sigma_in", "alpha", "tikhonov"):
        v = d[name]
        out.append(np.log(v) if name in LOG else v)
    out.extend(np.log(d["sigma_p"]))
    out.extend(d["k_p"])
    return np.array(out)


def from_t(t):
    d = dict(rho=float(np.exp(t[0])), sigma_in=float(np.exp(t[1])),
             alpha=float(t[2]), tikhonov=float(np.exp(t[3])),
             sigma_p=tuple(np.exp(t[4:7])), k_p=tuple(t[7:10]))
    return d


def t_bounds():
    lo, hi = [], []
    for name in ("rho", "sigma_in", "alpha", "tikhonov"):
        b = BOUNDS[name]
        lo.append(np.log(b[0]) if name in LOG else b[0])
        hi.append(np.log(b[1]) if name in LOG else b[1])
    lo.extend([np.log(BOUNDS["sigma_p"][0])] * 3 + [BOUNDS["k_p"][0]] * 3)
    hi.extend([np.log(BOUNDS["sigma_p"][1])] * 3 + [BOUNDS["k_p"][1]] * 3)
    return np.array(lo), np.array(hi)


def score_candidate(d, cand_idx):
    scores = []
    for j in range(2):
        h = EsnHyperParams(n_reservoir=300, n_conn=3,
                           seed=int(rng_for(SEED, "realisation", cand_idx, j)
                                    .integers(2**31)), **d)
        try:
            model = train(build_reservoir(h, 3, 3), h, train_data)
            scores.append(val_error(model))
        except Exception:
            scores.append(1e3)
    return float(np.mean(scores)), scores


srng = np.random.default_rng(42)
history = []
t0 = time.time()
N_RANDOM, N_REFINE = 30, 20
for k in range(N_RANDOM):
    d = sample_random(srng)
    sc, per = score_candidate(d, k)
    history.append((sc, k, d, per))

lo, hi = t_bounds()
for k in range(N_RANDOM, N_RANDOM + N_REFINE):
    history.sort(key=lambda t: t[0])
    base = history[srng.integers(0, 3)][2]  # around one of top 3
    t = to_t(base) + srng.normal(0, 0.15, 10) * (hi - lo)
    d = from_t(np.clip(t, lo, hi))
    sc, per = score_candidate(d, k)
    history.append((sc, k, d, per))

history.sort(key=lambda t: t[0])
print(f"staged search done ({time.time()-t0:.0f}s)")
for sc, k, d, per in history[:4]:
    # evaluate winner PH with both realisation seeds
    for j in range(2):
        h = EsnHyperParams(n_reservoir=300, n_conn=3,
                           seed=int(rng_for(SEED, "realisation", k, j).integers(2**31)),
                           **d)
        model = train(build_reservoir(h, 3, 3), h, train_data)
        ph_r = predictability_horizon(model, REF.as_array(), truths_ref, 1.1)
        ph_u = predictability_horizon(model, UNSEEN.as_array(), truths_unseen, 0.8)
        print(f"cand{k} seed{j}: score={sc:.4f} per={per[j]:.4f} "
              f"PH(ref)={ph_r:.2f} PH(unseen)={ph_u:.2f}")
    print(f"   rho={d['rho']:.3f} sin={d['sigma_in']:.3f} a={d['alpha']:.3f} "
          f"tik={d['tikhonov']:.1e} sp={tuple(round(v,4) for v in d['sigma_p'])} "
          f"kp={tuple(round(v,1) for v in d['k_p'])}")
