"""Dev scratch: verify ESN adjoint sweeps + mini ensemble sensitivity."""
import itertools
import time

import numpy as np

from esn_adjoint.adjoint import (
    adjoint_sweep, adjoint_sweep_batch, esn_param_grad, esn_step_jacobian,
    finite_diff_sensitivity, record_closed_loop, tangent_sweep,
)
from esn_adjoint.esn import (
    EsnHyperParams, RegimeDataset, build_reservoir, closed_loop, long_term_stats,
    open_loop, train,
)
from esn_adjoint.lorenz import (
    IntegrationConfig, LorenzParams, LorenzState, _attractor_run,
    lyapunov_time_grid, sample_attractor, simulate, window_sensitivity_batch,
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
train_data = datasets[:20]

# run-1 best candidate
hyper = EsnHyperParams(n_reservoir=300, n_conn=3, seed=12345,
                       rho=0.290, sigma_in=0.741, alpha=0.976, tikhonov=7.5e-05,
                       sigma_p=(0.0012, 0.0518, 0.0595), k_p=(34.6, 12.4, 4.1))
model = train(build_reservoir(hyper, 3, 3), hyper, train_data)

REF = LorenzParams(10.0, 28.0, 8.0 / 3.0)
LT_REF = 1.1
obj = ObjectiveSpec()

# washout onto the ref attractor, then record a 1-LT window
samples, hist = _attractor_run(REF, 4, 1.1, seed=21, history_steps=wash_steps)
r0 = model.washout(hist[0], REF.as_array())
n_win = int(round(1.0 * LT_REF / DT))
traj = record_closed_loop(model, r0, n_win, REF.as_array())

sv_adj, q_traj = adjoint_sweep(model, traj, obj)
sv_tan = tangent_sweep(model, traj, obj)
print("adjoint:", sv_adj.djdp)
print("tangent:", sv_tan.djdp)
print("duality rel:", np.max(np.abs(sv_adj.djdp - sv_tan.djdp) / np.abs(sv_tan.djdp)))

n_half = int(round(0.5 * LT_REF / DT))
traj_h = record_closed_loop(model, r0, n_half, REF.as_array())
sv_adj_h, _ = adjoint_sweep(model, traj_h, obj)
sv_fd = finite_diff_sensitivity(model, r0, REF.as_array(), n_half, obj, eps=1e-5)
print("half-window adjoint:", sv_adj_h.djdp)
print("half-window FD:     ", sv_fd.djdp)
print("FD rel:", np.max(np.abs(sv_adj_h.djdp - sv_fd.djdp) / np.abs(sv_fd.djdp)))

# step jacobian vs FD
rj = traj.states[5]
rjp = traj.states[6]
J = esn_step_jacobian(model, rj, rjp)


def step_map(r):
    out, st = closed_loop(model.mats, model.hyper, r, 1, REF.as_array())
    return st[1]


h = 1e-6
Jfd = np.empty_like(J)
for k in range(model.n_reservoir):
    e = np.zeros(model.n_reservoir); e[k] = h
    Jfd[:, k] = (step_map(rj + e) - step_map(rj - e)) / (2 * h)
print("step jac rel:", np.linalg.norm(J - Jfd) / np.linalg.norm(Jfd))

# ESN climate zbar at ref
t0 = time.time()
stats = long_term_stats(model, REF.as_array(), 200, hist[0], LT_REF)
print(f"ESN zbar(ref, 200LT) = {stats.mean[2]:.3f} (true ~23.54) ({time.time()-t0:.0f}s)")

# mini ensembles: true vs ESN, 300 members, 0.5 LT
t0 = time.time()
n_m = 300
samples, hist = _attractor_run(REF, n_m, 1.1, seed=33, history_steps=wash_steps)
true_grads = window_sensitivity_batch(REF, samples, 0.5 * LT_REF, obj, dt=DT)
print(f"true ensemble ({time.time()-t0:.0f}s): mean {true_grads.mean(axis=0)} "
      f"stderr {true_grads.std(axis=0, ddof=1) / np.sqrt(n_m)}")

t0 = time.time()
r0b = model.washout(np.swapaxes(hist, 0, 1), REF.as_array())
_, states_b = closed_loop(model.mats, model.hyper, r0b, n_half, REF.as_array())
esn_grads, div = adjoint_sweep_batch(model, states_b, REF.as_array(), obj)
print(f"esn ensemble ({time.time()-t0:.0f}s): mean {np.nanmean(esn_grads, axis=0)} "
      f"stderr {np.nanstd(esn_grads, axis=0, ddof=1) / np.sqrt(n_m - div.sum())} "
      f"diverged {div.sum()}")
