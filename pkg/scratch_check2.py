"""Dev scratch: RK4 order, jacobian FD, attractor-run timing."""
import time

import numpy as np

from esn_adjoint.lorenz import (
    IntegrationConfig, LorenzParams, LorenzState, _attractor_run, _rhs,
    lorenz_jacobian, lorenz_param_grad, lorenz_rhs, rk4_step, simulate,
)

P = LorenzParams(10.0, 28.0, 8.0 / 3.0)

# exponential oracle
x = np.array([1.0])
out = rk4_step(lambda u: u, x, 0.1)
print(f"exp oracle err: {abs(out[0] - np.exp(0.1)):.2e}")

# richardson convergence on 1 TU
ic = LorenzState(-8.0, 7.0, 27.0)
ref = simulate(P, ic, IntegrationConfig(dt=1e-4, n_steps=10000)).states[-1]
errs, dts = [], [0.02, 0.01, 0.005, 0.0025]
for dt in dts:
    end = simulate(P, ic, IntegrationConfig(dt=dt, n_steps=int(round(1.0 / dt)))).states[-1]
    errs.append(np.linalg.norm(end - ref))
slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
print("errors:", [f"{e:.3e}" for e in errs], f"slope={slope:.3f}")

# analytic jacobian and param grad vs central FD
rng = np.random.default_rng(0)
worst_j, worst_p = 0.0, 0.0
for _ in range(100):
    u = rng.uniform([-20, -25, 0], [20, 25, 50])
    st = LorenzState.from_array(u)
    h = 1e-5
    jac_fd = np.empty((3, 3))
    for j in range(3):
        e = np.zeros(3); e[j] = h
        jac_fd[:, j] = (_rhs(u + e, P.s, P.r, P.b) - _rhs(u - e, P.s, P.r, P.b)) / (2 * h)
    jac = lorenz_jacobian(st, P)
    worst_j = max(worst_j, np.linalg.norm(jac - jac_fd) / np.linalg.norm(jac))
    pg_fd = np.empty((3, 3))
    pv = P.as_array()
    for j in range(3):
        e = np.zeros(3); e[j] = h
        hi, lo = pv + e, pv - e
        pg_fd[:, j] = (_rhs(u, *hi) - _rhs(u, *lo)) / (2 * h)
    pg = lorenz_param_grad(st)
    worst_p = max(worst_p, np.linalg.norm(pg - pg_fd) / max(np.linalg.norm(pg), 1e-12))
print(f"jacobian FD worst rel {worst_j:.2e}, param grad worst rel {worst_p:.2e}")

# attractor run with histories at ensemble scale
t0 = time.time()
samples, hist = _attractor_run(P, 2000, 1.1, seed=11, history_steps=400)
print(f"2000 samples + 4TU histories: {time.time()-t0:.1f}s, "
      f"hist shape {hist.shape}, z-mean {samples[:,2].mean():.3f}")
