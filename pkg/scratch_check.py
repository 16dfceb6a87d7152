"""Dev scratch: validate lorenz numerics before freezing tests."""
import time

import numpy as np

from esn_adjoint.lorenz import (
    IntegrationConfig, LorenzParams, LorenzState, lyapunov_time,
    lyapunov_time_grid, sample_attractor, simulate, true_window_sensitivity,
    window_average_objective,
)
from esn_adjoint.objectives import ObjectiveSpec

P = LorenzParams(10.0, 28.0, 8.0 / 3.0)

t0 = time.time()
est = lyapunov_time(P, seed=1)
print(f"lyapunov: lambda={est.lambda_max:.4f} LT={est.lyapunov_time:.4f} "
      f"({time.time()-t0:.1f}s)")

est2 = lyapunov_time(P, seed=2)
print(f"lyapunov seed2: LT={est2.lyapunov_time:.4f} rel diff "
      f"{abs(est.lyapunov_time-est2.lyapunov_time)/est.lyapunov_time:.4%}")

# true adjoint vs central FD of the window average, both interpolations
ics = sample_attractor(P, 5, 1.1, seed=3)
obj = ObjectiveSpec()
for window in (0.55, 1.1):
    for interp in ("hermite", "linear"):
        worst = 0.0
        for ic_arr in ics:
            ic = LorenzState.from_array(ic_arr)
            sv = true_window_sensitivity(P, ic, window, obj, interpolation=interp)
            fd = np.empty(3)
            eps = 1e-4
            for j in range(3):
                p_hi = P.replace_component(j, P.as_array()[j] + eps)
                p_lo = P.replace_component(j, P.as_array()[j] - eps)
                j_hi = window_average_objective(p_hi, ic, window, obj)
                j_lo = window_average_objective(p_lo, ic, window, obj)
                fd[j] = (j_hi - j_lo) / (2 * eps)
            rel = np.max(np.abs(sv.djdp - fd) / np.maximum(np.abs(fd), 1e-12))
            worst = max(worst, rel)
        print(f"window={window} interp={interp}: worst rel err vs FD {worst:.2e}")

# ergodic z-mean self-consistency
cfg = IntegrationConfig(dt=0.01, n_steps=400000, transient_steps=2000)
t0 = time.time()
tr1 = simulate(P, LorenzState(1.0, 1.0, 1.0), cfg)
tr2 = simulate(P, LorenzState(-3.0, 4.0, 15.0), cfg)
z1, z2 = tr1.states[:, 2].mean(), tr2.states[:, 2].mean()
print(f"zbar run1={z1:.4f} run2={z2:.4f} rel diff {abs(z1-z2)/z1:.3%} "
      f"({time.time()-t0:.1f}s for 2x4000TU)")

# subcritical r -> origin
cfg2 = IntegrationConfig(dt=0.01, n_steps=5000)
trs = simulate(LorenzParams(10.0, 0.5, 8.0 / 3.0), LorenzState(1.0, 1.0, 1.0), cfg2)
print("r=0.5 final state:", trs.states[-1])

est3 = lyapunov_time(LorenzParams(10.0, 0.5, 8.0 / 3.0), seed=1)
print(f"r=0.5 lambda={est3.lambda_max:.4f} chaotic={est3.is_chaotic}")

# grid LTs
t0 = time.time()
import itertools
grid = [LorenzParams(s, r, b) for s, r, b in
        itertools.product([8, 16], [30, 50], [1.0, 3.0])]
ests = lyapunov_time_grid(grid, seed=5)
print("corner-grid LTs:", [f"{e.lyapunov_time:.2f}" for e in ests],
      f"({time.time()-t0:.1f}s)")

# attractor sample z-mean
samples = sample_attractor(P, 100, 1.1, seed=7)
print(f"100-sample z-mean {samples[:,2].mean():.3f} vs zbar {z1:.3f}")
