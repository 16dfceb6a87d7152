"""Ground-truth dynamics: Lorenz 63 simulation, analytical linearisations,
attractor sampling, Lyapunov-time estimation, and window-averaged adjoint
sensitivities of the true system.

All stepping routines broadcast over leading batch axes, so a whole ensemble
of trajectories integrates in one python loop over time steps.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DivergedAdjointError, IntegrationBlowupError, InvalidStateError
from .objectives import ObjectiveSpec, SensitivityVector
from .seeding import rng_for

N_STATE = 3
N_PARAMS = 3
DEFAULT_DT = 0.01
DEFAULT_TRANSIENT_TIME = 20.0

# Sampling box for raw initial conditions; any point here falls onto the
# attractor well within the default transient.
_IC_LOW = np.array([-15.0, -15.0, 5.0])
_IC_HIGH = np.array([15.0, 15.0, 35.0])


def _require_finite(arr, what: str):
    if not np.all(np.isfinite(arr)):
        raise InvalidStateError(f"{what} must be finite")


@dataclass(frozen=True)
class LorenzParams:
    """Physical parameters (s, r, b) of the Lorenz 63 system."""

    s: float
    r: float
    b: float

    def __post_init__(self):
        vals = (self.s, self.r, self.b)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidStateError("parameters must be finite")
        if self.s <= 0 or self.b <= 0:
            raise InvalidStateError("s and b must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.s, self.r, self.b], dtype=float)

    @classmethod
    def from_array(cls, p) -> "LorenzParams":
        p = np.asarray(p, dtype=float)
        return cls(float(p[0]), float(p[1]), float(p[2]))

    def replace_component(self, index: int, value: float) -> "LorenzParams":
        p = self.as_array()
        p[index] = value
        return LorenzParams.from_array(p)


@dataclass(frozen=True)
class LorenzState:
    """A single state (x, y, z)."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise InvalidStateError("state components must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @classmethod
    def from_array(cls, u) -> "LorenzState":
        u = np.asarray(u, dtype=float)
        return cls(float(u[0]), float(u[1]), float(u[2]))


@dataclass(frozen=True)
class IntegrationConfig:
    """Time step, step count and discarded transient for a simulation."""

    dt: float = DEFAULT_DT
    n_steps: int = 1000
    transient_steps: int = 0

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError("dt must be positive and finite")
        if self.n_steps < 0:
            raise ValueError("n_steps must be non-negative")
        if self.transient_steps < 0:
            raise ValueError("transient_steps must be non-negative")


@dataclass
class Trajectory:
    """Uniformly sampled states, ``states[k]`` at time ``t0 + k*dt``."""

    dt: float
    states: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim != 2 or self.states.shape[1] != N_STATE:
            raise ValueError("states must have shape (n_steps+1, 3)")

    @property
    def n_steps(self) -> int:
        return self.states.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.states.shape[0])

    def final_state(self) -> LorenzState:
        return LorenzState.from_array(self.states[-1])


@dataclass(frozen=True)
class LyapunovEstimate:
    """Leading Lyapunov exponent and its inverse time scale.

    ``lyapunov_time`` is infinite when the exponent is non-positive; such a
    regime is flagged non-chaotic rather than treated as a failure.
    """

    lambda_max: float
    lyapunov_time: float
    n_renorm: int

    @property
    def is_chaotic(self) -> bool:
        return self.lambda_max > 0


def _rhs(xyz, s, r, b):
    x = xyz[..., 0]
    y = xyz[..., 1]
    z = xyz[..., 2]
    return np.stack([s * (y - x), x * (r - z) - y, x * y - b * z], axis=-1)


def _jacobian(xyz, s, r, b):
    x = xyz[..., 0]
    y = xyz[..., 1]
    z = xyz[..., 2]
    shape = np.broadcast_shapes(x.shape, np.shape(s))
    jac = np.zeros(shape + (3, 3))
    jac[..., 0, 0] = -s
    jac[..., 0, 1] = s
    jac[..., 1, 0] = r - z
    jac[..., 1, 1] = -1.0
    jac[..., 1, 2] = -x
    jac[..., 2, 0] = y
    jac[..., 2, 1] = x
    jac[..., 2, 2] = -b
    return jac


def _jacobian_t_dot(xyz, s, r, b, q):
    """J(x)^T q without materialising the matrix; broadcasts over batches."""
    x = xyz[..., 0]
    y = xyz[..., 1]
    z = xyz[..., 2]
    q0 = q[..., 0]
    q1 = q[..., 1]
    q2 = q[..., 2]
    return np.stack(
        [
            -s * q0 + (r - z) * q1 + y * q2,
            s * q0 - q1 + x * q2,
            -x * q1 - b * q2,
        ],
        axis=-1,
    )


def _param_grad_t_dot(xyz, q):
    """(df/dp)^T q for the parameter order (s, r, b)."""
    x = xyz[..., 0]
    y = xyz[..., 1]
    z = xyz[..., 2]
    return np.stack(
        [(y - x) * q[..., 0], x * q[..., 1], -z * q[..., 2]],
        axis=-1,
    )


def lorenz_rhs(state: LorenzState, params: LorenzParams) -> np.ndarray:
    """Right-hand side (s(y-x), x(r-z)-y, xy-bz)."""
    return _rhs(state.as_array(), params.s, params.r, params.b)


def lorenz_jacobian(state: LorenzState, params: LorenzParams) -> np.ndarray:
    """State Jacobian; its trace is -(s+1+b) at every state."""
    return _jacobian(state.as_array(), params.s, params.r, params.b)


def lorenz_param_grad(state: LorenzState) -> np.ndarray:
    """Derivative of the right-hand side with respect to (s, r, b)."""
    x, y, z = state.x, state.y, state.z
    return np.array(
        [
            [y - x, 0.0, 0.0],
            [0.0, x, 0.0],
            [0.0, 0.0, -z],
        ]
    )


def rk4_step(rhs, state, dt: float):
    """One classical fourth-order Runge-Kutta step.

    ``rhs`` maps a state array to its derivative and may act on batches.
    Raises :class:`IntegrationBlowupError` when the update is non-finite.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    state = np.asarray(state, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        k1 = rhs(state)
        k2 = rhs(state + 0.5 * dt * k1)
        k3 = rhs(state + 0.5 * dt * k2)
        k4 = rhs(state + dt * k3)
        out = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise IntegrationBlowupError("non-finite state in RK4 update")
    return out


def simulate(params: LorenzParams, ic: LorenzState, config: IntegrationConfig) -> Trajectory:
    """Integrate the system, discarding ``transient_steps`` before recording."""
    rhs = lambda u: _rhs(u, params.s, params.r, params.b)
    u = ic.as_array()
    for k in range(config.transient_steps):
        try:
            u = rk4_step(rhs, u, config.dt)
        except IntegrationBlowupError as err:
            raise IntegrationBlowupError(
                f"blowup during transient at step {k}", step=k
            ) from err
    states = np.empty((config.n_steps + 1, N_STATE))
    states[0] = u
    for k in range(config.n_steps):
        try:
            u = rk4_step(rhs, u, config.dt)
        except IntegrationBlowupError as err:
            raise IntegrationBlowupError(f"blowup at step {k}", step=k) from err
        states[k + 1] = u
    return Trajectory(dt=config.dt, states=states, t0=config.transient_steps * config.dt)


def _attractor_run(
    params: LorenzParams,
    n_samples: int,
    spacing: float,
    seed: int,
    dt: float = DEFAULT_DT,
    transient_time: float = DEFAULT_TRANSIENT_TIME,
    history_steps: int = 0,
):
    """Samples on the attractor, optionally with the trajectory segment that
    leads into each sample (used to washout a reservoir onto the same spot).

    Returns ``(samples, histories)`` where ``histories`` is ``None`` when
    ``history_steps == 0`` and otherwise has shape
    ``(n_samples, history_steps + 1, 3)`` with the sample as its last row.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    rng = rng_for(seed, "attractor-ic")
    ic = rng.uniform(_IC_LOW, _IC_HIGH)
    stride = max(1, math.ceil(spacing / dt - 1e-12))
    transient_steps = max(history_steps, int(round(transient_time / dt)))
    n_record = (n_samples - 1) * stride + history_steps + 1

    rhs = lambda u: _rhs(u, params.s, params.r, params.b)
    u = np.asarray(ic, dtype=float)
    lead = transient_steps - history_steps
    for k in range(lead):
        u = rk4_step(rhs, u, dt)
    record = np.empty((n_record, N_STATE))
    record[0] = u
    for k in range(n_record - 1):
        u = rk4_step(rhs, u, dt)
        record[k + 1] = u

    sample_idx = history_steps + stride * np.arange(n_samples)
    samples = record[sample_idx].copy()
    histories = None
    if history_steps > 0:
        histories = np.stack(
            [record[i - history_steps : i + 1] for i in sample_idx]
        )
    return samples, histories


def sample_attractor(
    params: LorenzParams,
    n_samples: int,
    spacing: float,
    seed: int,
    dt: float = DEFAULT_DT,
    transient_time: float = DEFAULT_TRANSIENT_TIME,
) -> np.ndarray:
    """States on the attractor separated by at least ``spacing`` time units.

    One long trajectory is run past the transient and subsampled, so the
    result is deterministic for a fixed seed.
    """
    samples, _ = _attractor_run(
        params, n_samples, spacing, seed, dt=dt, transient_time=transient_time
    )
    return samples


def _lyapunov_batch(
    s,
    r,
    b,
    dt: float,
    horizon_time: float,
    transient_time: float,
    seed: int,
    renorm_interval: float = 1.0,
):
    """Benettin tangent propagation for a batch of parameter sets.

    Returns ``(lambda_max, n_renorm)`` arrays of shape ``(batch,)``.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    r = np.atleast_1d(np.asarray(r, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    batch = np.broadcast_shapes(s.shape, r.shape, b.shape)[0]
    rng = rng_for(seed, "lyapunov")
    x = rng.uniform(_IC_LOW, _IC_HIGH, size=(batch, N_STATE))

    rhs = lambda u: _rhs(u, s, r, b)
    n_transient = int(round(transient_time / dt))
    for _ in range(n_transient):
        x = rk4_step(rhs, x, dt)

    v = rng.standard_normal((batch, N_STATE))
    v /= np.linalg.norm(v, axis=-1, keepdims=True)

    def combined_rhs(u):
        xs = u[..., :N_STATE]
        vs = u[..., N_STATE:]
        dx = _rhs(xs, s, r, b)
        dv = np.einsum("...ij,...j->...i", _jacobian(xs, s, r, b), vs)
        return np.concatenate([dx, dv], axis=-1)

    n_steps = int(round(horizon_time / dt))
    renorm_every = max(1, int(round(renorm_interval / dt)))
    u = np.concatenate([x, v], axis=-1)
    log_growth = np.zeros(batch)
    n_renorm = 0
    for k in range(1, n_steps + 1):
        u = rk4_step(combined_rhs, u, dt)
        if k % renorm_every == 0 or k == n_steps:
            norms = np.linalg.norm(u[..., N_STATE:], axis=-1)
            log_growth += np.log(norms)
            u[..., N_STATE:] /= norms[..., None]
            n_renorm += 1
    lam = log_growth / (n_steps * dt)
    return lam, n_renorm


def lyapunov_time(
    params: LorenzParams,
    config: IntegrationConfig | None = None,
    seed: int = 0,
    renorm_interval: float = 1.0,
) -> LyapunovEstimate:
    """Leading Lyapunov exponent via tangent propagation with periodic
    renormalisation; ``lyapunov_time = 1 / lambda_max`` when positive."""
    if config is None:
        config = IntegrationConfig(
            dt=DEFAULT_DT,
            n_steps=int(round(1000.0 / DEFAULT_DT)),
            transient_steps=int(round(DEFAULT_TRANSIENT_TIME / DEFAULT_DT)),
        )
    lam, n_renorm = _lyapunov_batch(
        params.s,
        params.r,
        params.b,
        dt=config.dt,
        horizon_time=config.n_steps * config.dt,
        transient_time=config.transient_steps * config.dt,
        seed=seed,
        renorm_interval=renorm_interval,
    )
    lam_max = float(lam[0])
    lt = 1.0 / lam_max if lam_max > 0 else math.inf
    return LyapunovEstimate(lambda_max=lam_max, lyapunov_time=lt, n_renorm=n_renorm)


def lyapunov_time_grid(
    regimes,
    dt: float = DEFAULT_DT,
    horizon_time: float = 1000.0,
    transient_time: float = DEFAULT_TRANSIENT_TIME,
    seed: int = 0,
    renorm_interval: float = 1.0,
) -> list[LyapunovEstimate]:
    """Batched Lyapunov estimates for a list of parameter sets."""
    regimes = list(regimes)
    s = np.array([p.s for p in regimes])
    r = np.array([p.r for p in regimes])
    b = np.array([p.b for p in regimes])
    lam, n_renorm = _lyapunov_batch(
        s, r, b, dt, horizon_time, transient_time, seed, renorm_interval
    )
    out = []
    for lam_i in lam:
        lt = 1.0 / lam_i if lam_i > 0 else math.inf
        out.append(LyapunovEstimate(float(lam_i), float(lt), n_renorm))
    return out


def _forward_window(params: LorenzParams, ics, n_steps: int, dt: float, component: int):
    """Integrate the window with the objective quadrature carried as an extra
    state, storing node states and node derivatives for the backward sweep.

    Returns ``(states, fvals, averages)`` with ``states``/``fvals`` of shape
    ``(n_steps+1, batch, 3)`` and ``averages`` of shape ``(batch,)``.
    """
    ics = np.atleast_2d(np.asarray(ics, dtype=float))
    batch = ics.shape[0]
    s, r, b = params.s, params.r, params.b

    def aug_rhs(u):
        xyz = u[..., :N_STATE]
        f = _rhs(xyz, s, r, b)
        return np.concatenate([f, xyz[..., component : component + 1]], axis=-1)

    states = np.empty((n_steps + 1, batch, N_STATE))
    fvals = np.empty_like(states)
    u = np.concatenate([ics, np.zeros((batch, 1))], axis=-1)
    states[0] = ics
    fvals[0] = _rhs(ics, s, r, b)
    for k in range(n_steps):
        try:
            u = rk4_step(aug_rhs, u, dt)
        except IntegrationBlowupError as err:
            raise DivergedAdjointError(
                f"forward pass blew up at t={k * dt:.3f}", step=k
            ) from err
        states[k + 1] = u[..., :N_STATE]
        fvals[k + 1] = _rhs(u[..., :N_STATE], s, r, b)
    averages = u[..., N_STATE] / (n_steps * dt)
    return states, fvals, averages


def _window_steps(window: float, dt: float) -> int:
    n = int(round(window / dt))
    if n < 1:
        raise ValueError("window must cover at least one time step")
    return n


def window_average_objective(
    params: LorenzParams,
    ic: LorenzState,
    window: float,
    objective: ObjectiveSpec = ObjectiveSpec(),
    dt: float = DEFAULT_DT,
) -> float:
    """Window average of the objective component, integrated to RK4 accuracy."""
    n = _window_steps(window, dt)
    _, _, avg = _forward_window(params, ic.as_array()[None, :], n, dt, objective.component)
    return float(avg[0])


def _backward_window(
    params: LorenzParams,
    states,
    fvals,
    dt: float,
    component: int,
    interpolation: str = "hermite",
    norm_cap: float = 1e8,
):
    """Backward sweep of the continuous adjoint along a stored trajectory.

    Solves dq/dtau = J^T(x(T-tau)) q + (1/T) dJobj/dx from q(tau=0) = 0,
    accumulating the parameter integral as extra quadrature states; the
    gradient dJ/dp is the quadrature value at tau = T.  Mid-step values of
    the stored trajectory are reconstructed by linear or cubic Hermite
    interpolation between nodes.
    """
    n_steps = states.shape[0] - 1
    batch = states.shape[1]
    s, r, b = params.s, params.r, params.b
    T = n_steps * dt
    source = np.zeros(N_STATE)
    source[component] = 1.0 / T

    if interpolation not in ("hermite", "linear"):
        raise ValueError("interpolation must be 'hermite' or 'linear'")

    def rhs_at(x, q):
        dq = _jacobian_t_dot(x, s, r, b, q[..., :N_STATE]) + source
        dgamma = _param_grad_t_dot(x, q[..., :N_STATE])
        return np.concatenate([dq, dgamma], axis=-1)

    u = np.zeros((batch, 2 * N_STATE))
    for k in range(n_steps):
        x_hi = states[n_steps - k]
        x_lo = states[n_steps - k - 1]
        if interpolation == "hermite":
            # cubic Hermite midpoint on [t_lo, t_hi]
            x_mid = 0.5 * (x_hi + x_lo) + 0.125 * dt * (
                fvals[n_steps - k - 1] - fvals[n_steps - k]
            )
        else:
            x_mid = 0.5 * (x_hi + x_lo)
        k1 = rhs_at(x_hi, u)
        k2 = rhs_at(x_mid, u + 0.5 * dt * k1)
        k3 = rhs_at(x_mid, u + 0.5 * dt * k2)
        k4 = rhs_at(x_lo, u + dt * k3)
        u = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        qmax = np.max(np.abs(u[..., :N_STATE]))
        if not np.isfinite(qmax) or qmax > norm_cap:
            raise DivergedAdjointError(
                f"adjoint diverged at t={(n_steps - k - 1) * dt:.3f}",
                step=n_steps - k - 1,
            )
    return u[..., N_STATE:]


def window_sensitivity_batch(
    params: LorenzParams,
    ics,
    window: float,
    objective: ObjectiveSpec = ObjectiveSpec(),
    dt: float = DEFAULT_DT,
    interpolation: str = "hermite",
    norm_cap: float = 1e8,
):
    """Adjoint gradients of the window-averaged objective for many initial
    conditions at once; returns an array of shape ``(batch, 3)``."""
    n = _window_steps(window, dt)
    states, fvals, _ = _forward_window(
        params, ics, n, dt, objective.component
    )
    return _backward_window(
        params, states, fvals, dt, objective.component, interpolation, norm_cap
    )


def true_window_sensitivity(
    params: LorenzParams,
    ic: LorenzState,
    window: float,
    objective: ObjectiveSpec = ObjectiveSpec(),
    dt: float = DEFAULT_DT,
    interpolation: str = "hermite",
    norm_cap: float = 1e8,
) -> SensitivityVector:
    """Gradient of the window-averaged objective with respect to (s, r, b),
    from the continuous adjoint integrated backward along the stored forward
    trajectory with terminal condition zero."""
    if window <= 0:
        raise ValueError("window must be positive")
    grads = window_sensitivity_batch(
        params,
        ic.as_array()[None, :],
        window,
        objective,
        dt=dt,
        interpolation=interpolation,
        norm_cap=norm_cap,
    )
    return SensitivityVector(
        djdp=grads[0], window_steps=_window_steps(window, dt), method="adjoint"
    )


def export_trajectory_csv(traj: Trajectory, path) -> None:
    """Write a trajectory as CSV with header ``t,x,y,z`` at full precision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "y", "z"])
        for t, row in zip(traj.times, traj.states):
            writer.writerow([repr(float(t))] + [repr(float(v)) for v in row])
