"""Gradients through the autonomous closed-loop ESN.

With the readout fed back, one closed-loop step is

    r(i+1) = (1 - alpha) r(i) + alpha tanh(W_in^y W_out r(i) + W_in^p pi + W r(i))

where pi = sigma_p * (p - k_p).  Writing rtilde(i) for the tanh output,
recovered from stored states as (r(i+1) - (1-alpha) r(i)) / alpha, the step
Jacobian and parameter gradient are

    d r(i+1) / d r(i) = (1-alpha) I + alpha diag(1 - rtilde^2) (W_in^y W_out + W)
    d r(i+1) / d p    = alpha diag(1 - rtilde^2) W_in^p diag(sigma_p)

The adjoint sweep propagates Lagrange multipliers backward from the terminal
condition and accumulates the gradient of the window-averaged objective in a
single pass; the tangent sweep propagates dr/dp forward, one column per
parameter.  Both are exact chain-rule evaluations of the same discrete map,
so they agree to rounding error.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DivergedAdjointError,
    DivergedTangentError,
    InconsistentTrajectoryError,
    NotTrainedError,
)
from .esn import EsnModel, closed_loop
from .objectives import ObjectiveSpec, SensitivityVector

RTILDE_TOL = 1e-9
DEFAULT_NORM_CAP = 1e8


@dataclass
class ReservoirTrajectory:
    """A recorded closed-loop run: states r(0..N) plus the regime it ran at."""

    states: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        if self.states.ndim != 2 or self.states.shape[0] < 2:
            raise ValueError("states must hold at least r(0) and r(1)")

    @property
    def n_steps(self) -> int:
        return self.states.shape[0] - 1


def record_closed_loop(model: EsnModel, r0, n_steps: int, p) -> ReservoirTrajectory:
    """Run the model autonomously and keep the base trajectory for sweeps."""
    _, states = closed_loop(model.mats, model.hyper, r0, n_steps, p)
    return ReservoirTrajectory(states=states, p=np.asarray(p, dtype=float))


def _rtilde(model: EsnModel, r_i, r_ip1):
    """tanh output reconstructed from consecutive states; must lie in [-1, 1]."""
    alpha = model.hyper.alpha
    rt = (np.asarray(r_ip1, dtype=float) - (1.0 - alpha) * np.asarray(r_i, dtype=float)) / alpha
    if np.max(np.abs(rt)) > 1.0 + RTILDE_TOL:
        raise InconsistentTrajectoryError(
            "states are not consecutive closed-loop iterates (|rtilde| > 1)"
        )
    return np.clip(rt, -1.0, 1.0)


def _objective_gradient_row(model: EsnModel, objective: ObjectiveSpec) -> np.ndarray:
    """d Jobj / d r for the physical output component, a constant row vector."""
    if model.mats.w_out is None:
        raise NotTrainedError("objective gradient requires a trained readout")
    c = objective.component
    if not 0 <= c < model.n_y:
        raise ValueError(f"objective component {c} out of range")
    return model.y_scale[c] * model.mats.w_out[c, :]


def esn_step_jacobian(model: EsnModel, r_i, r_ip1) -> np.ndarray:
    """Materialised closed-loop step Jacobian (for verification; the sweeps
    use matrix-free products instead)."""
    if model.mats.w_out is None:
        raise NotTrainedError("closed-loop Jacobian requires a trained readout")
    rt = _rtilde(model, r_i, r_ip1)
    alpha = model.hyper.alpha
    fb = model.mats.w_in_y @ model.mats.w_out + model.mats.w.toarray()
    return (1.0 - alpha) * np.eye(model.n_reservoir) + alpha * (
        (1.0 - rt**2)[:, None] * fb
    )


def esn_param_grad(model: EsnModel, r_i, r_ip1) -> np.ndarray:
    """Direct parameter gradient of one closed-loop step, shape (N_r, N_p)."""
    rt = _rtilde(model, r_i, r_ip1)
    alpha = model.hyper.alpha
    return alpha * (1.0 - rt**2)[:, None] * (
        model.mats.w_in_p * model.hyper.sigma_p_vec[None, :]
    )


def _jac_t_dot(model: EsnModel, rt, q, w_t):
    """(d r(i+1) / d r(i))^T q, batched over leading axes."""
    alpha = model.hyper.alpha
    u = alpha * (1.0 - rt**2) * q
    if u.ndim == 1:
        wu = w_t @ u
    else:
        wu = (w_t @ u.reshape(-1, u.shape[-1]).T).T.reshape(u.shape)
    return (1.0 - alpha) * q + wu + (u @ model.mats.w_in_y) @ model.mats.w_out


def _jac_dot(model: EsnModel, rt, v):
    """(d r(i+1) / d r(i)) v for v of shape (N_r, n_cols)."""
    alpha = model.hyper.alpha
    fb = model.mats.w @ v + model.mats.w_in_y @ (model.mats.w_out @ v)
    return (1.0 - alpha) * v + alpha * (1.0 - rt**2)[:, None] * fb


def _param_grad_t_dot(model: EsnModel, rt, q):
    """(d r(i) / d p)^T q, batched over leading axes."""
    alpha = model.hyper.alpha
    u = alpha * (1.0 - rt**2) * q
    return (u @ model.mats.w_in_p) * model.hyper.sigma_p_vec


def adjoint_sweep(
    model: EsnModel,
    traj: ReservoirTrajectory,
    objective: ObjectiveSpec = ObjectiveSpec(),
    norm_cap: float = DEFAULT_NORM_CAP,
):
    """Backward adjoint sweep over a recorded closed-loop window.

    Starts from q(N) = (1/N) dJobj/dr(N) and iterates
    q(i) = (1/N) dJobj/dr(i) + (dr(i+1)/dr(i))^T q(i+1); the gradient is
    sum_i q(i)^T dr(i)/dp.  Returns ``(SensitivityVector, q_trajectory)``
    with ``q_trajectory[i-1] = q(i)``.

    Raises :class:`DivergedAdjointError` when the adjoint max-norm exceeds
    ``norm_cap``, the expected behaviour for windows much longer than a
    Lyapunov time.
    """
    states = traj.states
    n = traj.n_steps
    g = _objective_gradient_row(model, objective) / n
    w_t = model.mats.w.T.tocsr()

    q = g.copy()
    q_traj = np.empty((n, model.n_reservoir))
    q_traj[n - 1] = q
    djdp = _param_grad_t_dot(model, _rtilde(model, states[n - 1], states[n]), q)
    for i in range(n - 1, 0, -1):
        rt_i = _rtilde(model, states[i], states[i + 1])
        q = g + _jac_t_dot(model, rt_i, q, w_t)
        qmax = np.max(np.abs(q))
        if not np.isfinite(qmax) or qmax > norm_cap:
            raise DivergedAdjointError(
                f"adjoint norm exceeded cap at step {i}", step=i,
                norm_ratio=qmax / np.max(np.abs(g)),
            )
        q_traj[i - 1] = q
        djdp += _param_grad_t_dot(model, _rtilde(model, states[i - 1], states[i]), q)
    sv = SensitivityVector(djdp=djdp, window_steps=n, method="adjoint")
    return sv, q_traj


def adjoint_sweep_batch(
    model: EsnModel,
    states,
    p,
    objective: ObjectiveSpec = ObjectiveSpec(),
    norm_cap: float = DEFAULT_NORM_CAP,
):
    """Adjoint sweeps for a batch of recorded windows in one pass.

    ``states`` has shape (N+1, B, N_r).  Returns ``(djdp, diverged)`` of
    shapes (B, N_p) and (B,); diverged members get NaN gradients instead of
    raising, so ensemble aggregation can exclude and count them.
    """
    states = np.asarray(states, dtype=float)
    n = states.shape[0] - 1
    batch = states.shape[1]
    g = _objective_gradient_row(model, objective) / n
    w_t = model.mats.w.T.tocsr()

    q = np.broadcast_to(g, (batch, model.n_reservoir)).copy()
    diverged = np.zeros(batch, dtype=bool)
    djdp = _param_grad_t_dot(model, _rtilde(model, states[n - 1], states[n]), q)
    for i in range(n - 1, 0, -1):
        rt_i = _rtilde(model, states[i], states[i + 1])
        q = g + _jac_t_dot(model, rt_i, q, w_t)
        qmax = np.max(np.abs(q), axis=-1)
        bad = ~np.isfinite(qmax) | (qmax > norm_cap)
        if np.any(bad):
            diverged |= bad
            q[bad] = 0.0
        djdp += _param_grad_t_dot(model, _rtilde(model, states[i - 1], states[i]), q)
    djdp[diverged] = np.nan
    return djdp, diverged


def tangent_sweep(
    model: EsnModel,
    traj: ReservoirTrajectory,
    objective: ObjectiveSpec = ObjectiveSpec(),
) -> SensitivityVector:
    """Forward tangent propagation of Q(i) = dr(i)/dp with Q(0) = 0.

    Column count grows with the number of parameters, which is what makes
    the adjoint attractive; kept as the duality oracle.
    """
    states = traj.states
    n = traj.n_steps
    g = _objective_gradient_row(model, objective)
    alpha = model.hyper.alpha
    wp_sigma = model.mats.w_in_p * model.hyper.sigma_p_vec[None, :]

    Q = np.zeros((model.n_reservoir, model.n_p))
    djdp = np.zeros(model.n_p)
    for i in range(n):
        rt = _rtilde(model, states[i], states[i + 1])
        Q = _jac_dot(model, rt, Q) + alpha * (1.0 - rt**2)[:, None] * wp_sigma
        if not np.all(np.isfinite(Q)):
            raise DivergedTangentError(f"tangent overflowed at step {i + 1}")
        djdp += g @ Q
    return SensitivityVector(djdp=djdp / n, window_steps=n, method="tangent")


def finite_diff_sensitivity(
    model: EsnModel,
    r0,
    p,
    n_steps: int,
    objective: ObjectiveSpec = ObjectiveSpec(),
    eps: float = 1e-5,
) -> SensitivityVector:
    """Central differences of the window-averaged objective over each
    parameter, re-running the closed loop from the identical initial
    reservoir state.

    The constant output offset is dropped from the objective evaluations;
    it cancels in the differences but would cost mantissa bits.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    p = np.asarray(p, dtype=float)
    c = objective.component
    scale = model.y_scale[c]
    djdp = np.empty(model.n_p)
    for j in range(model.n_p):
        delta = np.zeros_like(p)
        delta[j] = eps
        outs_hi, _ = closed_loop(model.mats, model.hyper, r0, n_steps, p + delta)
        outs_lo, _ = closed_loop(model.mats, model.hyper, r0, n_steps, p - delta)
        j_hi = scale * float(np.mean(outs_hi[:, c]))
        j_lo = scale * float(np.mean(outs_lo[:, c]))
        djdp[j] = (j_hi - j_lo) / (2.0 * eps)
    return SensitivityVector(djdp=djdp, window_steps=n_steps, method="finite-difference")
