"""Parameter-aware echo state network.

The reservoir update is

    r(i+1) = (1 - alpha) r(i) + alpha tanh(W_in [y_in; sigma_p*(p - k_p)] + W r(i))

with a linear readout y = W_out r.  W_in and W are sparse, random and fixed;
only W_out is trained, by ridge regression over teacher-forced reservoir
states collected across all training regimes.

Internally the network runs on standardized outputs (per-component zero mean
and unit variance over the training data); :class:`EsnModel` converts at the
public boundary.  All stepping functions broadcast over leading batch axes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
import scipy.sparse as sparse
import scipy.sparse.linalg as splinalg

from .errors import (
    ConstructionError,
    DivergedAttractorError,
    IllConditionedTrainingError,
    IntegrationBlowupError,
    NotTrainedError,
    ShapeError,
)
from .seeding import rng_for

DIVERGE_THRESHOLD = 1e3  # on standardized outputs; tanh keeps r itself in [-1, 1]


@dataclass(frozen=True)
class EsnHyperParams:
    """All reservoir knobs.  ``sigma_p`` and ``k_p`` are per-parameter scale
    and shift applied to the physical parameter vector before it enters the
    input layer."""

    n_reservoir: int
    n_conn: int
    rho: float
    sigma_in: float
    alpha: float
    tikhonov: float
    sigma_p: tuple
    k_p: tuple
    seed: int = 0

    def __post_init__(self):
        if self.n_reservoir < 1:
            raise ValueError("n_reservoir must be at least 1")
        if not 1 <= self.n_conn <= self.n_reservoir:
            raise ValueError("n_conn must lie in [1, n_reservoir]")
        if not (self.rho > 0 and math.isfinite(self.rho)):
            raise ValueError("rho must be positive")
        if self.sigma_in < 0:
            raise ValueError("sigma_in must be non-negative")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.tikhonov < 0:
            raise ValueError("tikhonov must be non-negative")
        object.__setattr__(self, "sigma_p", tuple(float(v) for v in self.sigma_p))
        object.__setattr__(self, "k_p", tuple(float(v) for v in self.k_p))
        if len(self.sigma_p) != len(self.k_p):
            raise ValueError("sigma_p and k_p must have equal length")
        if any(v < 0 for v in self.sigma_p):
            raise ValueError("sigma_p entries must be non-negative")

    @property
    def n_params(self) -> int:
        return len(self.sigma_p)

    @property
    def sigma_p_vec(self) -> np.ndarray:
        return np.asarray(self.sigma_p, dtype=float)

    @property
    def k_p_vec(self) -> np.ndarray:
        return np.asarray(self.k_p, dtype=float)


@dataclass
class ReservoirMatrices:
    """Fixed random matrices plus the trained readout (``None`` until
    :func:`train` runs).  ``w_in_y`` and ``w_in_p`` are the output and
    parameter blocks of the input matrix."""

    w_in_y: np.ndarray
    w_in_p: np.ndarray
    w: sparse.csr_array
    w_out: np.ndarray | None = None

    @property
    def n_reservoir(self) -> int:
        return self.w.shape[0]

    @property
    def n_y(self) -> int:
        return self.w_in_y.shape[1]

    @property
    def n_p(self) -> int:
        return self.w_in_p.shape[1]


@dataclass
class RegimeDataset:
    """Teacher data for one parameter regime: a washout stretch followed by
    the training stretch, both in physical units."""

    regime: np.ndarray
    washout_series: np.ndarray
    train_series: np.ndarray
    dt: float
    lyapunov_time: float | None = None

    def __post_init__(self):
        self.regime = np.asarray(self.regime, dtype=float)
        self.washout_series = np.asarray(self.washout_series, dtype=float)
        self.train_series = np.asarray(self.train_series, dtype=float)
        if self.washout_series.ndim != 2 or self.train_series.ndim != 2:
            raise ShapeError("series must be 2-D (time, components)")
        if len(self.washout_series) == 0 or len(self.train_series) == 0:
            raise ValueError("washout and train series must be non-empty")
        if self.dt <= 0:
            raise ValueError("dt must be positive")


def spectral_radius(w, v0=None, tol: float = 1e-10, maxiter: int = 10_000) -> float:
    """Largest eigenvalue magnitude of a (sparse) matrix.

    Small matrices fall back to a dense eigendecomposition; otherwise ARPACK
    iterates from the deterministic start vector ``v0``.
    """
    n = w.shape[0]
    if n <= 2:
        return float(np.max(np.abs(np.linalg.eigvals(np.asarray(w.todense())))))
    if v0 is None:
        v0 = np.ones(n)
    try:
        vals = splinalg.eigs(
            w, k=1, which="LM", v0=v0, tol=tol, maxiter=maxiter,
            return_eigenvectors=False,
        )
    except (splinalg.ArpackNoConvergence, splinalg.ArpackError) as err:
        raise ConstructionError(f"spectral radius estimation failed: {err}") from err
    return float(np.abs(vals[0]))


def build_reservoir(hyper: EsnHyperParams, n_y: int, n_p: int) -> ReservoirMatrices:
    """Draw the fixed random matrices.

    Each row of W has exactly ``n_conn`` uniform(-1, 1) entries and the whole
    matrix is rescaled to spectral radius ``rho``; each row of W_in has one
    uniform(-sigma_in, sigma_in) entry at a column drawn over all n_y + n_p
    input positions.  Deterministic for a fixed ``hyper.seed``.
    """
    if n_p != hyper.n_params:
        raise ShapeError(
            f"hyper carries {hyper.n_params} parameter channels, got n_p={n_p}"
        )
    n_r = hyper.n_reservoir
    rng = rng_for(hyper.seed, "reservoir")

    rows = np.repeat(np.arange(n_r), hyper.n_conn)
    cols = np.concatenate(
        [rng.choice(n_r, size=hyper.n_conn, replace=False) for _ in range(n_r)]
    )
    vals = rng.uniform(-1.0, 1.0, size=n_r * hyper.n_conn)
    w_raw = sparse.csr_array(
        sparse.coo_array((vals, (rows, cols)), shape=(n_r, n_r))
    )

    in_cols = rng.integers(0, n_y + n_p, size=n_r)
    in_vals = rng.uniform(-hyper.sigma_in, hyper.sigma_in, size=n_r)
    v0 = rng.standard_normal(n_r)

    radius = spectral_radius(w_raw, v0=v0)
    if radius < 1e-12:
        raise ConstructionError("raw reservoir matrix has (near-)zero spectral radius")
    w = w_raw * (hyper.rho / radius)

    w_in_y = np.zeros((n_r, n_y))
    w_in_p = np.zeros((n_r, n_p))
    y_rows = in_cols < n_y
    w_in_y[y_rows, in_cols[y_rows]] = in_vals[y_rows]
    w_in_p[~y_rows, in_cols[~y_rows] - n_y] = in_vals[~y_rows]
    return ReservoirMatrices(w_in_y=w_in_y, w_in_p=w_in_p, w=w)


def param_channel(p, hyper: EsnHyperParams) -> np.ndarray:
    """The shifted and scaled parameter block sigma_p * (p - k_p)."""
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != hyper.n_params:
        raise ShapeError(f"expected {hyper.n_params} parameters, got {p.shape[-1]}")
    return hyper.sigma_p_vec * (p - hyper.k_p_vec)


def augment_input(y_in, p, hyper: EsnHyperParams) -> np.ndarray:
    """Concatenate the output-space input with the parameter block."""
    y_in = np.asarray(y_in, dtype=float)
    pin = param_channel(p, hyper)
    batch = np.broadcast_shapes(y_in.shape[:-1], pin.shape[:-1])
    y_b = np.broadcast_to(y_in, batch + y_in.shape[-1:])
    p_b = np.broadcast_to(pin, batch + pin.shape[-1:])
    return np.concatenate([y_b, p_b], axis=-1)


def _wdot(w, r):
    """W @ r for r of shape (..., N_r)."""
    if r.ndim == 1:
        return w @ r
    return (w @ r.reshape(-1, r.shape[-1]).T).T.reshape(r.shape)


def esn_step(mats: ReservoirMatrices, hyper: EsnHyperParams, r, y_in, p) -> np.ndarray:
    """One reservoir update; broadcasts over leading batch axes of ``r`` and
    ``y_in`` (the regime ``p`` may also carry a batch axis)."""
    r = np.asarray(r, dtype=float)
    y_in = np.asarray(y_in, dtype=float)
    if y_in.shape[-1] != mats.n_y:
        raise ShapeError(f"expected {mats.n_y} input components, got {y_in.shape[-1]}")
    pin = param_channel(p, hyper)
    arg = y_in @ mats.w_in_y.T + pin @ mats.w_in_p.T + _wdot(mats.w, r)
    out = (1.0 - hyper.alpha) * r + hyper.alpha * np.tanh(arg)
    if not np.all(np.isfinite(out)):
        raise IntegrationBlowupError("non-finite reservoir state")
    return out


def readout(mats: ReservoirMatrices, r) -> np.ndarray:
    """Linear readout W_out r; requires a trained readout."""
    if mats.w_out is None:
        raise NotTrainedError("readout requested before training")
    return np.asarray(r, dtype=float) @ mats.w_out.T


def open_loop(mats: ReservoirMatrices, hyper: EsnHyperParams, r0, y_seq, p) -> np.ndarray:
    """Teacher-forced evolution: feed the true sequence, return r(1..N).

    ``y_seq`` has shape (N, n_y) or (N, batch, n_y) with matching ``r0``.
    """
    y_seq = np.asarray(y_seq, dtype=float)
    if len(y_seq) == 0:
        raise ValueError("y_seq must be non-empty")
    r = np.asarray(r0, dtype=float)
    states = np.empty((len(y_seq),) + r.shape)
    for i in range(len(y_seq)):
        r = esn_step(mats, hyper, r, y_seq[i], p)
        states[i] = r
    return states


def closed_loop(
    mats: ReservoirMatrices,
    hyper: EsnHyperParams,
    r0,
    n_steps: int,
    p,
    diverge_threshold: float = DIVERGE_THRESHOLD,
):
    """Autonomous evolution feeding the readout back as the input.

    Returns ``(outputs, states)`` where ``outputs[i] = W_out states[i+1]``
    and ``states`` includes ``r0``, as needed by the adjoint sweeps.
    """
    if mats.w_out is None:
        raise NotTrainedError("closed loop requires a trained readout")
    if n_steps < 0:
        raise ValueError("n_steps must be non-negative")
    r = np.asarray(r0, dtype=float)
    states = np.empty((n_steps + 1,) + r.shape)
    outputs = np.empty((n_steps,) + r.shape[:-1] + (mats.n_y,))
    states[0] = r
    for i in range(n_steps):
        y_fb = r @ mats.w_out.T
        if np.max(np.abs(y_fb)) > diverge_threshold:
            raise IntegrationBlowupError(
                f"closed-loop output diverged at step {i}", step=i
            )
        r = esn_step(mats, hyper, r, y_fb, p)
        states[i + 1] = r
        outputs[i] = r @ mats.w_out.T
    return outputs, states


def _closed_loop_outputs(
    mats, hyper, r0, n_steps, p, diverge_threshold=DIVERGE_THRESHOLD
):
    """Closed loop keeping only outputs and the final state (long runs)."""
    if mats.w_out is None:
        raise NotTrainedError("closed loop requires a trained readout")
    r = np.asarray(r0, dtype=float)
    outputs = np.empty((n_steps,) + r.shape[:-1] + (mats.n_y,))
    for i in range(n_steps):
        y_fb = r @ mats.w_out.T
        if np.max(np.abs(y_fb)) > diverge_threshold:
            raise IntegrationBlowupError(
                f"closed-loop output diverged at step {i}", step=i
            )
        r = esn_step(mats, hyper, r, y_fb, p)
        outputs[i] = r @ mats.w_out.T
    return outputs, r


@dataclass
class EsnModel:
    """A trained parameter-aware ESN plus its output normalization.

    ``y_mean``/``y_scale`` map physical outputs to the standardized space the
    network runs in; the readout and all recorded reservoir trajectories live
    in that space.
    """

    hyper: EsnHyperParams
    mats: ReservoirMatrices
    dt: float
    y_mean: np.ndarray
    y_scale: np.ndarray

    @property
    def n_y(self) -> int:
        return self.mats.n_y

    @property
    def n_p(self) -> int:
        return self.mats.n_p

    @property
    def n_reservoir(self) -> int:
        return self.mats.n_reservoir

    def standardize(self, y):
        return (np.asarray(y, dtype=float) - self.y_mean) / self.y_scale

    def unstandardize(self, y):
        return np.asarray(y, dtype=float) * self.y_scale + self.y_mean

    def washout(self, y_phys_seq, p) -> np.ndarray:
        """Teacher-forced synchronisation from the zero state; returns the
        final reservoir state (batched when ``y_phys_seq`` is (N, B, n_y))."""
        y_std = self.standardize(y_phys_seq)
        batch_shape = y_std.shape[1:-1]
        r0 = np.zeros(batch_shape + (self.n_reservoir,))
        states = open_loop(self.mats, self.hyper, r0, y_std, p)
        return states[-1]

    def predict(self, r0, n_steps: int, p):
        """Closed-loop forecast; returns physical outputs and the reservoir
        trajectory (standardized space)."""
        outputs, states = closed_loop(self.mats, self.hyper, r0, n_steps, p)
        return self.unstandardize(outputs), states

    def predict_outputs(self, r0, n_steps: int, p):
        """Closed-loop forecast keeping outputs only (memory-light)."""
        outputs, r_final = _closed_loop_outputs(self.mats, self.hyper, r0, n_steps, p)
        return self.unstandardize(outputs), r_final

    def readout_phys(self, r):
        return self.unstandardize(readout(self.mats, r))


def train(
    mats: ReservoirMatrices,
    hyper: EsnHyperParams,
    datasets: list[RegimeDataset],
) -> EsnModel:
    """Ridge-regression training over all regimes.

    Per regime: standardize, washout open-loop from zero, then collect the
    teacher-forced reservoir states against next-step targets.  The readout
    solves (S^T S + tikhonov I) W_out^T = S^T Y over the pooled collection.
    """
    if not datasets:
        raise ValueError("at least one training regime is required")
    dt = datasets[0].dt
    n_y = datasets[0].train_series.shape[1]
    for ds in datasets:
        if ds.dt != dt:
            raise ValueError("datasets must share a common dt")
        if ds.train_series.shape[1] != n_y or ds.washout_series.shape[1] != n_y:
            raise ShapeError("datasets must share output dimension")

    pooled = np.concatenate([ds.train_series for ds in datasets], axis=0)
    y_mean = pooled.mean(axis=0)
    y_std = pooled.std(axis=0)
    y_scale = np.where(y_std > 0, y_std, 1.0)

    n_r = hyper.n_reservoir
    state_blocks = []
    target_blocks = []
    if len({(len(ds.washout_series), len(ds.train_series)) for ds in datasets}) == 1:
        # equal lengths: evolve every regime in one batch
        wash = np.stack([(ds.washout_series - y_mean) / y_scale for ds in datasets], axis=1)
        trn = np.stack([(ds.train_series - y_mean) / y_scale for ds in datasets], axis=1)
        p = np.stack([ds.regime for ds in datasets], axis=0)
        r = np.zeros((len(datasets), n_r))
        r = open_loop(mats, hyper, r, wash, p)[-1]
        states = open_loop(mats, hyper, r, trn[:-1], p)
        state_blocks.append(states.reshape(-1, n_r))
        target_blocks.append(trn[1:].reshape(-1, n_y))
    else:
        for ds in datasets:
            wash = (ds.washout_series - y_mean) / y_scale
            trn = (ds.train_series - y_mean) / y_scale
            r = open_loop(mats, hyper, np.zeros(n_r), wash, ds.regime)[-1]
            states = open_loop(mats, hyper, r, trn[:-1], ds.regime)
            state_blocks.append(states)
            target_blocks.append(trn[1:])

    S = np.concatenate(state_blocks, axis=0)
    Y = np.concatenate(target_blocks, axis=0)
    gram = S.T @ S + hyper.tikhonov * np.eye(n_r)
    rhs = S.T @ Y
    try:
        factor = scipy.linalg.cho_factor(gram)
        w_out_t = scipy.linalg.cho_solve(factor, rhs)
    except np.linalg.LinAlgError as err:
        if hyper.tikhonov == 0:
            raise IllConditionedTrainingError(
                "normal matrix is singular with tikhonov=0; use a positive regularizer"
            ) from err
        w_out_t = _clipped_solve(gram, rhs)

    trained = replace(mats, w_out=w_out_t.T)
    return EsnModel(hyper=hyper, mats=trained, dt=dt, y_mean=y_mean, y_scale=y_scale)


def _clipped_solve(gram, rhs):
    """Eigenvalue-clipped pseudo-solve used when Cholesky fails."""
    vals, vecs = np.linalg.eigh(gram)
    floor = max(vals.max(), 0.0) * 1e-14
    vals = np.maximum(vals, floor)
    return vecs @ ((vecs.T @ rhs) / vals[:, None])


def predictability_horizon(
    model: EsnModel,
    p,
    truth,
    lt: float,
    threshold: float = 0.5,
    washout_time: float = 4.0,
) -> float:
    """First time, in Lyapunov times, at which the normalized closed-loop
    forecast error exceeds ``threshold``.

    ``truth`` is one physical trajectory array (T, n_y) sampled at the model
    dt, or a list of them (the mean horizon is returned).  The first
    ``washout_time`` time units synchronize the reservoir; the forecast is
    scored against the remainder, with the error normalized by the
    time-averaged signal norm.
    """
    if isinstance(truth, (list, tuple)):
        return float(
            np.mean(
                [
                    predictability_horizon(model, p, t, lt, threshold, washout_time)
                    for t in truth
                ]
            )
        )
    truth = np.asarray(truth, dtype=float)
    w_steps = int(round(washout_time / model.dt))
    if truth.shape[0] <= w_steps + 1:
        raise ValueError("truth trajectory shorter than the washout stretch")
    r = model.washout(truth[:w_steps], p)
    n_pred = truth.shape[0] - w_steps
    pred, _ = model.predict_outputs(r, n_pred, p)
    target = truth[w_steps:]
    norm = math.sqrt(float(np.mean(np.sum(target**2, axis=-1))))
    err = np.linalg.norm(pred - target, axis=-1) / norm
    above = np.nonzero(err > threshold)[0]
    steps = int(above[0]) + 1 if len(above) else n_pred
    return steps * model.dt / lt


@dataclass
class LongTermStats:
    """Summary statistics of a long closed-loop run, per output component."""

    mean: np.ndarray
    std: np.ndarray
    bin_edges: list
    masses: list
    n_steps: int

    def histogram(self, component: int):
        return self.bin_edges[component], self.masses[component]


def long_term_stats(
    model: EsnModel,
    p,
    duration_lt: float,
    r_init,
    lt: float,
    transient_time: float = 20.0,
    n_bins: int = 50,
    washout_time: float = 4.0,
) -> LongTermStats:
    """Mean, standard deviation and normalized histograms of the outputs over
    a closed-loop run of ``duration_lt`` Lyapunov times.

    ``r_init`` seeds the reservoir: a 2-D array is a teacher-forced washout
    segment (physical units); a 1-D array is one initial condition fed
    repeatedly for ``washout_time`` time units.  An initial transient of the
    closed-loop run is discarded before statistics are taken.
    """
    if duration_lt <= 0:
        raise ValueError("duration_lt must be positive")
    r_init = np.asarray(r_init, dtype=float)
    if r_init.ndim == 1:
        r_init = np.broadcast_to(
            r_init, (int(round(washout_time / model.dt)), model.n_y)
        )
    r = model.washout(r_init, p)
    n_transient = int(round(transient_time / model.dt))
    n_stats = int(round(duration_lt * lt / model.dt))
    if n_stats < 1:
        raise ValueError("duration_lt too short to cover a single step")
    try:
        _, r = _closed_loop_outputs(model.mats, model.hyper, r, n_transient, p)
        outputs, _ = _closed_loop_outputs(model.mats, model.hyper, r, n_stats, p)
    except IntegrationBlowupError as err:
        raise DivergedAttractorError(
            f"closed-loop run left the attractor: {err}"
        ) from err
    phys = model.unstandardize(outputs)
    mean = phys.mean(axis=0)
    std = phys.std(axis=0)
    edges, masses = [], []
    for c in range(phys.shape[1]):
        counts, bins = np.histogram(phys[:, c], bins=n_bins)
        edges.append(bins)
        masses.append(counts / counts.sum())
    return LongTermStats(mean=mean, std=std, bin_edges=edges, masses=masses, n_steps=n_stats)
