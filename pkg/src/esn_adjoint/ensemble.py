"""Climate-sensitivity estimation by the ensemble adjoint method.

Gradients of the long-time average diverge with the window length in chaotic
regimes, so the climate sensitivity is estimated as the mean of many
short-window adjoint gradients started from independent points on the
attractor.  The same machinery runs against the true system (continuous
adjoint) and against a trained ESN (discrete adjoint), so the two estimates
are directly comparable; a polynomial fit through long-run objective values
provides the direct reference slope.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import lorenz
from .adjoint import adjoint_sweep_batch
from .errors import DivergedAttractorError, EsnAdjointError, UnreliableEstimateError
from .esn import EsnModel, closed_loop, long_term_stats
from .lorenz import LorenzParams, LorenzState
from .objectives import ObjectiveSpec
from .seeding import derive_int_seed, rng_for

PARAM_NAMES = ("s", "r", "b")


@dataclass(frozen=True)
class EnsembleConfig:
    """How one ensemble-adjoint estimate is computed.

    ``system`` selects the true-system or ESN branch; ``ic_mode`` picks how
    ESN members are initialized: ``"true_washout"`` (default) synchronizes
    the reservoir on a true-trajectory segment ending at each sampled
    attractor point, ``"self_sampled"`` draws reservoir states from a long
    closed-loop run of the model itself.
    """

    n_members: int
    window_lt: float
    seed: int
    system: str = "true"
    ic_mode: str = "true_washout"
    spacing_lt: float = 1.0
    washout_time: float = 4.0
    max_diverged_fraction: float = 0.2

    def __post_init__(self):
        if self.n_members < 2:
            raise ValueError("n_members must be at least 2")
        if self.window_lt <= 0:
            raise ValueError("window_lt must be positive")
        if self.system not in ("true", "esn"):
            raise ValueError("system must be 'true' or 'esn'")
        if self.ic_mode not in ("true_washout", "self_sampled"):
            raise ValueError("ic_mode must be 'true_washout' or 'self_sampled'")


@dataclass
class SensitivityEstimate:
    """Ensemble mean and standard error of the short-window gradients.

    ``members`` holds every member's gradient with NaN rows for diverged
    members, so ``n_used + n_diverged == n_members`` always holds.
    """

    mean: np.ndarray
    stderr: np.ndarray
    members: np.ndarray
    n_diverged: int
    method: str
    window_steps: int

    @property
    def n_members(self) -> int:
        return self.members.shape[0]

    @property
    def n_used(self) -> int:
        return self.n_members - self.n_diverged


def _aggregate(members, method, window_steps, max_diverged_fraction):
    diverged = ~np.all(np.isfinite(members), axis=1)
    used = members[~diverged]
    est = SensitivityEstimate(
        mean=used.mean(axis=0) if len(used) else np.full(members.shape[1], np.nan),
        stderr=(used.std(axis=0, ddof=1) / math.sqrt(len(used)))
        if len(used) > 1
        else np.full(members.shape[1], np.nan),
        members=members,
        n_diverged=int(diverged.sum()),
        method=method,
        window_steps=window_steps,
    )
    if est.n_diverged > max_diverged_fraction * est.n_members:
        raise UnreliableEstimateError(
            f"{est.n_diverged}/{est.n_members} ensemble members diverged",
            estimate=est,
        )
    return est


def ensemble_adjoint(
    regime: LorenzParams,
    config: EnsembleConfig,
    objective: ObjectiveSpec = ObjectiveSpec(),
    lt: float | None = None,
    dt: float = lorenz.DEFAULT_DT,
    model: EsnModel | None = None,
    ics=None,
    histories=None,
) -> SensitivityEstimate:
    """Mean short-window adjoint sensitivity over attractor initial conditions.

    ``lt`` is the regime's Lyapunov time (estimated when omitted); the
    member window is ``config.window_lt * lt``.  Precomputed attractor
    samples (and washout ``histories`` for the ESN branch) may be passed in
    so the true and ESN branches share identical members.
    """
    if lt is None:
        lt = lorenz.lyapunov_time(regime, seed=config.seed).lyapunov_time
    if not math.isfinite(lt):
        raise ValueError("regime is non-chaotic; ensemble windows need a finite LT")
    window = config.window_lt * lt
    n_win = max(1, int(round(window / dt)))

    if config.system == "true":
        if ics is None:
            ics, _ = lorenz._attractor_run(
                regime,
                config.n_members,
                config.spacing_lt * lt,
                derive_int_seed(config.seed, "ensemble-ics"),
                dt=dt,
            )
        members = np.full((len(ics), lorenz.N_PARAMS), np.nan)
        chunk = 1024
        for a in range(0, len(ics), chunk):
            part = ics[a : a + chunk]
            try:
                members[a : a + len(part)] = lorenz.window_sensitivity_batch(
                    regime, part, window, objective, dt=dt
                )
            except EsnAdjointError:
                pass  # whole-chunk failure: members stay NaN and are counted
        return _aggregate(members, "adjoint", n_win, config.max_diverged_fraction)

    if model is None:
        raise ValueError("the ESN branch requires a trained model")
    p = regime.as_array()
    if config.ic_mode == "true_washout":
        wash_steps = int(round(config.washout_time / dt))
        if ics is None or histories is None:
            ics, histories = lorenz._attractor_run(
                regime,
                config.n_members,
                config.spacing_lt * lt,
                derive_int_seed(config.seed, "ensemble-ics"),
                dt=dt,
                history_steps=wash_steps,
            )
        r0s = model.washout(np.swapaxes(histories, 0, 1), p)
    else:
        r0s = _self_sampled_states(model, regime, config, lt, dt)

    members = np.full((len(r0s), model.n_p), np.nan)
    chunk = 512
    for a in range(0, len(r0s), chunk):
        part = r0s[a : a + chunk]
        try:
            _, states = closed_loop(model.mats, model.hyper, part, n_win, p)
        except EsnAdjointError:
            continue
        grads, _ = adjoint_sweep_batch(model, states, p, objective)
        members[a : a + len(part)] = grads
    return _aggregate(members, "adjoint", n_win, config.max_diverged_fraction)


def _self_sampled_states(model, regime, config, lt, dt):
    """Reservoir states drawn from a long closed-loop run of the model,
    synchronized beforehand on a short true-system segment."""
    p = regime.as_array()
    wash_steps = int(round(config.washout_time / dt))
    _, hist = lorenz._attractor_run(
        regime, 1, lt, derive_int_seed(config.seed, "self-washout"),
        dt=dt, history_steps=wash_steps,
    )
    r = model.washout(hist[0], p)
    spacing = max(1, int(round(config.spacing_lt * lt / dt)))
    n_skip = int(round(20.0 / dt))
    n_run = spacing * config.n_members + n_skip
    _, states = closed_loop(model.mats, model.hyper, r, n_run, p)
    return states[n_skip::spacing][: config.n_members]


@dataclass
class SweepResult:
    """Long-run objective means over a one-parameter grid."""

    param_index: int
    grid: np.ndarray
    objective_means: np.ndarray
    valid: np.ndarray
    system: str

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.objective_means = np.asarray(self.objective_means, dtype=float)
        self.valid = np.asarray(self.valid, dtype=bool)
        if not np.all(np.diff(self.grid) > 0):
            raise ValueError("grid must be strictly increasing")

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())


def sweep_objective(
    regime_base: LorenzParams,
    param_index: int,
    grid,
    system: str = "true",
    duration_lt: float = 500.0,
    lt: float = 1.1,
    dt: float = lorenz.DEFAULT_DT,
    model: EsnModel | None = None,
    objective: ObjectiveSpec = ObjectiveSpec(),
    seed: int = 0,
    transient_time: float = lorenz.DEFAULT_TRANSIENT_TIME,
) -> SweepResult:
    """Long-run objective mean at each grid value of one parameter, the other
    two held at the base regime.

    The run covers ``duration_lt`` Lyapunov times of the base regime.  All
    true-system grid points integrate as one batch; diverged ESN points are
    flagged invalid rather than fatal, and the fit proceeds on the rest.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 1:
        raise ValueError("grid must be a non-empty 1-D array")
    n_run = int(round(duration_lt * lt / dt))
    means = np.full(len(grid), np.nan)
    valid = np.zeros(len(grid), dtype=bool)
    c = objective.component

    if system == "true":
        base = regime_base.as_array()
        svals = np.full(len(grid), base[0])
        rvals = np.full(len(grid), base[1])
        bvals = np.full(len(grid), base[2])
        [svals, rvals, bvals][param_index][:] = grid
        rng = rng_for(seed, "sweep-ic", param_index)
        x = rng.uniform(lorenz._IC_LOW, lorenz._IC_HIGH, size=(len(grid), 3))
        rhs = lambda u: lorenz._rhs(u, svals, rvals, bvals)
        for _ in range(int(round(transient_time / dt))):
            x = lorenz.rk4_step(rhs, x, dt)
        acc = np.zeros(len(grid))
        for _ in range(n_run):
            x = lorenz.rk4_step(rhs, x, dt)
            acc += x[:, c]
        means[:] = acc / n_run
        valid[:] = True
        return SweepResult(param_index, grid, means, valid, system)

    if model is None:
        raise ValueError("the ESN branch requires a trained model")
    wash_steps = int(round(4.0 / dt))
    for i, v in enumerate(grid):
        regime = regime_base.replace_component(param_index, float(v))
        _, hist = lorenz._attractor_run(
            regime, 1, lt, derive_int_seed(seed, "sweep-washout", param_index, i),
            dt=dt, history_steps=wash_steps,
        )
        try:
            stats = long_term_stats(
                model, regime.as_array(), duration_lt, hist[0], lt,
                transient_time=transient_time,
            )
        except (DivergedAttractorError, EsnAdjointError):
            continue
        means[i] = stats.mean[c]
        valid[i] = True
    return SweepResult(param_index, grid, means, valid, system)


@dataclass
class PolyFitResult:
    """Polynomial fit of the objective sweep and its analytic derivative."""

    poly: np.polynomial.Polynomial
    degree: int
    derivative_on_grid: np.ndarray

    def derivative(self, x):
        return self.poly.deriv()(np.asarray(x, dtype=float))


def polyfit_direct(sweep: SweepResult, degree: int = 2) -> PolyFitResult:
    """Least-squares polynomial through the valid sweep points; the direct
    sensitivity estimate is its analytic derivative on the grid."""
    if degree + 1 > sweep.n_valid:
        raise ValueError(
            f"degree-{degree} fit needs {degree + 1} points, "
            f"only {sweep.n_valid} valid"
        )
    x = sweep.grid[sweep.valid]
    y = sweep.objective_means[sweep.valid]
    poly = np.polynomial.Polynomial.fit(x, y, degree)
    return PolyFitResult(
        poly=poly, degree=degree, derivative_on_grid=poly.deriv()(sweep.grid)
    )


@dataclass
class ComparisonRow:
    """One line of the cross-method comparison table."""

    parameter: str
    method: str
    value: float
    stderr: float | None
    abs_diff: float
    rel_diff: float


def compare_estimates(
    true_est: SensitivityEstimate,
    esn_est: SensitivityEstimate | None = None,
    polyfit_slope: float | None = None,
    swept_param: int | None = None,
) -> list[ComparisonRow]:
    """Tabulate estimates against the true-adjoint ensemble mean.

    The polynomial-fit row exists only for the swept parameter, which is the
    only component a one-parameter sweep can differentiate.
    """
    rows = []
    for j, name in enumerate(PARAM_NAMES[: len(true_est.mean)]):
        base = float(true_est.mean[j])
        denom = abs(base) if base != 0 else 1.0
        rows.append(
            ComparisonRow(name, "true_adjoint", base, float(true_est.stderr[j]), 0.0, 0.0)
        )
        if esn_est is not None:
            v = float(esn_est.mean[j])
            rows.append(
                ComparisonRow(
                    name, "esn_adjoint", v, float(esn_est.stderr[j]),
                    abs(v - base), abs(v - base) / denom,
                )
            )
        if polyfit_slope is not None and swept_param == j:
            rows.append(
                ComparisonRow(
                    name, "polyfit", float(polyfit_slope), None,
                    abs(polyfit_slope - base), abs(polyfit_slope - base) / denom,
                )
            )
    return rows


def _fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def write_members_csv(path, rows) -> None:
    """``sensitivity_members.csv``: one row per ensemble member.

    Row tuples: (sweep_param, grid_value, system, member_index, djdp vector,
    diverged flag).
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["sweep_param", "grid_value", "system", "member",
             "djds", "djdr", "djdb", "diverged"]
        )
        for sweep_param, grid_value, system, idx, djdp, diverged in rows:
            w.writerow(
                [sweep_param, _fmt(grid_value), system, idx,
                 *(_fmt(v) if np.isfinite(v) else "" for v in djdp),
                 int(diverged)]
            )


def write_summary_csv(path, rows) -> None:
    """``sensitivity_summary.csv``: one row per (sweep point, system)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["sweep_param", "grid_value", "system", "window_steps",
             "mean_djds", "mean_djdr", "mean_djdb",
             "stderr_djds", "stderr_djdr", "stderr_djdb",
             "n_members", "n_diverged"]
        )
        for sweep_param, grid_value, system, est in rows:
            w.writerow(
                [sweep_param, _fmt(grid_value), system, est.window_steps,
                 *(_fmt(v) for v in est.mean), *(_fmt(v) for v in est.stderr),
                 est.n_members, est.n_diverged]
            )


def write_sweep_csv(path, rows) -> None:
    """``sweep.csv``: long-run objective means and fit values per grid point."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["sweep_param", "grid_value", "objective_true", "objective_esn",
             "polyfit_value", "polyfit_derivative"]
        )
        for sweep_param, grid_value, obj_true, obj_esn, fit_val, fit_der in rows:
            w.writerow(
                [sweep_param, _fmt(grid_value),
                 _fmt(obj_true) if obj_true is not None and np.isfinite(obj_true) else "",
                 _fmt(obj_esn) if obj_esn is not None and np.isfinite(obj_esn) else "",
                 _fmt(fit_val) if fit_val is not None else "",
                 _fmt(fit_der) if fit_der is not None else ""]
            )


def write_comparison_csv(path, rows) -> None:
    """``comparison.csv``: cross-method table, one row per (point, parameter,
    method)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["sweep_param", "grid_value", "parameter", "method", "value",
             "stderr", "abs_diff_vs_true", "rel_diff_vs_true"]
        )
        for sweep_param, grid_value, row in rows:
            w.writerow(
                [sweep_param, _fmt(grid_value), row.parameter, row.method,
                 _fmt(row.value), _fmt(row.stderr) if row.stderr is not None else "",
                 _fmt(row.abs_diff), _fmt(row.rel_diff)]
            )
