"""Command-line pipeline: generate, train, search, predict, stats,
sensitivity, compare.

Every verb takes ``--config <path>`` and ``--out <dir>``; commands build on
each other's outputs inside the same directory and append to its manifest.
``ESN_ADJOINT_SEED`` overrides the config seed; ``ESN_ADJOINT_THREADS``
caps BLAS thread pools (set before heavy imports).
"""
from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path


def main(argv=None) -> int:
    threads = os.environ.get("ESN_ADJOINT_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)

    parser = argparse.ArgumentParser(
        prog="esn-adjoint",
        description="Parameter-aware ESN pipeline for chaotic dynamics and "
        "adjoint climate sensitivities",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", required=True, help="output directory")
    args = parser.parse_args(argv)

    from .config import load_config
    from .errors import EsnAdjointError

    config = load_config(args.config)
    seed_override = os.environ.get("ESN_ADJOINT_SEED")
    if seed_override:
        config.seed = int(seed_override)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        COMMANDS[args.command](config, out_dir)
    except EsnAdjointError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


def _fmt(x) -> str:
    return repr(float(x))


def _regime_tag(p) -> str:
    return f"s{p[0]:g}_r{p[1]:g}_b{p[2]:g}"


CHAOS_LAMBDA_MIN = 0.05  # exponents below this flag a regime as non-chaotic


def _choose_regimes(config):
    import itertools

    import numpy as np

    from .seeding import rng_for

    grid = list(
        itertools.product(config.grid["s"], config.grid["r"], config.grid["b"])
    )
    n = config.n_train + config.n_validation
    if n > len(grid):
        raise ValueError(f"cannot draw {n} regimes from a grid of {len(grid)}")
    rng = rng_for(config.seed, "regime-choice")
    idx = rng.choice(len(grid), size=n, replace=False)
    return [tuple(float(v) for v in grid[i]) for i in idx]


def cmd_generate(config, out_dir: Path):
    """Simulate the training/validation regimes and write the dataset files."""
    import numpy as np

    from .config import Manifest
    from .lorenz import (
        IntegrationConfig, LorenzParams, LorenzState, lyapunov_time_grid, simulate,
    )
    from .seeding import rng_for

    regimes = _choose_regimes(config)
    params = [LorenzParams(*p) for p in regimes]
    estimates = lyapunov_time_grid(
        params,
        dt=config.dt,
        horizon_time=config.lyapunov_horizon,
        transient_time=config.transient_time,
        seed=config.seed,
    )

    data_dir = out_dir / "datasets"
    data_dir.mkdir(exist_ok=True)
    wash_steps = int(round(config.washout_time / config.dt))
    train_steps = int(round(config.train_time / config.dt))
    outputs = []

    index_path = data_dir / "regimes.csv"
    with open(index_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["index", "role", "s", "r", "b", "lambda_max", "lyapunov_time",
             "chaotic", "file"]
        )
        for k, (p, est) in enumerate(zip(params, estimates)):
            role = "train" if k < config.n_train else "validation"
            cfg = IntegrationConfig(
                dt=config.dt,
                n_steps=wash_steps + train_steps,
                transient_steps=int(round(config.transient_time / config.dt)),
            )
            ic = LorenzState.from_array(
                rng_for(config.seed, "data-ic", k).uniform([-15, -15, 5], [15, 15, 35])
            )
            traj = simulate(p, ic, cfg)
            fname = f"regime_{k:02d}.csv"
            with open(data_dir / fname, "w", newline="") as dfh:
                dw = csv.writer(dfh)
                dw.writerow(["t", "x", "y", "z", "phase"])
                for i, (t, row) in enumerate(zip(traj.times, traj.states)):
                    phase = "washout" if i < wash_steps else "train"
                    dw.writerow([_fmt(t), *(_fmt(v) for v in row), phase])
            outputs.append(data_dir / fname)
            chaotic = est.lambda_max > CHAOS_LAMBDA_MIN
            w.writerow(
                [k, role, _fmt(p.s), _fmt(p.r), _fmt(p.b), _fmt(est.lambda_max),
                 _fmt(est.lyapunov_time) if np.isfinite(est.lyapunov_time) else "inf",
                 int(chaotic), fname]
            )
    outputs.append(index_path)
    Manifest(out_dir, config).record("generate", outputs)


def _load_datasets(config, out_dir: Path):
    import numpy as np

    from .esn import RegimeDataset

    data_dir = out_dir / "datasets"
    index_path = data_dir / "regimes.csv"
    if not index_path.exists():
        raise FileNotFoundError(f"{index_path} missing; run `generate` first")
    wash_steps = int(round(config.washout_time / config.dt))
    train_sets, val_sets = [], []
    with open(index_path, newline="") as fh:
        for row in csv.DictReader(fh):
            arr = np.loadtxt(
                data_dir / row["file"], delimiter=",", skiprows=1,
                usecols=(1, 2, 3),
            )
            lt = float(row["lyapunov_time"]) if row["lyapunov_time"] != "inf" else None
            ds = RegimeDataset(
                regime=np.array([float(row["s"]), float(row["r"]), float(row["b"])]),
                washout_series=arr[:wash_steps],
                train_series=arr[wash_steps:],
                dt=config.dt,
                lyapunov_time=lt if int(row["chaotic"]) else None,
            )
            (train_sets if row["role"] == "train" else val_sets).append(ds)
    return train_sets, val_sets


def cmd_train(config, out_dir: Path):
    """Train a model with the explicit hyperparameters in the config."""
    from .config import Manifest
    from .esn import EsnHyperParams, build_reservoir, train
    from .hyperopt import validation_score
    from .serialization import save_model

    if not config.esn:
        raise ValueError("config has no `esn` block; use `search` instead")
    train_data, val_data = _load_datasets(config, out_dir)
    block = dict(config.esn)
    block["sigma_p"] = tuple(block["sigma_p"])
    block["k_p"] = tuple(block["k_p"])
    hyper = EsnHyperParams(**block)
    mats = build_reservoir(hyper, train_data[0].train_series.shape[1], hyper.n_params)
    model = train(mats, hyper, train_data)
    model_path = save_model(model, out_dir / "model.esn")

    report = validation_score(
        hyper, train_data, val_data, realisation_seeds=(hyper.seed,)
    )
    report_path = out_dir / "validation_report.csv"
    with open(report_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["regime", "loss", "score"])
        for i, loss in enumerate(report.errors[0]):
            w.writerow([i, _fmt(loss), ""])
        w.writerow(["aggregate", "", _fmt(report.score)])
    Manifest(out_dir, config).record(
        "train", [model_path, model_path.with_suffix(".esn.json"), report_path]
    )


def cmd_search(config, out_dir: Path):
    """Run the hyperparameter search and train the winner."""
    from .config import Manifest
    from .esn import build_reservoir, train
    from .hyperopt import search, write_history_csv
    from .serialization import save_model

    train_data, val_data = _load_datasets(config, out_dir)
    space = config.search_space()
    winner, history = search(space, train_data, val_data, seed=config.seed)
    history_path = out_dir / "search_history.csv"
    write_history_csv(history, history_path)
    mats = build_reservoir(winner, train_data[0].train_series.shape[1], winner.n_params)
    model = train(mats, winner, train_data)
    model_path = save_model(model, out_dir / "model.esn")
    Manifest(out_dir, config).record(
        "search", [history_path, model_path, model_path.with_suffix(".esn.json")]
    )


def _load_model(out_dir: Path):
    from .serialization import load_model

    model_path = out_dir / "model.esn"
    if not model_path.exists():
        raise FileNotFoundError(f"{model_path} missing; run `search` or `train` first")
    return load_model(model_path)


def _regime_lts(config, params_list):
    from .lorenz import lyapunov_time_grid

    return lyapunov_time_grid(
        params_list,
        dt=config.dt,
        horizon_time=config.lyapunov_horizon,
        transient_time=config.transient_time,
        seed=config.seed,
    )


def cmd_predict(config, out_dir: Path):
    """Predictability horizons plus forecast-vs-truth series for plotting."""
    import numpy as np

    from .config import Manifest
    from .esn import predictability_horizon
    from .lorenz import (
        IntegrationConfig, LorenzParams, LorenzState, _attractor_run, simulate,
    )
    from .seeding import derive_int_seed

    model = _load_model(out_dir)
    pred = config.prediction
    wash_steps = int(round(config.washout_time / config.dt))
    outputs = []
    horizon_rows = []
    all_params = [LorenzParams(*v) for v in pred["regimes"]]
    all_ests = _regime_lts(config, all_params)
    for ri, regime_vals in enumerate(pred["regimes"]):
        params = all_params[ri]
        est = all_ests[ri]
        lt = est.lyapunov_time if est.lambda_max > CHAOS_LAMBDA_MIN else 1.0
        n_pred = int(round(pred["max_horizon_lt"] * lt / config.dt))
        ics, _ = _attractor_run(
            params,
            pred["n_initial_conditions"],
            max(lt, 1.0),
            derive_int_seed(config.seed, "prediction-ics", ri),
            dt=config.dt,
            transient_time=config.transient_time,
        )
        truths = [
            simulate(params, LorenzState.from_array(ic),
                     IntegrationConfig(dt=config.dt, n_steps=wash_steps + n_pred)).states
            for ic in ics
        ]
        horizons = [
            predictability_horizon(
                model, params.as_array(), t, lt,
                threshold=pred["threshold"], washout_time=config.washout_time,
            )
            for t in truths
        ]
        tag = _regime_tag(regime_vals)
        for i, h in enumerate(horizons):
            horizon_rows.append([tag, *(_fmt(v) for v in regime_vals), i, _fmt(h)])
        horizon_rows.append(
            [tag, *(_fmt(v) for v in regime_vals), "mean", _fmt(np.mean(horizons))]
        )
        # forecast series for the first initial condition (plot data)
        truth = truths[0]
        r = model.washout(truth[:wash_steps], params.as_array())
        forecast, _ = model.predict_outputs(r, n_pred, params.as_array())
        series_path = out_dir / f"prediction_{tag}.csv"
        with open(series_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_lt", "x_true", "y_true", "z_true", "x_esn", "y_esn", "z_esn"])
            for i in range(n_pred):
                w.writerow(
                    [_fmt((i + 1) * config.dt / lt),
                     *(_fmt(v) for v in truth[wash_steps + i]),
                     *(_fmt(v) for v in forecast[i])]
                )
        outputs.append(series_path)

    horizons_path = out_dir / "predictability.csv"
    with open(horizons_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["regime", "s", "r", "b", "ic", "horizon_lt"])
        w.writerows(horizon_rows)
    outputs.append(horizons_path)
    Manifest(out_dir, config).record("predict", outputs)


def _stats_regimes(config, out_dir: Path):
    from .lorenz import LorenzParams

    chosen = config.stats["regimes"]
    if chosen is not None:
        return [LorenzParams(*v) for v in chosen]
    regimes = [LorenzParams(*config.prediction["regimes"][0])]
    _, val_sets = _load_datasets(config, out_dir)
    regimes.extend(LorenzParams.from_array(ds.regime) for ds in val_sets[:3])
    return regimes


def cmd_stats(config, out_dir: Path):
    """Long-term ESN statistics vs true-system statistics, plus histograms."""
    import numpy as np

    from .config import Manifest
    from .esn import long_term_stats
    from .lorenz import _attractor_run, _rhs, rk4_step, _IC_LOW, _IC_HIGH
    from .objectives import COMPONENT_NAMES
    from .seeding import derive_int_seed, rng_for

    model = _load_model(out_dir)
    regimes = _stats_regimes(config, out_dir)
    st = config.stats
    wash_steps = int(round(config.washout_time / config.dt))

    # true references, one batched integration across regimes
    svals = np.array([p.s for p in regimes])
    rvals = np.array([p.r for p in regimes])
    bvals = np.array([p.b for p in regimes])
    rng = rng_for(config.seed, "stats-true-ic")
    x = rng.uniform(_IC_LOW, _IC_HIGH, size=(len(regimes), 3))
    rhs = lambda u: _rhs(u, svals, rvals, bvals)
    for _ in range(int(round(config.transient_time / config.dt))):
        x = rk4_step(rhs, x, config.dt)
    n_ref = int(round(st["true_reference_time"] / config.dt))
    acc = np.zeros((len(regimes), 3))
    acc2 = np.zeros((len(regimes), 3))
    true_samples = [[] for _ in regimes]
    for i in range(n_ref):
        x = rk4_step(rhs, x, config.dt)
        acc += x
        acc2 += x**2
        if i % 10 == 0:
            for j in range(len(regimes)):
                true_samples[j].append(x[j].copy())
    true_mean = acc / n_ref
    true_std = np.sqrt(np.maximum(acc2 / n_ref - true_mean**2, 0.0))

    outputs = []
    ests = _regime_lts(config, regimes)
    summary_path = out_dir / "stats_summary.csv"
    with open(summary_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["regime", "s", "r", "b", "component", "esn_mean", "esn_std",
             "true_mean", "true_std", "rel_err_mean"]
        )
        for j, params in enumerate(regimes):
            est = ests[j]
            lt = est.lyapunov_time if est.lambda_max > CHAOS_LAMBDA_MIN else 1.0
            _, hist = _attractor_run(
                params, 1, lt, derive_int_seed(config.seed, "stats-washout", j),
                dt=config.dt, transient_time=config.transient_time,
                history_steps=wash_steps,
            )
            stats = long_term_stats(
                model, params.as_array(), st["duration_lt"], hist[0], lt,
                transient_time=config.transient_time, n_bins=st["n_bins"],
            )
            tag = _regime_tag(params.as_array())
            for c in range(3):
                w.writerow(
                    [tag, _fmt(params.s), _fmt(params.r), _fmt(params.b),
                     COMPONENT_NAMES[c], _fmt(stats.mean[c]), _fmt(stats.std[c]),
                     _fmt(true_mean[j, c]), _fmt(true_std[j, c]),
                     _fmt(abs(stats.mean[c] - true_mean[j, c]) / abs(true_mean[j, c]))]
                )
            samples = np.array(true_samples[j])
            for c in range(3):
                edges, masses = stats.histogram(c)
                t_counts, _ = np.histogram(samples[:, c], bins=edges)
                t_masses = t_counts / max(t_counts.sum(), 1)
                hist_path = out_dir / f"hist_{tag}_{COMPONENT_NAMES[c]}.csv"
                with open(hist_path, "w", newline="") as hfh:
                    hw = csv.writer(hfh)
                    hw.writerow(["bin_left", "bin_right", "esn_mass", "true_mass"])
                    for b in range(len(masses)):
                        hw.writerow(
                            [_fmt(edges[b]), _fmt(edges[b + 1]),
                             _fmt(masses[b]), _fmt(t_masses[b])]
                        )
                outputs.append(hist_path)
    outputs.append(summary_path)
    Manifest(out_dir, config).record("stats", outputs)


def cmd_sensitivity(config, out_dir: Path):
    """Ensemble-adjoint sensitivities (true and ESN) over the sweep grids,
    plus long-run objective sweeps and their polynomial fits."""
    import numpy as np

    from .config import Manifest
    from .ensemble import (
        PARAM_NAMES, EnsembleConfig, ensemble_adjoint, polyfit_direct,
        sweep_objective, write_members_csv, write_summary_csv, write_sweep_csv,
    )
    from .lorenz import LorenzParams, _attractor_run, lyapunov_time_grid
    from .seeding import derive_int_seed

    model = _load_model(out_dir)
    sw = config.sweeps
    ens = config.ensemble
    base = LorenzParams(*sw["base_regime"])
    grids = sw["grids"] or config.grid
    base_est = _regime_lts(config, [base])[0]
    base_lt = base_est.lyapunov_time if base_est.lambda_max > CHAOS_LAMBDA_MIN else 1.0
    wash_steps = int(round(config.washout_time / config.dt))

    member_rows, summary_rows, sweep_rows = [], [], []
    for pi, pname in enumerate(PARAM_NAMES):
        grid = [float(v) for v in grids[pname]]
        point_regimes = [base.replace_component(pi, v) for v in grid]
        ests = lyapunov_time_grid(
            point_regimes, dt=config.dt, horizon_time=config.lyapunov_horizon,
            transient_time=config.transient_time, seed=config.seed,
        )
        lts = [
            e.lyapunov_time if e.lambda_max > CHAOS_LAMBDA_MIN else base_lt
            for e in ests
        ]
        for gi, (v, regime, lt) in enumerate(zip(grid, point_regimes, lts)):
            ens_seed = derive_int_seed(config.seed, "ensemble", pi, gi)
            ics, histories = _attractor_run(
                regime, ens["n_members"], ens["spacing_lt"] * lt, ens_seed,
                dt=config.dt, transient_time=config.transient_time,
                history_steps=wash_steps,
            )
            cfg_true = EnsembleConfig(
                n_members=ens["n_members"], window_lt=ens["window_lt"],
                seed=ens_seed, system="true",
            )
            true_est = ensemble_adjoint(
                regime, cfg_true, lt=lt, dt=config.dt, ics=ics
            )
            cfg_esn = EnsembleConfig(
                n_members=ens["n_members"], window_lt=ens["window_lt"],
                seed=ens_seed, system="esn", ic_mode=ens["ic_mode"],
                washout_time=config.washout_time,
            )
            esn_est = ensemble_adjoint(
                regime, cfg_esn, lt=lt, dt=config.dt, model=model,
                ics=ics, histories=histories,
            )
            for system, est in (("true", true_est), ("esn", esn_est)):
                summary_rows.append((pname, v, system, est))
                for mi in range(est.n_members):
                    member_rows.append(
                        (pname, v, system, mi, est.members[mi],
                         not np.all(np.isfinite(est.members[mi])))
                    )

        sweep_true = sweep_objective(
            base, pi, grid, system="true", duration_lt=sw["duration_lt"],
            lt=base_lt, dt=config.dt,
            seed=derive_int_seed(config.seed, "sweep-true", pi),
            transient_time=config.transient_time,
        )
        sweep_esn = sweep_objective(
            base, pi, grid, system="esn", duration_lt=sw["duration_lt"],
            lt=base_lt, dt=config.dt, model=model,
            seed=derive_int_seed(config.seed, "sweep-esn", pi),
            transient_time=config.transient_time,
        )
        fit = polyfit_direct(sweep_true, sw["degree"])
        for gi, v in enumerate(grid):
            sweep_rows.append(
                (pname, v, sweep_true.objective_means[gi],
                 sweep_esn.objective_means[gi], fit.poly(v),
                 fit.derivative_on_grid[gi])
            )

    members_path = out_dir / "sensitivity_members.csv"
    summary_path = out_dir / "sensitivity_summary.csv"
    sweep_path = out_dir / "sweep.csv"
    write_members_csv(members_path, member_rows)
    write_summary_csv(summary_path, summary_rows)
    write_sweep_csv(sweep_path, sweep_rows)
    Manifest(out_dir, config).record(
        "sensitivity", [members_path, summary_path, sweep_path]
    )


def cmd_compare(config, out_dir: Path):
    """Cross-method comparison table from the sensitivity outputs."""
    import numpy as np

    from .config import Manifest
    from .ensemble import ComparisonRow, write_comparison_csv

    summary_path = out_dir / "sensitivity_summary.csv"
    sweep_path = out_dir / "sweep.csv"
    if not summary_path.exists() or not sweep_path.exists():
        raise FileNotFoundError("run `sensitivity` before `compare`")

    estimates = {}
    with open(summary_path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["sweep_param"], float(row["grid_value"]), row["system"])
            estimates[key] = row
    slopes = {}
    with open(sweep_path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["polyfit_derivative"]:
                slopes[(row["sweep_param"], float(row["grid_value"]))] = float(
                    row["polyfit_derivative"]
                )

    from .ensemble import PARAM_NAMES

    rows = []
    points = sorted({(k[0], k[1]) for k in estimates}, key=lambda t: (t[0], t[1]))
    for pname, v in points:
        true_row = estimates.get((pname, v, "true"))
        esn_row = estimates.get((pname, v, "esn"))
        if true_row is None:
            continue
        for j, comp in enumerate(PARAM_NAMES):
            base = float(true_row[f"mean_djd{comp}"])
            denom = abs(base) if base != 0 else 1.0
            rows.append(
                (pname, v, ComparisonRow(
                    comp, "true_adjoint", base,
                    float(true_row[f"stderr_djd{comp}"]), 0.0, 0.0))
            )
            if esn_row is not None:
                val = float(esn_row[f"mean_djd{comp}"])
                rows.append(
                    (pname, v, ComparisonRow(
                        comp, "esn_adjoint", val,
                        float(esn_row[f"stderr_djd{comp}"]),
                        abs(val - base), abs(val - base) / denom))
                )
            if comp == pname and (pname, v) in slopes:
                slope = slopes[(pname, v)]
                rows.append(
                    (pname, v, ComparisonRow(
                        comp, "polyfit", slope, None,
                        abs(slope - base), abs(slope - base) / denom))
                )

    comparison_path = out_dir / "comparison.csv"
    write_comparison_csv(comparison_path, rows)
    Manifest(out_dir, config).record("compare", [comparison_path])


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "search": cmd_search,
    "predict": cmd_predict,
    "stats": cmd_stats,
    "sensitivity": cmd_sensitivity,
    "compare": cmd_compare,
}


if __name__ == "__main__":
    sys.exit(main())
