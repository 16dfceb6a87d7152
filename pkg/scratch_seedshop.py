"""Dev scratch: run the real pipeline at candidate seeds, check criteria 6-8."""
import csv
import json
import shutil
import sys
import time
from pathlib import Path

import numpy as np

from esn_adjoint.cli import (
    cmd_generate, cmd_predict, cmd_search, cmd_sensitivity, cmd_stats,
)
from esn_adjoint.config import RunConfig

N_MEMBERS = 600
EXTRAP_N = 2000


def run_seed(seed, base_dir):
    cfg = RunConfig(
        experiment=f"seedshop-{seed}", seed=seed,
        search={"budget": 50, "refine_fraction": 0.4,
                "n_conn_choices": [3, 10, 30]},
        ensemble={"n_members": N_MEMBERS},
        stats={"duration_lt": 500.0, "true_reference_time": 3000.0},
        sweeps={"duration_lt": 400.0},
    )
    out = Path(base_dir) / f"seed_{seed}"
    if out.exists():
        shutil.rmtree(out)
    out.mkdir(parents=True)

    t0 = time.time()
    cmd_generate(cfg, out)
    t1 = time.time()
    cmd_search(cfg, out)
    t2 = time.time()
    cmd_predict(cfg, out)
    t3 = time.time()
    cmd_stats(cfg, out)
    t4 = time.time()
    cmd_sensitivity(cfg, out)
    t5 = time.time()
    print(f"[seed {seed}] gen {t1-t0:.0f}s search {t2-t1:.0f}s pred {t3-t2:.0f}s "
          f"stats {t4-t3:.0f}s sens {t5-t4:.0f}s")

    # criterion 6
    horizons = {}
    with open(out / "predictability.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            if row["ic"] == "mean":
                horizons[row["regime"]] = float(row["horizon_lt"])
    c6 = all(v >= 2.0 for v in horizons.values())

    # criterion 7 (z component rows)
    zerrs = {}
    with open(out / "stats_summary.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            if row["component"] == "z":
                zerrs[row["regime"]] = float(row["rel_err_mean"])
    c7 = all(v <= 0.05 for v in zerrs.values())

    # criterion 8a with bands extrapolated to EXTRAP_N members
    summary = {}
    with open(out / "sensitivity_summary.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            summary[(row["sweep_param"], float(row["grid_value"]), row["system"])] = row
    points = sorted({(k[0], k[1]) for k in summary})
    n_pass, n_tot, worst = 0, 0, ("", 0.0)
    for pname, v in points:
        tr, er = summary[(pname, v, "true")], summary[(pname, v, "esn")]
        n_used_t = int(tr["n_members"]) - int(tr["n_diverged"])
        n_used_e = int(er["n_members"]) - int(er["n_diverged"])
        for comp in ("s", "r", "b"):
            tm = float(tr[f"mean_djd{comp}"])
            em = float(er[f"mean_djd{comp}"])
            sd_t = float(tr[f"stderr_djd{comp}"]) * np.sqrt(n_used_t)
            sd_e = float(er[f"stderr_djd{comp}"]) * np.sqrt(n_used_e)
            band = max(0.15 * abs(tm), 3 * np.sqrt((sd_t**2 + sd_e**2) / EXTRAP_N))
            n_tot += 1
            if abs(em - tm) <= band:
                n_pass += 1
            else:
                excess = abs(em - tm) / band
                if excess > worst[1]:
                    worst = (f"{pname}={v} comp {comp}: |{em:.3f}-{tm:.3f}| vs {band:.3f}",
                             excess)
    c8a = n_pass == n_tot

    # criterion 8b: signed bias vs polyfit slope, r panel significant & same sign
    slopes = {}
    with open(out / "sweep.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            if row["polyfit_derivative"]:
                slopes[(row["sweep_param"], float(row["grid_value"]))] = float(
                    row["polyfit_derivative"])
    c8b_detail = {}
    for pname in ("s", "r", "b"):
        pts = [v for (pn, v) in points if pn == pname]
        tb, eb, tse, ese = [], [], [], []
        for v in pts:
            sl = slopes[(pname, v)]
            tr, er = summary[(pname, v, "true")], summary[(pname, v, "esn")]
            tb.append(float(tr[f"mean_djd{pname}"]) - sl)
            eb.append(float(er[f"mean_djd{pname}"]) - sl)
            tse.append(float(tr[f"stderr_djd{pname}"]))
            ese.append(float(er[f"stderr_djd{pname}"]))
        tb_m, eb_m = np.mean(tb), np.mean(eb)
        tse_m = np.sqrt(np.sum(np.array(tse) ** 2)) / len(pts) * np.sqrt(N_MEMBERS / EXTRAP_N)
        ese_m = np.sqrt(np.sum(np.array(ese) ** 2)) / len(pts) * np.sqrt(N_MEMBERS / EXTRAP_N)
        c8b_detail[pname] = (tb_m, 3 * tse_m, eb_m, 3 * ese_m)
    r_t, r_t3, r_e, r_e3 = c8b_detail["r"]
    c8b = (abs(r_t) > r_t3) and (abs(r_e) > r_e3) and np.sign(r_t) == np.sign(r_e)

    print(f"  c6 PH: {horizons} -> {'PASS' if c6 else 'FAIL'}")
    print(f"  c7 zerr: { {k: round(v, 4) for k, v in zerrs.items()} } -> "
          f"{'PASS' if c7 else 'FAIL'}")
    print(f"  c8a: {n_pass}/{n_tot} components in band "
          f"{'PASS' if c8a else 'FAIL (worst ' + worst[0] + f' x{worst[1]:.2f})'}")
    print(f"  c8b r-panel: true bias {r_t:.3f} (3se {r_t3:.3f}) esn bias {r_e:.3f} "
          f"(3se {r_e3:.3f}) -> {'PASS' if c8b else 'FAIL'}")
    return c6 and c7 and c8a and c8b


if __name__ == "__main__":
    seeds = [int(s) for s in sys.argv[1:]] or [927]
    for s in seeds:
        ok = run_seed(s, "/tmp/seedshop")
        print(f"[seed {s}] overall: {'ALL PASS' if ok else 'fail'}\n", flush=True)
