"""Command line interface.

Subcommands: ``simulate`` (grid recovery study), ``fit`` (mortality surface
from cumulative reports), ``benchmark`` (scattered Gaussian regression),
``predict`` (Dirichlet-Multinomial rescaling of a saved fit), and ``meta``
(resurgence meta-regression with a counterfactual vaccination scenario).
Exit codes: 0 on success, 2 on validation or data errors, 3 on numerical
failures.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from pathlib import Path

import numpy as np

from .config import ensure_outdir, load_config, output_header
from .data import (
    align_calibration,
    difference_weekly,
    estimate_eta,
    load_cdc_csv,
    load_jhu_csv,
    load_vaccination_csv,
    resurgence_start,
)
from .errors import DataError, NumericalError, ValidationError
from .hmc import HmcConfig, diagnostics, sample
from .meta import AGE_CLASSES, MetaRegression, counterfactual_project, relative_deaths
from .mortality import AgeGrid, CalibrationSeries, MortalityModel, predictive_rescale
from .priors import make_prior
from .splines import eval_basis
from .surface_fit import (
    CountGridTarget,
    GaussianScatterTarget,
    simulate_count_grid,
    train_test_split_cells,
)

PRIOR_KINDS = ("projected-gp", "gp2d", "bsplines", "psplines")


def _write_csv(path: Path, header: str, fieldnames: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(header)
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)


def _hmc_config(cfg: dict, seed: int) -> HmcConfig:
    m = cfg["mcmc"]
    return HmcConfig(
        chains=int(m["chains"]),
        iterations=int(m["iters"]),
        warmup=int(m["warmup"]),
        seed=seed,
        leapfrog_steps=int(m["leapfrog"]),
        max_leapfrog=int(m["max_leapfrog"]),
    )


def _thin(flat: np.ndarray, n: int) -> np.ndarray:
    if flat.shape[0] <= n:
        return flat
    idx = np.linspace(0, flat.shape[0] - 1, n).round().astype(int)
    return flat[idx]


# ------------------------------------------------------------------- simulate


def cmd_simulate(args) -> int:
    cfg = load_config(
        args.config,
        {
            "mcmc.seed": args.seed,
            "prior.knots_rows": args.knots_age,
            "prior.knots_cols": args.knots_week,
        },
    )
    sim = cfg["simulate"]
    seed = int(cfg["mcmc"]["seed"])
    out = ensure_outdir(args.out)
    rng = np.random.default_rng(seed)

    grid_size = int(sim["grid_size"])
    pts, true_mean, counts = simulate_count_grid(
        grid_size, float(sim["gamma"]), float(sim["nu"]), rng
    )
    train = train_test_split_cells(grid_size, float(sim["train_fraction"]), rng)
    obs_rows, obs_cols = np.nonzero(train)
    y = counts[obs_rows, obs_cols]

    methods = [
        ("projected-gp", int(sim["knots"])),
        ("bsplines", int(sim["compare_knots"])),
        ("psplines", int(sim["compare_knots"])),
        ("gp2d", 0),
    ]
    report_rows, runtime_rows = [], []
    for kind, knots in methods:
        prior = make_prior(kind, pts, pts, knots_rows=max(knots, 2), knots_cols=max(knots, 2))
        target = CountGridTarget(prior, obs_rows, obs_cols, y)
        t0 = time.perf_counter()
        draws = sample(target, _hmc_config(cfg, seed))
        kept = _thin(draws.flat(), 100)
        post_mean = np.mean([target.mean_surface(x) for x in kept], axis=0)
        elapsed = time.perf_counter() - t0
        diag = draws.diagnostics()
        mse = float(np.mean((post_mean[~train] - true_mean[~train]) ** 2))
        report_rows.append(
            {
                "method": kind,
                "knots": knots,
                "mse": f"{mse:.10g}",
                "rhat_max": f"{np.max(diag['rhat']):.6g}",
                "ess_min": f"{np.min(diag['ess']):.6g}",
                "divergences": int(draws.divergences.sum()),
            }
        )
        runtime_rows.append({"method": kind, "seconds": f"{elapsed:.3f}"})

    header = output_header(cfg, seed)
    _write_csv(out / "report.csv", header,
               ["method", "knots", "mse", "rhat_max", "ess_min", "divergences"], report_rows)
    # runtimes are machine-dependent, so they live outside the deterministic report
    _write_csv(out / "runtimes.csv", header, ["method", "seconds"], runtime_rows)
    return 0


# ------------------------------------------------------------------------ fit


def _parse_band(label: str) -> tuple[int, int]:
    label = label.strip()
    if label.endswith("+"):
        return int(label[:-1]), 105
    if "-" in label:
        lo, hi = label.split("-", 1)
        return int(lo), int(hi)
    return int(label), int(label)


def _grid_from_labels(labels: list[str], n_weeks: int) -> tuple[AgeGrid, list[str]]:
    bands = sorted(labels, key=lambda lb: _parse_band(lb)[0])
    edges = [_parse_band(lb) for lb in bands]
    max_age = edges[-1][1]
    members = tuple(np.arange(lo, hi + 1) for lo, hi in edges)
    grid = AgeGrid(
        ages=np.arange(max_age + 1),
        n_weeks=n_weeks,
        band_labels=tuple(bands),
        band_members=members,
    )
    return grid, bands


def cmd_fit(args) -> int:
    cfg = load_config(
        args.config,
        {
            "mcmc.seed": args.seed,
            "prior.kind": args.prior,
            "prior.knots_rows": args.knots_age,
            "prior.knots_cols": args.knots_week,
        },
    )
    seed = int(cfg["mcmc"]["seed"])
    out = ensure_outdir(args.out)
    state = args.state
    if state is None:
        raise ValidationError("fit requires --state")

    reports, dates = load_cdc_csv(cfg["fit"]["cdc"])
    labels = [band for (st, band) in reports if st == state]
    if not labels:
        raise DataError(f"no cumulative reports for state {state!r}")
    n_weeks = len(dates) - 1
    grid, bands = _grid_from_labels(labels, n_weeks)
    series = [difference_weekly(reports[(state, band)]) for band in bands]
    for s in series:
        for w in s.warnings:
            print(f"warning: {s.band}: {w}", file=sys.stderr)

    totals = np.zeros(n_weeks)
    for s in series:
        for w, d in s.retrievable:
            totals[w - 1] += d
    eta = estimate_eta(totals)

    prior = make_prior(
        cfg["prior"]["kind"],
        grid.ages.astype(float),
        np.arange(1.0, n_weeks + 1.0),
        knots_rows=int(cfg["prior"]["knots_rows"]),
        knots_cols=int(cfg["prior"]["knots_cols"]),
        degree=int(cfg["prior"]["degree"]),
    )
    model = MortalityModel(
        grid, series, prior, eta,
        gamma_sd_factor=float(cfg["lambda_prior"]["sd_factor"]),
    )
    draws = sample(model, _hmc_config(cfg, seed))
    diag = diagnostics(draws)
    kept = _thin(draws.flat(), int(cfg["fit"]["retained_draws"]))
    alpha = np.stack([model.constrain(x)["alpha_age"] for x in kept])

    jhu = load_jhu_csv(cfg["fit"]["jhu"])
    if state not in jhu:
        raise DataError(f"no calibration deaths for state {state!r}")
    calib = CalibrationSeries(align_calibration(jhu[state], dates[:-1]))
    rng = np.random.default_rng([seed, 2])
    d_star = predictive_rescale(alpha, calib, rng)

    header = output_header(cfg, seed)
    q = np.quantile(d_star, [0.025, 0.5, 0.975], axis=0)
    rows = [
        {
            "age": int(grid.ages[a]),
            "week": w + 1,
            "q2.5": f"{q[0, a, w]:.10g}",
            "q50": f"{q[1, a, w]:.10g}",
            "q97.5": f"{q[2, a, w]:.10g}",
        }
        for a in range(grid.n_ages)
        for w in range(n_weeks)
    ]
    _write_csv(out / f"fit_{state}.csv", header, ["age", "week", "q2.5", "q50", "q97.5"], rows)

    diag_rows = [
        {"parameter": f"x{i}", "rhat": f"{diag['rhat'][i]:.6g}", "ess": f"{diag['ess'][i]:.6g}"}
        for i in range(len(diag["rhat"]))
    ]
    _write_csv(out / f"diagnostics_{state}.csv", header, ["parameter", "rhat", "ess"], diag_rows)

    np.savez(
        out / f"alpha_{state}.npz",
        alpha=alpha,
        ages=grid.ages,
        week_dates=np.array([d.isoformat() for d in dates[:-1]]),
        seed=seed,
    )

    # class-level posterior-mean trajectories for the meta-regression
    if grid.ages.max() >= 65:
        mu_star = d_star.mean(axis=0)  # ages x weeks
        class_members = {
            "18-64": (grid.ages >= 18) & (grid.ages <= 64),
            "65+": grid.ages >= 65,
        }
        rows = [
            {
                "state": state,
                "age_class": cls,
                "week": w + 1,
                "mu_star": f"{mu_star[sel, w].sum():.10g}",
            }
            for cls, sel in class_members.items()
            for w in range(n_weeks)
        ]
        _write_csv(out / f"mu_star_{state}.csv", header,
                   ["state", "age_class", "week", "mu_star"], rows)
    return 0


# -------------------------------------------------------------------- predict


def cmd_predict(args) -> int:
    cfg = load_config(args.config, {"mcmc.seed": args.seed})
    seed = int(cfg["mcmc"]["seed"])
    out = ensure_outdir(args.out)
    state = args.state
    if state is None:
        raise ValidationError("predict requires --state")

    artifact = Path(cfg["predict"]["alpha"])
    if not artifact.exists():
        raise DataError(f"fit artifact {artifact} does not exist")
    saved = np.load(artifact, allow_pickle=False)
    alpha, ages = saved["alpha"], saved["ages"]
    import datetime

    week_dates = [datetime.date.fromisoformat(s) for s in saved["week_dates"]]

    jhu = load_jhu_csv(cfg["predict"]["jhu"])
    if state not in jhu:
        raise DataError(f"no calibration deaths for state {state!r}")
    calib = CalibrationSeries(align_calibration(jhu[state], week_dates))
    rng = np.random.default_rng([seed, 3])
    d_star = predictive_rescale(alpha, calib, rng)

    header = output_header(cfg, seed)
    q = np.quantile(d_star, [0.025, 0.5, 0.975], axis=0)
    rows = [
        {
            "age": int(ages[a]),
            "week": w + 1,
            "q2.5": f"{q[0, a, w]:.10g}",
            "q50": f"{q[1, a, w]:.10g}",
            "q97.5": f"{q[2, a, w]:.10g}",
        }
        for a in range(ages.size)
        for w in range(len(week_dates))
    ]
    _write_csv(out / f"predict_{state}.csv", header,
               ["age", "week", "q2.5", "q50", "q97.5"], rows)
    return 0


# ------------------------------------------------------------------ benchmark


def cmd_benchmark(args) -> int:
    cfg = load_config(
        args.config,
        {
            "mcmc.seed": args.seed,
            "prior.kind": args.prior,
            "prior.knots_rows": args.knots_age,
            "prior.knots_cols": args.knots_week,
        },
    )
    seed = int(cfg["mcmc"]["seed"])
    out = ensure_outdir(args.out)
    bench = cfg["benchmark"]

    with open(bench["data"], newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["x", "y", "value"]:
            raise DataError(f"{bench['data']}: expected columns x,y,value")
        rows = [(float(r["x"]), float(r["y"]), float(r["value"])) for r in reader]
    data = np.asarray(rows)
    n_train, n_test = int(bench["train_n"]), int(bench["test_n"])
    if data.shape[0] < n_train + n_test:
        raise DataError(
            f"need at least {n_train + n_test} rows, found {data.shape[0]}"
        )
    rng = np.random.default_rng(seed)
    perm = rng.permutation(data.shape[0])
    train, test = data[perm[:n_train]], data[perm[n_train : n_train + n_test]]

    kind = cfg["prior"]["kind"]
    if kind == "gp2d":
        raise ValidationError("the scattered benchmark needs a spline prior")
    knots = int(bench["knots"])
    domain_x = np.array([data[:, 0].min(), data[:, 0].max()])
    domain_y = np.array([data[:, 1].min(), data[:, 1].max()])
    prior = make_prior(kind, domain_x, domain_y, knots_rows=knots, knots_cols=knots,
                       degree=int(cfg["prior"]["degree"]))
    Bx = eval_basis(prior.basis_rows.knots, train[:, 0])
    By = eval_basis(prior.basis_cols.knots, train[:, 1])
    target = GaussianScatterTarget(prior, Bx, By, train[:, 2])

    t0 = time.perf_counter()
    draws = sample(target, _hmc_config(cfg, seed))
    elapsed = time.perf_counter() - t0
    diag = draws.diagnostics()

    Bx_test = eval_basis(prior.basis_rows.knots, test[:, 0])
    By_test = eval_basis(prior.basis_cols.knots, test[:, 1])
    kept = _thin(draws.flat(), 200)
    preds = np.mean([target.surface_at(x, Bx_test, By_test) for x in kept], axis=0)
    mse = float(np.mean((preds - test[:, 2]) ** 2))

    header = output_header(cfg, seed)
    _write_csv(
        out / "benchmark.csv", header,
        ["method", "knots", "train_n", "test_n", "mse", "rhat_max", "ess_min"],
        [{
            "method": kind,
            "knots": knots,
            "train_n": n_train,
            "test_n": n_test,
            "mse": f"{mse:.10g}",
            "rhat_max": f"{np.max(diag['rhat']):.6g}",
            "ess_min": f"{np.min(diag['ess']):.6g}",
        }],
    )
    _write_csv(out / "benchmark_runtime.csv", header, ["method", "seconds"],
               [{"method": kind, "seconds": f"{elapsed:.3f}"}])
    return 0


# ----------------------------------------------------------------------- meta


def _read_mu_star(path) -> dict:
    with open(path, newline="") as fh:
        reader = csv.DictReader(
            line for line in fh if not line.startswith("#")
        )
        if reader.fieldnames != ["state", "age_class", "week", "mu_star"]:
            raise DataError(f"{path}: expected columns state,age_class,week,mu_star")
        table: dict = {}
        for r in reader:
            key = (r["state"], r["age_class"])
            table.setdefault(key, []).append((int(r["week"]), float(r["mu_star"])))
    out = {}
    for key, pairs in table.items():
        pairs.sort()
        out[key] = np.array([v for _, v in pairs])
    return out


def cmd_meta(args) -> int:
    cfg = load_config(args.config, {"mcmc.seed": args.seed})
    seed = int(cfg["mcmc"]["seed"])
    out = ensure_outdir(args.out)
    meta_cfg = cfg["meta"]

    mu_star = _read_mu_star(meta_cfg["mu_star"])
    jhu = load_jhu_csv(meta_cfg["jhu"])
    vacc = load_vaccination_csv(meta_cfg["vaccination"])
    states = sorted({s for (s, _) in mu_star})
    search_from = int(meta_cfg["search_from"])

    data, vacc_pre, pre_max = [], {}, {}
    for state in states:
        if state not in jhu:
            raise DataError(f"no all-age deaths for state {state!r}")
        deaths = np.array([v for _, v in sorted(jhu[state].items())], dtype=float)
        w_start = resurgence_start(deaths, search_from)
        if w_start is None:
            print(f"warning: no resurgence found for {state}; skipped", file=sys.stderr)
            continue
        for cls in AGE_CLASSES:
            key = (state, cls)
            if key not in mu_star:
                raise DataError(f"no trajectory for {key}")
            if key not in vacc:
                raise DataError(f"no vaccination series for {key}")
            series = mu_star[key]
            w_start_c = min(w_start, series.size)
            rd = relative_deaths(series, w_start_c, state=state, age_class=cls)
            data.append(rd)
            pre_max[key] = float(series[: w_start_c - 1].max())
            # coverage 14 days (two reporting weeks) before the resurgence start
            rates = vacc[key].rates
            vacc_pre[key] = float(rates[min(max(w_start_c - 3, 0), rates.size - 1)])
    if not data:
        raise DataError("no usable resurgence trajectories")

    model = MetaRegression(data, vacc_pre, gamma_convention=meta_cfg["gamma_convention"])
    draws = sample(model, _hmc_config(cfg, seed), names=model.parameter_names())
    diag = draws.diagnostics()
    flat = draws.flat()

    header = output_header(cfg, seed)
    q = np.quantile(flat, [0.025, 0.5, 0.975], axis=0)
    forest_rows = [
        {
            "parameter": name,
            "q2.5": f"{q[0, i]:.10g}",
            "q50": f"{q[1, i]:.10g}",
            "q97.5": f"{q[2, i]:.10g}",
            "rhat": f"{diag['rhat'][i]:.6g}",
            "ess": f"{diag['ess'][i]:.6g}",
        }
        for i, name in enumerate(model.parameter_names())
    ]
    _write_csv(out / "forest.csv", header,
               ["parameter", "q2.5", "q50", "q97.5", "rhat", "ess"], forest_rows)

    scenario_rate = float(meta_cfg.get("scenario_rate", 0.9))
    kept = _thin(flat, 200)
    summary = counterfactual_project(model, kept, pre_max, scenario_rate)
    cf_rows = [
        {
            "state": state,
            "age_class": cls,
            "scenario_rate": f"{scenario_rate:g}",
            "avoided_median": f"{s['avoided_median']:.10g}",
            "avoided_lo95": f"{s['avoided_lo95']:.10g}",
            "avoided_hi95": f"{s['avoided_hi95']:.10g}",
            "pct_median": f"{s['pct_median']:.10g}",
            "pct_lo95": f"{s['pct_lo95']:.10g}",
            "pct_hi95": f"{s['pct_hi95']:.10g}",
        }
        for (state, cls), s in sorted(summary.items())
    ]
    _write_csv(
        out / "counterfactual.csv", header,
        ["state", "age_class", "scenario_rate", "avoided_median", "avoided_lo95",
         "avoided_hi95", "pct_median", "pct_lo95", "pct_hi95"],
        cf_rows,
    )
    return 0


# ----------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bsgp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in [
        ("simulate", cmd_simulate),
        ("fit", cmd_fit),
        ("benchmark", cmd_benchmark),
        ("predict", cmd_predict),
        ("meta", cmd_meta),
    ]:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="TOML configuration file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default="out")
        p.add_argument("--state", default=None)
        p.add_argument("--prior", choices=PRIOR_KINDS, default=None)
        p.add_argument("--knots-age", type=int, default=None)
        p.add_argument("--knots-week", type=int, default=None)
        p.set_defaults(fn=fn)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValidationError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
