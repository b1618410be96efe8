"""Command line interface: subcommands, exit codes, output contracts."""

import csv
import datetime

import numpy as np
import pytest

from bsgp.cli import main
from bsgp.config import config_hash, load_config


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


@pytest.fixture(scope="module")
def fixtures(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    rng = np.random.default_rng(7)
    W = 14
    dates = [datetime.date(2021, 1, 4) + datetime.timedelta(weeks=i) for i in range(W + 1)]
    bands = [("0-17", 15), ("18-64", 40), ("65-105", 60)]
    cdc_rows, jhu_rows, vacc_rows = [], [], []
    for state in ("AA", "BB"):
        for band, lam in bands:
            weekly = rng.poisson(lam, size=W)
            weekly[7:] += rng.poisson(lam // 2, size=W - 7)
            cum = np.concatenate([[0], np.cumsum(weekly)])
            for i, d in enumerate(dates):
                v = int(cum[i])
                cdc_rows.append([state, d.isoformat(), band, "" if 0 < v <= 9 else str(v)])
        deaths = rng.poisson(120, size=W)
        deaths[7:] += rng.poisson(60, size=W - 7)
        for i in range(W):
            jhu_rows.append([state, dates[i].isoformat(), int(deaths[i])])
        for cls, start in (("18-64", 0.1), ("65+", 0.3)):
            rates = np.minimum(start + 0.04 * np.arange(W), 0.95)
            for i in range(W):
                vacc_rows.append([state, dates[i].isoformat(), cls, f"{rates[i]:.3f}"])
    _write_rows(root / "cdc.csv", ["state", "week_start_date", "age_band", "cum_deaths"], cdc_rows)
    _write_rows(root / "jhu.csv", ["state", "week_start_date", "deaths"], jhu_rows)
    _write_rows(root / "vaccination.csv",
                ["state", "week_start_date", "age_class", "rate"], vacc_rows)
    return root


def _fit_config(fixtures, path):
    path.write_text(
        f"""
[mcmc]
chains = 2
iters = 200
warmup = 100

[prior]
knots_rows = 4
knots_cols = 4

[fit]
cdc = "{fixtures / 'cdc.csv'}"
jhu = "{fixtures / 'jhu.csv'}"
retained_draws = 50
"""
    )
    return str(path)


class TestConfig:
    def test_flag_overrides_file(self, tmp_path):
        p = tmp_path / "c.toml"
        p.write_text("[mcmc]\nseed = 5\n")
        cfg = load_config(str(p), {"mcmc.seed": 9})
        assert cfg["mcmc"]["seed"] == 9

    def test_hash_is_stable_and_sensitive(self, tmp_path):
        cfg = load_config(None, {})
        assert config_hash(cfg) == config_hash(load_config(None, {}))
        assert config_hash(cfg) != config_hash(load_config(None, {"mcmc.seed": 99}))


class TestFit:
    def test_fit_writes_outputs_and_is_deterministic(self, fixtures, tmp_path):
        cfg = _fit_config(fixtures, tmp_path / "fit.toml")
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert main(["fit", "--config", cfg, "--state", "AA",
                     "--out", str(out1), "--seed", "3"]) == 0
        assert main(["fit", "--config", cfg, "--state", "AA",
                     "--out", str(out2), "--seed", "3"]) == 0
        a = (out1 / "fit_AA.csv").read_text()
        b = (out2 / "fit_AA.csv").read_text()
        assert a == b
        assert a.startswith("# config_hash=")
        header = a.splitlines()[1]
        assert header == "age,week,q2.5,q50,q97.5"
        assert (out1 / "diagnostics_AA.csv").exists()
        assert (out1 / "alpha_AA.npz").exists()
        assert (out1 / "mu_star_AA.csv").exists()

    def test_fit_quantiles_are_ordered(self, fixtures, tmp_path):
        cfg = _fit_config(fixtures, tmp_path / "fit.toml")
        out = tmp_path / "o"
        assert main(["fit", "--config", cfg, "--state", "BB",
                     "--out", str(out), "--seed", "4"]) == 0
        with open(out / "fit_BB.csv") as fh:
            fh.readline()
            for row in csv.DictReader(fh):
                assert float(row["q2.5"]) <= float(row["q50"]) <= float(row["q97.5"])

    def test_unknown_state_exits_2(self, fixtures, tmp_path):
        cfg = _fit_config(fixtures, tmp_path / "fit.toml")
        assert main(["fit", "--config", cfg, "--state", "ZZ",
                     "--out", str(tmp_path / "o")]) == 2

    def test_missing_state_flag_exits_2(self, fixtures, tmp_path):
        cfg = _fit_config(fixtures, tmp_path / "fit.toml")
        assert main(["fit", "--config", cfg, "--out", str(tmp_path / "o")]) == 2

    def test_predict_reuses_saved_alpha(self, fixtures, tmp_path):
        cfg = _fit_config(fixtures, tmp_path / "fit.toml")
        out = tmp_path / "o"
        assert main(["fit", "--config", cfg, "--state", "AA",
                     "--out", str(out), "--seed", "5"]) == 0
        pcfg = tmp_path / "p.toml"
        pcfg.write_text(
            f"""
[predict]
alpha = "{out / 'alpha_AA.npz'}"
jhu = "{fixtures / 'jhu.csv'}"
"""
        )
        assert main(["predict", "--config", str(pcfg), "--state", "AA",
                     "--out", str(out), "--seed", "6"]) == 0
        lines = (out / "predict_AA.csv").read_text().splitlines()
        assert lines[1] == "age,week,q2.5,q50,q97.5"

    def test_predict_missing_artifact_exits_2(self, fixtures, tmp_path):
        pcfg = tmp_path / "p.toml"
        pcfg.write_text(
            f"""
[predict]
alpha = "{tmp_path / 'nope.npz'}"
jhu = "{fixtures / 'jhu.csv'}"
"""
        )
        assert main(["predict", "--config", str(pcfg), "--state", "AA",
                     "--out", str(tmp_path / "o")]) == 2


class TestMeta:
    def test_meta_pipeline(self, fixtures, tmp_path):
        cfg = _fit_config(fixtures, tmp_path / "fit.toml")
        out = tmp_path / "o"
        for state in ("AA", "BB"):
            assert main(["fit", "--config", cfg, "--state", state,
                         "--out", str(out), "--seed", "8"]) == 0
        mu_star = tmp_path / "mu_star.csv"
        rows = ["state,age_class,week,mu_star"]
        for state in ("AA", "BB"):
            with open(out / f"mu_star_{state}.csv") as fh:
                fh.readline()
                fh.readline()
                rows += [line.strip() for line in fh if line.strip()]
        mu_star.write_text("\n".join(rows) + "\n")
        mcfg = tmp_path / "meta.toml"
        mcfg.write_text(
            f"""
[mcmc]
chains = 2
iters = 300
warmup = 150

[meta]
mu_star = "{mu_star}"
jhu = "{fixtures / 'jhu.csv'}"
vaccination = "{fixtures / 'vaccination.csv'}"
search_from = 5
scenario_rate = 0.9
"""
        )
        assert main(["meta", "--config", str(mcfg), "--out", str(out),
                     "--seed", "9"]) == 0
        forest = (out / "forest.csv").read_text().splitlines()
        assert forest[1] == "parameter,q2.5,q50,q97.5,rhat,ess"
        names = [line.split(",")[0] for line in forest[2:]]
        assert "chi_vacc" in names and "psi_vacc" in names
        cf = (out / "counterfactual.csv").read_text().splitlines()
        assert cf[1].startswith("state,age_class,scenario_rate,avoided_median")

    def test_meta_bad_mu_star_schema_exits_2(self, fixtures, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("state,week,mu\nAA,1,2.0\n")
        mcfg = tmp_path / "meta.toml"
        mcfg.write_text(
            f"""
[meta]
mu_star = "{bad}"
jhu = "{fixtures / 'jhu.csv'}"
vaccination = "{fixtures / 'vaccination.csv'}"
"""
        )
        assert main(["meta", "--config", str(mcfg), "--out", str(tmp_path / "o")]) == 2


class TestBenchmark:
    def test_benchmark_on_scattered_data(self, tmp_path):
        rng = np.random.default_rng(11)
        n = 320
        x, y = rng.uniform(0, 1, n), rng.uniform(0, 1, n)
        vals = np.sin(4 * x) * np.cos(3 * y) + rng.normal(0, 0.1, n)
        _write_rows(
            tmp_path / "scatter.csv", ["x", "y", "value"],
            [[f"{a:.6f}", f"{b:.6f}", f"{c:.6f}"] for a, b, c in zip(x, y, vals)],
        )
        bcfg = tmp_path / "b.toml"
        bcfg.write_text(
            f"""
[mcmc]
chains = 2
iters = 200
warmup = 100

[prior]
kind = "psplines"

[benchmark]
data = "{tmp_path / 'scatter.csv'}"
train_n = 200
test_n = 100
knots = 5
"""
        )
        out = tmp_path / "o"
        assert main(["benchmark", "--config", str(bcfg), "--out", str(out),
                     "--seed", "12"]) == 0
        lines = (out / "benchmark.csv").read_text().splitlines()
        assert lines[1] == "method,knots,train_n,test_n,mse,rhat_max,ess_min"
        mse = float(lines[2].split(",")[4])
        assert 0.0 < mse < 1.0  # far better than predicting zero (var ~ 0.5)

    def test_benchmark_rejects_gp2d(self, tmp_path):
        _write_rows(tmp_path / "s.csv", ["x", "y", "value"], [[0.1, 0.2, 1.0]] * 30)
        bcfg = tmp_path / "b.toml"
        bcfg.write_text(
            f"""
[prior]
kind = "gp2d"
[benchmark]
data = "{tmp_path / 's.csv'}"
train_n = 10
test_n = 10
knots = 4
"""
        )
        assert main(["benchmark", "--config", str(bcfg),
                     "--out", str(tmp_path / "o")]) == 2


class TestSimulate:
    def test_simulate_small_grid(self, tmp_path):
        scfg = tmp_path / "s.toml"
        scfg.write_text(
            """
[mcmc]
chains = 2
iters = 150
warmup = 75

[simulate]
grid_size = 8
knots = 4
compare_knots = 5
"""
        )
        out = tmp_path / "o"
        assert main(["simulate", "--config", str(scfg), "--out", str(out),
                     "--seed", "13"]) == 0
        lines = (out / "report.csv").read_text().splitlines()
        assert lines[1] == "method,knots,mse,rhat_max,ess_min,divergences"
        methods = [line.split(",")[0] for line in lines[2:]]
        assert methods == ["projected-gp", "bsplines", "psplines", "gp2d"]
        assert (out / "runtimes.csv").exists()
