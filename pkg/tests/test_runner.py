import json
from pathlib import Path

import pytest

import obo
from obo.cli import main as cli_main
from obo.errors import ConfigError
from obo.runner import (
    CSV_COLUMNS,
    CSV_SCHEMA,
    ExperimentConfig,
    MetricsFlags,
    load_experiment_config,
    run_compare,
    run_experiment,
    run_sweep,
    split_seed,
)


def quad_experiment(tmp_path, run_id="run", horizon=30, **overrides):
    stream = obo.StreamConfig(family="quadratic", horizon=horizon, seed=0)
    opt = obo.OptimizerConfig(alpha=0.4, beta=0.05, eta=0.95, k_window=5, lambda_solver=0.4)
    base = dict(
        stream=stream,
        optimizer="sobow",
        optimizer_cfg=opt,
        run_id=run_id,
        output_dir=Path(tmp_path),
        master_seed=42,
        metrics=MetricsFlags(),
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def read_rows(csv_path):
    lines = Path(csv_path).read_text().splitlines()
    assert lines[0] == f"# {CSV_SCHEMA}"
    assert lines[1] == ",".join(CSV_COLUMNS)
    return [line.split(",") for line in lines[2:]]


def strip_wallclock(csv_path):
    rows = read_rows(csv_path)
    idx = CSV_COLUMNS.index("wallclock_ns")
    return [tuple(v for i, v in enumerate(row) if i != idx) for row in rows]


class TestRunExperiment:
    def test_single_round_run(self, tmp_path):
        arts = run_experiment(quad_experiment(tmp_path, horizon=1))
        rows = read_rows(arts.csv_path)
        assert len(rows) == 1
        assert rows[0][0] == "1"

    def test_determinism_modulo_wallclock(self, tmp_path):
        a = run_experiment(quad_experiment(tmp_path / "a", run_id="same"))
        b = run_experiment(quad_experiment(tmp_path / "b", run_id="same"))
        assert strip_wallclock(a.csv_path) == strip_wallclock(b.csv_path)

        def scrub(summary):
            clone = json.loads(json.dumps(summary))
            clone.pop("wallclock")
            return clone

        assert scrub(a.summary) == scrub(b.summary)

    def test_summary_contents(self, tmp_path):
        arts = run_experiment(quad_experiment(tmp_path))
        s = arts.summary
        assert s["schema"] == "obo-summary-v1"
        assert s["rounds"] == 30
        assert s["constants"]["mu_g"] == 1.0
        assert {v["name"] for v in s["validation"]} >= {"alpha <= 1/l1", "lambda_solver <= 1/l1"}
        assert "blr_cumulative" in s["final"]
        assert s["error"] is None

    def test_blr_static_column_toggle(self, tmp_path):
        off = run_experiment(quad_experiment(tmp_path / "off", run_id="r"))
        idx = CSV_COLUMNS.index("blr_static_cumulative")
        assert all(row[idx] == "" for row in read_rows(off.csv_path))
        on = run_experiment(
            quad_experiment(tmp_path / "on", run_id="r", metrics=MetricsFlags(blr_static=True))
        )
        assert all(row[idx] != "" for row in read_rows(on.csv_path))

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_failure_recorded_in_summary(self, tmp_path):
        # A hugely excessive solver stepsize makes the linear solve diverge.
        cfg = quad_experiment(
            tmp_path,
            optimizer_cfg=obo.OptimizerConfig(alpha=0.4, beta=0.05, lambda_solver=1e6, q0=50),
        )
        with pytest.raises(Exception):
            run_experiment(cfg)
        summary = json.loads((Path(tmp_path) / "run.json").read_text())
        assert summary["error"] is not None
        assert summary["error"]["round"] >= 1

    def test_ogd_uses_unit_window_metric(self, tmp_path):
        cfg = quad_experiment(tmp_path, optimizer="ogd", run_id="ogd",
                              optimizer_cfg=obo.OptimizerConfig(alpha=0.4, beta=0.05, eta=0.95,
                                                                k_window=1, lambda_solver=0.4))
        arts = run_experiment(cfg)
        assert arts.summary["final"]["blr_cumulative"] > 0

    def test_seed_splitting_is_stable(self):
        stream_seed_a, _ = split_seed(42)
        stream_seed_b, _ = split_seed(42)
        stream_seed_c, _ = split_seed(43)
        assert stream_seed_a == stream_seed_b
        assert stream_seed_a != stream_seed_c


class TestSweep:
    def test_empty_values_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            run_sweep(quad_experiment(tmp_path), "eta", [])

    def test_unknown_axis_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            run_sweep(quad_experiment(tmp_path), "gamma", [0.1])

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_sibling_isolation(self, tmp_path):
        # First value diverges (runaway outer step), second still completes.
        arts = run_sweep(quad_experiment(tmp_path, horizon=60), "beta", [1e9, 0.05])
        runs = arts.summary["runs"]
        assert "error" in runs["1e+09"]
        assert "summary" in runs["0.05"]

    def test_values_share_stream_seed(self, tmp_path):
        arts = run_sweep(quad_experiment(tmp_path), "eta", [0.9, 0.95])
        seeds = {
            entry["summary"]["config"]["stream"]["seed"]
            for entry in arts.summary["runs"].values()
        }
        assert len(seeds) == 1


class TestCompare:
    def test_side_by_side_rows(self, tmp_path):
        cfgs = [
            quad_experiment(tmp_path, run_id="sobow-run"),
            quad_experiment(tmp_path, run_id="ogd-run", optimizer="ogd",
                            optimizer_cfg=obo.OptimizerConfig(alpha=0.4, beta=0.05, k_window=1,
                                                              lambda_solver=0.4)),
        ]
        table = run_compare(cfgs, tmp_path / "cmp")
        assert len(table["rows"]) == 2
        assert (tmp_path / "cmp" / "compare.json").exists()


TOML_TEMPLATE = """
run_id = "toml-run"
optimizer = "sobow"
seed = 7

[stream]
family = "quadratic"
horizon = 10

[optimizer_cfg]
alpha = 0.4
beta = 0.05
lambda_solver = 0.4
"""


class TestTomlConfig:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "cfg.toml"
        path.write_text(TOML_TEMPLATE)
        cfg = load_experiment_config(path, out_dir=tmp_path)
        assert cfg.run_id == "toml-run"
        assert cfg.master_seed == 7
        assert cfg.stream.family == "quadratic"
        run_experiment(cfg)

    def test_unknown_key_is_hard_error(self, tmp_path):
        path = tmp_path / "cfg.toml"
        path.write_text(TOML_TEMPLATE + "\n[metrics]\nblr = true\nblrr = true\n")
        with pytest.raises(ConfigError, match="blrr"):
            load_experiment_config(path)

    def test_missing_required_key(self, tmp_path):
        path = tmp_path / "cfg.toml"
        path.write_text("run_id = 'x'\noptimizer = 'sobow'\n[stream]\nfamily='quadratic'\nhorizon=5\n")
        with pytest.raises(ConfigError, match="optimizer_cfg"):
            load_experiment_config(path)

    def test_invalid_toml_syntax(self, tmp_path):
        path = tmp_path / "cfg.toml"
        path.write_text("run_id = [unclosed")
        with pytest.raises(ConfigError):
            load_experiment_config(path)

    def test_domain_parsing(self, tmp_path):
        path = tmp_path / "cfg.toml"
        path.write_text(
            TOML_TEMPLATE + "\n[optimizer_cfg.domain]\nkind = 'box'\nlo = [-1.0]\nhi = [1.0]\n"
        )
        cfg = load_experiment_config(path)
        assert cfg.optimizer_cfg.domain.kind == "box"


class TestCli:
    def test_run_and_check(self, tmp_path, capsys):
        path = tmp_path / "cfg.toml"
        path.write_text(TOML_TEMPLATE)
        assert cli_main(["run", "--config", str(path), "--out", str(tmp_path / "out")]) == 0
        assert (tmp_path / "out" / "toml-run.csv").exists()
        assert cli_main(["check", "--config", str(path)]) == 0
        out = capsys.readouterr().out
        assert "oracle check ok" in out

    def test_config_error_exit_code(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("nonsense = true")
        assert cli_main(["run", "--config", str(path)]) == 1

    def test_missing_file_exit_code(self, tmp_path):
        assert cli_main(["run", "--config", str(tmp_path / "nope.toml")]) == 1

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_runtime_error_exit_code(self, tmp_path):
        path = tmp_path / "cfg.toml"
        path.write_text(TOML_TEMPLATE.replace("lambda_solver = 0.4", "lambda_solver = 1e6\nq0 = 50"))
        assert cli_main(["run", "--config", str(path), "--out", str(tmp_path / "out")]) == 2

    def test_bad_sweep_values_exit_code(self, tmp_path):
        path = tmp_path / "cfg.toml"
        path.write_text(TOML_TEMPLATE)
        code = cli_main(["sweep", "--config", str(path), "--axis", "eta",
                         "--values", "small,large", "--out", str(tmp_path / "s")])
        assert code == 1

    def test_sweep_cli(self, tmp_path):
        path = tmp_path / "cfg.toml"
        path.write_text(TOML_TEMPLATE)
        code = cli_main(
            ["sweep", "--config", str(path), "--axis", "eta", "--values", "0.9,0.95",
             "--out", str(tmp_path / "sweep")]
        )
        assert code == 0
        assert (tmp_path / "sweep" / "toml-run-sweep-eta.json").exists()
