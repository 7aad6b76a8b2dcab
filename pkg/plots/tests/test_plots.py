import hashlib
import json
import shutil
from pathlib import Path

import pytest

from obo_plot.cli import main as cli_main
from obo_plot.figures import FIGURES, PlotSpec, render
from obo_plot.schema import SchemaError, load_runs, read_run_csv

FIXTURES = Path(__file__).parent / "fixtures"

FIGURE_INPUTS = {
    "static_panel": FIXTURES / "panel",
    "dynamic_panel": FIXTURES / "panel",
    "eta_sweep": FIXTURES / "eta_sweep",
    "n_sweep": FIXTURES / "n_sweep",
    "hg_error": FIXTURES / "single",
    "timing_bar": FIXTURES / "panel",
}


class TestSchema:
    def test_loads_golden_runs(self):
        runs = load_runs(FIXTURES / "panel")
        assert [r.run_id for r in runs] == ["oagd-10", "ogd-1", "sobow-10"]
        for run in runs:
            assert len(run.column("t")) == 60
            assert run.summary["schema"] == "obo-summary-v1"

    def test_corrupted_header_named_in_error(self):
        with pytest.raises(SchemaError, match="hg_error"):
            read_run_csv(FIXTURES / "corrupted" / "quad-sobow.csv")

    def test_missing_directory(self, tmp_path):
        with pytest.raises(SchemaError, match="does not exist"):
            load_runs(tmp_path / "nope")

    def test_csv_without_summary(self, tmp_path):
        shutil.copy(FIXTURES / "single" / "quad-sobow.csv", tmp_path / "quad-sobow.csv")
        with pytest.raises(SchemaError, match="quad-sobow.json"):
            load_runs(tmp_path)

    def test_wrong_schema_version(self, tmp_path):
        src = FIXTURES / "single"
        shutil.copy(src / "quad-sobow.csv", tmp_path / "r.csv")
        summary = json.loads((src / "quad-sobow.json").read_text())
        summary["schema"] = "obo-summary-v999"
        (tmp_path / "r.json").write_text(json.dumps(summary))
        with pytest.raises(SchemaError, match="schema"):
            load_runs(tmp_path)


class TestRender:
    @pytest.mark.parametrize("figure", FIGURES)
    def test_all_figures_render_nonempty(self, figure, tmp_path):
        out = render(PlotSpec(input_dir=FIGURE_INPUTS[figure], figure=figure,
                              out_path=tmp_path / f"{figure}.png"))
        assert out.exists()
        assert out.stat().st_size > 1000

    def test_eta_sweep_legend_entries(self, tmp_path):
        import matplotlib.pyplot as plt

        render(PlotSpec(input_dir=FIXTURES / "eta_sweep", figure="eta_sweep",
                        out_path=tmp_path / "eta.png"))
        # Re-render on a live axis to inspect the legend labels.
        from obo_plot.figures import _regret_panel, _sweep_label
        from obo_plot.schema import load_runs

        runs = load_runs(FIXTURES / "eta_sweep")
        fig, ax = plt.subplots()
        _regret_panel(ax, runs, lambda r: _sweep_label(r, "eta", "η"), False)
        labels = [t.get_text() for t in ax.get_legend().get_texts()]
        plt.close(fig)
        assert labels == ["η = 0.5", "η = 0.9", "η = 0.99"]

    def test_inputs_never_modified(self, tmp_path):
        src = FIXTURES / "panel"
        before = {p.name: p.read_bytes() for p in src.iterdir()}
        render(PlotSpec(input_dir=src, figure="static_panel", out_path=tmp_path / "p.png"))
        after = {p.name: p.read_bytes() for p in src.iterdir()}
        assert before == after

    def test_output_hash_stable(self, tmp_path):
        digests = []
        for name in ("a.png", "b.png"):
            out = render(PlotSpec(input_dir=FIXTURES / "single", figure="hg_error",
                                  out_path=tmp_path / name))
            digests.append(hashlib.sha256(out.read_bytes()).hexdigest())
        assert digests[0] == digests[1]

    def test_svg_output(self, tmp_path):
        out = render(PlotSpec(input_dir=FIXTURES / "single", figure="hg_error",
                              out_path=tmp_path / "fig.svg"))
        assert out.read_text().startswith("<?xml")


class TestCli:
    def test_renders_all_figures(self, tmp_path):
        for figure in FIGURES:
            code = cli_main([
                "--figure", figure,
                "--in", str(FIGURE_INPUTS[figure]),
                "--out", str(tmp_path / f"{figure}.png"),
            ])
            assert code == 0
            assert (tmp_path / f"{figure}.png").stat().st_size > 1000

    def test_nonzero_exit_on_corrupted_schema(self, tmp_path):
        code = cli_main([
            "--figure", "hg_error",
            "--in", str(FIXTURES / "corrupted"),
            "--out", str(tmp_path / "broken.png"),
        ])
        assert code != 0
        assert not (tmp_path / "broken.png").exists()

    def test_log_y_flag(self, tmp_path):
        code = cli_main([
            "--figure", "static_panel",
            "--in", str(FIXTURES / "panel"),
            "--out", str(tmp_path / "logy.png"),
            "--log-y",
        ])
        assert code == 0
