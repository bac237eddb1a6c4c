import os
import shlex
import sys

import pytest

from groundloop.cli import (
    ExperimentKind,
    ExperimentSpec,
    ReportFormat,
    ReportRow,
    emit_report,
    load_rows,
    render_structured,
    render_table,
    run_experiment,
    validate_batch,
)
from groundloop.cli.main import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, build_parser, main
from groundloop.errors import ConfigError, EmptyReportError

SRC = os.path.abspath(os.path.join(os.path.dirname(__file__), "../src"))


def spec(tmp_path, kind, name="exp", **overrides):
    return ExperimentSpec(name, kind, tmp_path, overrides=tuple((k, str(v)) for k, v in overrides.items()))


class TestReport:
    """Tests for report rows and their two renderings."""

    def test_one_row_table(self, tmp_path):
        """Test that a single row gives a header and one line."""

        path = emit_report([ReportRow.from_rates("full", [0.1, 0.1])], ReportFormat.DELIMITED_TABLE, tmp_path / "rows.tsv")
        lines = path.read_text(encoding="utf-8").splitlines()

        assert lines[0] == "label\tgamma_mean\tgamma_std\th_mean\th_std"
        assert lines[1] == "full\t0.9\t0\t0.1\t0"

    def test_empty_report(self, tmp_path):
        """Test that no rows raise and leave no file behind."""

        with pytest.raises(EmptyReportError):
            emit_report([], ReportFormat.STRUCTURED_TEXT, tmp_path / "rows.txt")

        assert not (tmp_path / "rows.txt").exists()

    def test_row_order_is_kept(self):
        """Test that rows render in the order given."""

        labels = ["baseline", "adaptive-only", "prompts-only", "full"]
        text = render_table([ReportRow.from_rates(label, [0.2]) for label in labels])

        assert [line.split("\t")[0] for line in text.splitlines()[1:]] == labels

    @pytest.mark.parametrize("h_values", [[0.1], [0.0, 1.0], [0.12, 0.09, 0.1]])
    def test_gamma_and_h_are_complementary(self, h_values):
        """Test that gamma_mean + h_mean = 1 and both spreads agree."""

        row = ReportRow.from_rates("r", h_values)

        assert row.gamma_mean + row.h_mean == pytest.approx(1.0)
        assert row.gamma_std == pytest.approx(row.h_std)

    def test_extra_columns(self, tmp_path):
        """Test that extra metrics become columns in first-seen order and survive reloading."""

        rows = [
            ReportRow.from_rates("a", [0.1], final_tau=0.55),
            ReportRow("b", extra={"beta_hat": 0.1, "stability": "Stable", "predicted_frames": None}),
        ]
        path = emit_report(rows, ReportFormat.DELIMITED_TABLE, tmp_path / "rows.tsv")

        header = path.read_text(encoding="utf-8").splitlines()[0].split("\t")
        assert header[5:] == ["final_tau", "beta_hat", "stability", "predicted_frames"]

        loaded = load_rows(path)
        assert loaded[1].extra["stability"] == "Stable"
        assert loaded[1].extra["predicted_frames"] is None
        assert loaded[1].gamma_mean is None
        assert loaded[0].extra["final_tau"] == 0.55

    def test_structured_text(self):
        """Test the human-readable block form."""

        text = render_structured([ReportRow.from_rates("full", [0.1], final_tau=0.5)])
        assert text == "[full]\ngamma = 0.9 ± 0\nh = 0.1 ± 0\nfinal_tau = 0.5\n"


class TestExperimentSpec:
    """Tests for experiment descriptions."""

    @pytest.mark.parametrize("name, repetitions", [("", None), ("a/b", None), ("ok", 0)])
    def test_invalid(self, tmp_path, name, repetitions):
        """Test that bad names and repetition counts are configuration errors."""

        with pytest.raises(ConfigError):
            ExperimentSpec(name, ExperimentKind.ABLATION, tmp_path, repetitions=repetitions)

    def test_duplicate_names(self, tmp_path):
        """Test that a batch cannot reuse a name."""

        with pytest.raises(ConfigError):
            validate_batch([spec(tmp_path, ExperimentKind.ABLATION), spec(tmp_path, ExperimentKind.CONVERGENCE)])

    def test_settings_apply_overrides(self, tmp_path):
        """Test that overrides and repetitions reach the resolved settings."""

        s = ExperimentSpec("x", ExperimentKind.ABLATION, tmp_path, overrides=(("frames", "10"),), repetitions=2).settings()
        assert (s.run.frames, s.run.repetitions) == (10, 2)


class TestRunExperiment:
    """Tests for running experiments into run directories."""

    def test_artifacts(self, tmp_path):
        """Test the run directory layout of a stream experiment."""

        rows, files = run_experiment(spec(tmp_path, ExperimentKind.STREAM, frames=20, repetitions=2))
        names = {f.name for f in files}

        assert {"config.snapshot", "rows.tsv", "rows.txt", "results_sim_0.txt", "results_sim_1.txt"} <= names
        assert all(f.parent == tmp_path / "exp" for f in files)
        assert rows[0].extra["frames"] == 20
        assert len((tmp_path / "exp" / "results_sim_0.txt").read_text(encoding="utf-8").splitlines()) == 20

    def test_ablation_is_deterministic(self, tmp_path):
        """Test that two runs of the same ablation write identical rows and trajectories."""

        for name in ("first", "second"):
            run_experiment(spec(tmp_path, ExperimentKind.ABLATION, name=name, frames=60, repetitions=1))

        first, second = tmp_path / "first", tmp_path / "second"
        assert (first / "rows.tsv").read_text() == (second / "rows.tsv").read_text()
        assert (first / "trajectory_full_0.tsv").read_text() == (second / "trajectory_full_0.tsv").read_text()
        assert [r.label for r in load_rows(first / "rows.tsv")] == ["baseline", "adaptive-only", "prompts-only", "full"]

    def test_stability_boundary(self, tmp_path):
        """Test that the gain sweep classifies each loop gain and measures the error growth."""

        rows, _ = run_experiment(spec(tmp_path, ExperimentKind.STABILITY_BOUNDARY))
        by_label = {r.label: r.extra for r in rows}

        assert by_label["gain=0.5"]["stability"] == "Stable"
        assert by_label["gain=1.9"]["stability"] == "Stable"
        assert by_label["gain=2"]["stability"] == "Marginal"
        assert by_label["gain=2.5"]["stability"] == "Unstable"
        assert by_label["gain=2.5"]["error_growth"] > 1.0
        assert by_label["gain=0.5"]["error_growth"] < 1e-9

    def test_convergence_near_the_lower_bound(self, tmp_path):
        """Test that the linearisation grid around a small starting threshold stays inside (0, 1)."""

        rows, _ = run_experiment(spec(
            tmp_path,
            ExperimentKind.CONVERGENCE,
            frames=200,
            repetitions=1,
            **{"controller.tau_min": 0.0, "controller.tau_init": 0.02},
        ))

        assert rows[0].extra["beta_hat"] >= 0.0

    def test_sensitivity_rows(self, tmp_path):
        """Test one row per grid threshold plus the estimate."""

        rows, _ = run_experiment(spec(tmp_path, ExperimentKind.SENSITIVITY, frames=1000, repetitions=1, tau_grid="0.4,0.5,0.6"))

        assert [r.label for r in rows] == ["tau=0.4", "tau=0.5", "tau=0.6", "estimate"]
        assert rows[-1].extra["beta_hat"] >= 0.0

    def test_latency_predictions(self, tmp_path):
        """Test that pipelined and serial rows carry their own latency prediction."""

        rows, _ = run_experiment(spec(
            tmp_path,
            ExperimentKind.LATENCY_MODEL,
            frames=10,
            repetitions=1,
            **{"pipeline.delay_detect_ms": 2, "pipeline.delay_generate_ms": 3},
        ))
        predicted = {r.label: r.extra["predicted_us"] for r in rows}

        assert predicted == {"pipelined": 3100.0, "serial": 5100.0}


class TestMain:
    """Tests for the command-line entry point."""

    def test_every_key_is_a_flag(self):
        """Test that configuration keys are accepted as flags."""

        args = build_parser().parse_args(["converge", "--controller.lambda", "0.1", "--seed", "4"])
        assert getattr(args, "key:controller.lambda") == "0.1"
        assert args.seed == 4

    def test_stability_verb(self, tmp_path, capsys):
        """Test a successful run: exit 0, rows on stdout, files on disk."""

        code = main(["stability", "--out", str(tmp_path), "--name", "gains"])

        assert code == EXIT_OK
        assert "[gain=2.5]" in capsys.readouterr().out
        assert (tmp_path / "gains" / "rows.tsv").exists()

    @pytest.mark.parametrize("argv", [
        ["simulate", "--controller.lambda", "abc"],
        ["simulate", "--controller.lambda", "5"],
        ["simulate", "--repetitions", "0"],
    ])
    def test_configuration_errors(self, tmp_path, capsys, argv):
        """Test that invalid values exit with the configuration status and a message."""

        assert main(argv + ["--out", str(tmp_path)]) == EXIT_CONFIG
        assert "configuration error" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        """Test that an unreadable config file is a runtime failure."""

        assert main(["simulate", "--config", str(tmp_path / "absent.conf"), "--out", str(tmp_path)]) == EXIT_RUNTIME

    def test_report_verb(self, tmp_path, capsys):
        """Test re-rendering a finished run in both formats."""

        main(["stability", "--out", str(tmp_path), "--name", "gains"])
        capsys.readouterr()

        assert main(["report", str(tmp_path / "gains")]) == EXIT_OK
        assert "[gain=0.5]" in capsys.readouterr().out

        assert main(["report", str(tmp_path / "gains"), "--format", "DelimitedTable"]) == EXIT_OK
        assert capsys.readouterr().out.startswith("label\t")

    def test_report_of_missing_run(self, tmp_path):
        """Test that reporting a directory without rows fails at runtime."""

        assert main(["report", str(tmp_path / "nothing")]) == EXIT_RUNTIME

    def test_adapter_run(self, tmp_path, monkeypatch, capsys):
        """Test a stream against the mock peer started as a child process."""

        monkeypatch.setenv("PYTHONPATH", os.pathsep.join(filter(None, [SRC, os.environ.get("PYTHONPATH")])))
        command = f"{shlex.quote(sys.executable)} -m groundloop.backends.mock_peer"

        code = main([
            "run-adapter",
            "--out", str(tmp_path),
            "--frames", "3",
            "--repetitions", "1",
            "--adapter.address", command,
            "--adapter.timeout_ms", "10000",
        ])

        assert code == EXIT_OK
        assert "[adapter]" in capsys.readouterr().out
