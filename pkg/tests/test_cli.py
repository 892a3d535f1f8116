"""Command-line interface: argument handling, stage wiring, exit codes."""

import io
import json
import shutil
import subprocess
import sys

import pytest

from ambigseq.campaign import dataset_filename
from ambigseq.cli import (
    REFERENCE_AMBIGUOUS_ONLY,
    REFERENCE_FUNCTION_COUNT,
    REFERENCE_SEQUENCE_COUNTS,
    _dataset_count_lines,
    build_parser,
    cmd_mine,
    main,
    resolve_config,
)
from ambigseq.config import CampaignConfig
from ambigseq.mining import DatasetCounts


def parse(argv):
    return build_parser().parse_args(argv)


def flags(out_dir, *extra):
    return [
        "--output-dir", str(out_dir),
        "--lengths", "3",
        "--limit-sequences", "2",
        "--n-runs", "1",
        *extra,
    ]


@pytest.fixture()
def out_dir(tmp_path, mined_l3):
    out = tmp_path / "out"
    out.mkdir()
    shutil.copy(mined_l3, out / dataset_filename(3))
    return out


class TestArgumentHandling:
    def test_defaults(self):
        config = resolve_config(parse(["mine"]))
        assert config == CampaignConfig()

    def test_flags_override_defaults(self):
        args = parse(
            ["run", "--lengths", "2,3", "--backend", "adversarial",
             "--rng-seed", "7", "--tasks", "completion, explanation"]
        )
        config = resolve_config(args)
        assert config.lengths == (2, 3)
        assert config.backend == "adversarial"
        assert config.rng_seed == 7
        assert config.tasks == ("completion", "explanation")

    def test_flags_override_config_file(self, tmp_path):
        path = tmp_path / "config.json"
        CampaignConfig(rng_seed=3, n_runs=5).save(path)
        args = parse(["run", "--config", str(path), "--n-runs", "2"])
        config = resolve_config(args)
        assert config.rng_seed == 3  # from the file
        assert config.n_runs == 2  # overridden

    def test_constant_range_flag(self):
        config = resolve_config(parse(["mine", "--constant-range", "0,2"]))
        assert config.constant_range == (0, 2)

    def test_bad_lengths_rejected_by_parser(self, capsys):
        with pytest.raises(SystemExit) as exc:
            parse(["mine", "--lengths", "two,three"])
        assert exc.value.code == 2
        assert "comma-separated integers" in capsys.readouterr().err

    def test_unknown_backend_rejected_by_parser(self):
        with pytest.raises(SystemExit):
            parse(["run", "--backend", "psychic"])

    def test_command_is_required(self):
        with pytest.raises(SystemExit):
            parse([])


class TestMineOutput:
    def test_space_summary_and_counts(self, tmp_path):
        config = CampaignConfig(lengths=(3,), output_dir=str(tmp_path))
        buffer = io.StringIO()
        assert cmd_mine(config, out=buffer) == 0
        text = buffer.getvalue()
        assert f"function space: {REFERENCE_FUNCTION_COUNT} valid functions (matches)" in text
        assert "lambda x: 3 ** (4 * x)" in text
        assert "lambda x: 4 ** (4 * x)" in text
        assert "filtered list of length 0" in text
        assert (
            "length 3: 12 ambiguous / 370 unambiguous sequences; "
            "45 ambiguous / 152 unambiguous functions; "
            "225 ambiguous function pairs; 2 self-ambiguous functions"
        ) in text
        assert "closest unit: functions" in text
        assert (tmp_path / dataset_filename(3)).exists()

    def test_reference_verdict_lines(self):
        matching = DatasetCounts(57, 140, 10, 20, 30, 0)
        lines = _dataset_count_lines(4, matching)
        assert any("57 ambiguous / 140 unambiguous sequences — matches" in l
                   for l in lines)

        divergent = DatasetCounts(9, 389, 33, 164, 106, 0)
        lines = _dataset_count_lines(4, divergent)
        assert any("DIVERGES under every counting unit above" in l for l in lines)

    def test_unstated_unit_reference_line(self):
        counts = DatasetCounts(48, 267, 106, 91, 617, 1)
        lines = _dataset_count_lines(2, counts)
        joined = "\n".join(lines)
        assert f"reference: {REFERENCE_AMBIGUOUS_ONLY[2]} ambiguous (counting unit unstated)" in joined
        assert "closest unit" in joined

    def test_reference_tables_cover_expected_lengths(self):
        assert set(REFERENCE_SEQUENCE_COUNTS) == {4}
        assert set(REFERENCE_AMBIGUOUS_ONLY) == {2, 3}


class TestStageWiring:
    def test_four_stages_end_to_end(self, tmp_path, capfd):
        out = tmp_path / "campaign"
        assert main(["mine", *flags(out)]) == 0
        assert main(["run", *flags(out)]) == 0
        assert main(["analyze", *flags(out)]) == 0
        assert main(["report", *flags(out)]) == 0
        stdout = capfd.readouterr().out
        assert "12 queried, 0 already present" in stdout
        assert "== metrics (mean over runs) ==" in stdout

        analysis = json.loads((out / "analysis.json").read_text())
        agg = analysis["per_length"]["3"]["aggregate"]
        assert agg["completion_accuracy"] == 100.0
        assert agg["cross_context_consistency"] == 100.0

        report = (out / "report.txt").read_text()
        for section in (
            "== function space ==",
            "== datasets ==",
            "== metrics (mean over runs) ==",
            "== random-consistency baseline",
            "== output-distribution quadrants ==",
        ):
            assert section in report
        assert "the reference derivation is unpublished" in report

    def test_run_resumes_through_cli(self, out_dir, capfd):
        assert main(["run", *flags(out_dir)]) == 0
        assert main(["run", *flags(out_dir)]) == 0
        stdout = capfd.readouterr().out
        assert "12 queried, 0 already present" in stdout
        assert "0 queried, 12 already present" in stdout

    def test_report_computes_analysis_when_absent(self, out_dir, capfd):
        assert main(["run", *flags(out_dir)]) == 0
        assert not (out_dir / "analysis.json").exists()
        assert main(["report", *flags(out_dir)]) == 0
        assert (out_dir / "report.txt").exists()

    def test_config_file_drives_all_stages(self, tmp_path, capfd):
        out = tmp_path / "campaign"
        config = CampaignConfig(
            lengths=(3,), limit_sequences=2, n_runs=1, output_dir=str(out)
        )
        path = tmp_path / "config.json"
        config.save(path)
        for command in ("mine", "run", "analyze"):
            assert main([command, "--config", str(path)]) == 0
        header = json.loads((out / "results.jsonl").read_text().splitlines()[0])
        assert header["config_digest"] == config.digest()


class TestFailureExitCodes:
    def test_run_before_mine(self, tmp_path, capfd):
        assert main(["run", *flags(tmp_path / "nothing")]) == 1
        assert "mine stage" in capfd.readouterr().err

    def test_digest_mismatch(self, out_dir, capfd):
        assert main(["run", *flags(out_dir)]) == 0
        assert main(["run", *flags(out_dir), "--rng-seed", "99"]) == 1
        assert "fresh output directory" in capfd.readouterr().err

    def test_bad_config_file(self, tmp_path, capfd):
        path = tmp_path / "config.json"
        path.write_text("{broken")
        assert main(["mine", "--config", str(path)]) == 2
        assert "config error" in capfd.readouterr().err

    def test_invalid_flag_combination(self, tmp_path, capfd):
        # scripted backend without a fixtures file fails validation
        assert main(["run", "--output-dir", str(tmp_path),
                     "--backend", "scripted"]) == 2
        assert "fixtures_file" in capfd.readouterr().err

    def test_analyze_without_results(self, tmp_path, capfd):
        assert main(["analyze", *flags(tmp_path / "nothing")]) == 1
        assert "error" in capfd.readouterr().err


class TestEntryPoints:
    def test_module_invocation(self):
        proc = subprocess.run(
            [sys.executable, "-m", "ambigseq", "--help"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        assert "{mine,run,analyze,report}" in proc.stdout
