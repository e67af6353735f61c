"""
Tests for the pipeline tool and the command-line entry point.
"""

import json
import sys
from pathlib import Path

import pytest

# Add backend to path
backend_path = Path(__file__).parent.parent / "backend"
sys.path.insert(0, str(backend_path))

from analysis.drinking_task import read_phases
from cli import EXIT_FAILURE, EXIT_INPUT, EXIT_OK, main
from errors import ContractViolationError, MalformedFileError, MissingInputError
from fileio import read_table
from models.schemas import SCHEMA_VERSION, PipelinePaths, System
from tools.pipeline_tool import STAGES, PipelineTool, Workspace, load_pipeline_config

SMALL_CONFIG = {
    "synth": {
        "participants": 1,
        "trials": 2,
        "scenario": {"video_rate_hz": 30.0, "noise": {"pixel_sigma": 0.5}},
    },
    "fit": {
        "mlp": {"layers": 1, "width": 32, "fourier_pairs": 6},
        "optimizer": {"steps": 30, "prefit_steps": 600, "lr": 0.002},
        "batches": 1,
    },
    "jobs": 1,
}


def _config_file(tmp_path, content=None):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(SMALL_CONFIG if content is None else content))
    return path


def _tool(tmp_path, output=None):
    config = load_pipeline_config(str(_config_file(tmp_path)))
    return PipelineTool(config, output_dir=str(output or tmp_path / "out"))


class TestConfiguration:
    """Settings, then the config file, then flags."""

    def test_file_overrides_defaults(self, tmp_path):
        config = load_pipeline_config(str(_config_file(tmp_path)))
        assert config.fit.mlp.width == 32
        assert config.fit.optimizer.steps == 30
        # Untouched nested values keep their defaults.
        assert config.fit.optimizer.prefit_lr == 3e-3
        assert config.synth.scenario.marker_rate_hz == 100.0

    def test_flags_override_file(self, tmp_path):
        path = _config_file(tmp_path, {"jobs": 3, "compare": {"max_lag_s": 0.1}, "fit": {"batches": 2}})
        config = load_pipeline_config(str(path), jobs=4, seed=9, max_lag_s=0.2, output_dir="elsewhere")
        assert config.jobs == 4
        assert config.seed == 9
        assert config.fit.optimizer.seed == 9
        assert config.compare.max_lag_s == 0.2
        assert config.fit.batches == 2
        assert config.paths.output_dir == "elsewhere"

    def test_missing_config_file(self, tmp_path):
        with pytest.raises(MissingInputError):
            load_pipeline_config(str(tmp_path / "nope.json"))

    def test_unknown_key(self, tmp_path):
        path = _config_file(tmp_path, {"fit": {"learning_rate": 0.1}})
        with pytest.raises(MalformedFileError, match="learning_rate"):
            load_pipeline_config(str(path))

    def test_invalid_flag(self):
        with pytest.raises(ContractViolationError, match="jobs"):
            load_pipeline_config(jobs=0)

    def test_shipped_config_is_valid(self):
        path = Path(__file__).parent.parent / "data" / "fit_config.json"
        config = load_pipeline_config(str(path))
        assert config.synth.participants == 3
        assert config.fit.optimizer.steps == 800


class TestWorkspace:
    """Input and output locations."""

    def test_defaults_resolve_inside_output(self, tmp_path):
        ws = Workspace(tmp_path)
        assert ws.calibration == tmp_path / "dataset" / "calibration.json"
        assert ws.trajectory(System.MMC, "p01_t01") == tmp_path / "trajectories" / "mmc" / "p01_t01.csv"
        assert ws.model is None

    def test_overrides(self, tmp_path):
        ws = Workspace(tmp_path, PipelinePaths(calibration="/data/cal.json", keypoints_dir="/data/kp"))
        assert ws.calibration == Path("/data/cal.json")
        assert ws.keypoints == Path("/data/kp")
        assert ws.markers == tmp_path / "dataset" / "markers"


class TestStages:
    """Stage results and their errors."""

    def test_fit_mmc_without_calibration(self, tmp_path):
        result = _tool(tmp_path).fit_mmc()
        assert not result["success"]
        assert result["stage"] == "fit-mmc"
        assert result["input_error"]
        assert result["error"]["error"] == "missing_input"
        assert result["error"]["path"].endswith("calibration.json")

    def test_report_without_trials(self, tmp_path):
        result = _tool(tmp_path).report()
        assert not result["success"]
        assert result["error"]["error"] == "no_trials"
        assert "no trials" in result["error"]["message"]

    def test_derive_without_fits(self, tmp_path):
        tool = _tool(tmp_path)
        assert tool.synth()["success"]
        result = tool.derive()
        assert not result["success"]
        assert result["error"]["error"] == "no_trials"

    def test_unknown_trial_id(self, tmp_path):
        tool = _tool(tmp_path)
        tool.synth()
        result = tool.fit_omc(["p07_t01"])
        assert not result["success"]
        assert result["input_error"]

    def test_invalid_synth_options(self, tmp_path):
        result = _tool(tmp_path).synth(participants=0)
        assert not result["success"]
        assert result["input_error"]

    def test_fit_omc_per_participant(self, tmp_path):
        tool = _tool(tmp_path)
        tool.synth()
        result = tool.fit_omc()
        assert result["success"]
        assert result["trials"] == {"p01_t01": "ok", "p01_t02": "ok"}
        assert Path(result["outputs"][0]).name == "p01.json"

    def test_fit_omc_missing_marker_file(self, tmp_path):
        tool = _tool(tmp_path)
        tool.synth()
        (tool.workspace.markers / "p01_t02.csv").unlink()
        result = tool.fit_omc()
        assert result["success"]
        assert result["trials"]["p01_t02"] == "missing_markers"


class TestFullPipeline:
    """Every stage on a small synthetic dataset."""

    @pytest.fixture(scope="class")
    def run(self, tmp_path_factory):
        tmp = tmp_path_factory.mktemp("pipeline")
        tool = _tool(tmp, tmp / "out")
        return tool, tool.pipeline(synth=True, camera_ids=["cam0", "cam2", "cam4"])

    def test_all_stages_succeed(self, run):
        _, result = run
        assert result["success"], result.get("error")
        assert list(result["stages"]) == list(STAGES)

    def test_outputs(self, run):
        tool, _ = run
        root = tool.workspace.root
        for rel in ("fits/mmc/p01.json", "fits/omc/p01.json", "trajectories/mmc/p01_t01.csv",
                    "trajectories/omc/p01_t02.csv", "measures/measures.csv", "measures/phases.csv",
                    "compare/channel_results.csv", "compare/exclusions.csv", "report/table1.csv",
                    "report/table2.csv", "report/table3.csv", "report/measure_pairs.csv", "report/summary.json"):
            assert (root / rel).is_file(), rel

    def test_measures_for_both_systems(self, run):
        tool, _ = run
        _, table = read_table(tool.workspace.measures / "measures.csv", "measures")
        assert set(table["system"]) == {"mmc", "omc"}
        assert set(table["trial_id"]) == {"p01_t01", "p01_t02"}

    def test_both_systems_share_one_segmentation(self, run):
        tool, _ = run
        segmentations = read_phases(tool.workspace.measures / "phases.csv")
        for trial_id in ("p01_t01", "p01_t02"):
            omc = segmentations[(trial_id, "omc")]
            mmc = segmentations[(trial_id, "mmc")]
            assert mmc.boundaries() == omc.for_rate(mmc.rate_hz, mmc.n_frames).boundaries()

    def test_summary_counts(self, run):
        tool, _ = run
        summary = json.loads((tool.workspace.report / "summary.json").read_text())
        assert summary["schema_version"] == SCHEMA_VERSION
        assert summary["trials"] == 2
        assert summary["arms"]["unaffected"]["trials"] == 1
        assert summary["arms"]["affected"]["trials"] == 1
        assert summary["included"] + sum(summary["exclusions"].values()) == 2

    def test_camera_subset_recorded(self, run):
        tool, _ = run
        fit = json.loads((tool.workspace.fits(System.MMC) / "p01.json").read_text())
        assert fit["cameras"] == ["cam0", "cam2", "cam4"]


class TestCli:
    """Exit codes and output of the command-line entry point."""

    def test_fit_mmc_without_calibration_exits_2(self, tmp_path, capsys):
        code = main(["fit-mmc", "--output", str(tmp_path)])
        assert code == EXIT_INPUT
        error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert error["stage"] == "fit-mmc"
        assert error["path"] == str(tmp_path / "dataset" / "calibration.json")

    def test_report_on_empty_directory(self, tmp_path, capsys):
        assert main(["report", "--output", str(tmp_path)]) == EXIT_INPUT
        assert "no trials" in capsys.readouterr().err

    def test_synth_prints_outputs(self, tmp_path, capsys):
        config = _config_file(tmp_path)
        code = main(["synth", "--config", str(config), "--output", str(tmp_path / "out"), "--trials", "1"])
        assert code == EXIT_OK
        assert capsys.readouterr().out.strip() == str(tmp_path / "out" / "dataset")
        assert (tmp_path / "out" / "dataset" / "keypoints" / "p01_t01").is_dir()

    def test_missing_config_exits_2(self, tmp_path):
        assert main(["derive", "--config", str(tmp_path / "nope.json")]) == EXIT_INPUT

    def test_invalid_flag_exits_2(self, tmp_path):
        assert main(["derive", "--jobs", "0", "--output", str(tmp_path)]) == EXIT_INPUT

    def test_processing_failure_exits_1(self, tmp_path):
        config = _config_file(tmp_path)
        out = tmp_path / "out"
        assert main(["synth", "--config", str(config), "--output", str(out)]) == EXIT_OK
        (out / "dataset" / "markers" / "p01_t01.csv").unlink()
        (out / "dataset" / "markers" / "p01_t02.csv").unlink()
        assert main(["fit-omc", "--config", str(config), "--output", str(out)]) == EXIT_FAILURE

    def test_empty_camera_list_is_rejected(self, tmp_path):
        with pytest.raises(SystemExit) as info:
            main(["fit-mmc", "--cameras", ",", "--output", str(tmp_path)])
        assert info.value.code == 2
