"""
Tests for the error records and the shared table/document readers.
"""

import json
import sys
from pathlib import Path

import pandas as pd
import pytest

# Add backend to path
backend_path = Path(__file__).parent.parent / "backend"
sys.path.insert(0, str(backend_path))

from errors import (
    INPUT_ERRORS,
    AlignmentError,
    ContractViolationError,
    FitError,
    MalformedFileError,
    MissingInputError,
    NoTrialsError,
)
from fileio import load_document, read_table, save_document, write_table
from models.schemas import PipelineConfig, TrialInfo, TrialManifest


class TestErrorRecords:
    """Machine-readable error records."""

    def test_record_has_code_and_message(self):
        record = NoTrialsError("nothing to do", path="/tmp/x").to_record()
        assert record == {"error": "no_trials", "message": "nothing to do", "path": "/tmp/x"}

    def test_none_details_are_dropped(self):
        record = MalformedFileError("data.csv", "bad value").to_record()
        assert "line" not in record and "column" not in record
        assert record["path"] == "data.csv"

    def test_malformed_message_carries_location(self):
        error = MalformedFileError("data.csv", "bad value", 5, 2)
        assert str(error) == "data.csv:5:2: bad value"
        assert error.to_record()["line"] == 5

    def test_missing_input_names_the_path(self):
        error = MissingInputError("/data/calibration.json", "calibration file")
        assert "/data/calibration.json" in str(error)
        assert isinstance(error, FileNotFoundError)

    def test_contract_violation_is_a_value_error(self):
        assert isinstance(ContractViolationError("x"), ValueError)

    def test_input_error_classification(self):
        assert isinstance(MissingInputError("p"), INPUT_ERRORS)
        assert isinstance(NoTrialsError("x"), INPUT_ERRORS)
        assert not isinstance(FitError("x"), INPUT_ERRORS)
        assert not isinstance(AlignmentError("x"), INPUT_ERRORS)


class TestTables:
    """CSV tables with metadata headers."""

    def test_header_lines_come_first(self, tmp_path):
        path = write_table(tmp_path / "t.csv", pd.DataFrame({"a": [1.0, 2.0]}), "demo", {"rate_hz": 60})
        lines = path.read_text().splitlines()
        assert lines[0] == "# schema: demo v1"
        assert lines[1] == "# rate_hz: 60"
        assert lines[2] == "a"

    def test_round_trip_values_and_meta(self, tmp_path):
        frame = pd.DataFrame({"name": ["x", "y"], "value": [0.5, float("nan")]})
        path = write_table(tmp_path / "t.csv", frame, "demo", {"trial_id": "p01_t01"})
        meta, table = read_table(path, "demo table", ["name", "value"], ["value"])
        assert meta["schema"] == "demo v1"
        assert meta["trial_id"] == "p01_t01"
        assert table["name"].tolist() == ["x", "y"]
        assert table["value"].iloc[0] == 0.5
        assert pd.isna(table["value"].iloc[1])

    def test_identical_inputs_give_identical_bytes(self, tmp_path):
        frame = pd.DataFrame({"v": [0.1, 0.2, 0.3]})
        a = write_table(tmp_path / "a.csv", frame, "demo", {"k": 1})
        b = write_table(tmp_path / "b.csv", frame, "demo", {"k": 1})
        assert a.read_bytes() == b.read_bytes()

    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingInputError) as info:
            read_table(tmp_path / "absent.csv", "demo table")
        assert info.value.path.endswith("absent.csv")

    def test_non_numeric_cell_reports_line_and_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("# schema: demo v1\n# rate_hz: 60\ncol1,col2\n1,2\n3,abc\n")
        with pytest.raises(MalformedFileError) as info:
            read_table(path, "demo table", ["col1", "col2"], ["col1", "col2"])
        record = info.value.to_record()
        assert record["line"] == 5
        assert record["column"] == 2

    def test_missing_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("# schema: demo v1\ncol1\n1\n")
        with pytest.raises(MalformedFileError, match="missing column 'col2'"):
            read_table(path, "demo table", ["col1", "col2"])


class TestDocuments:
    """JSON documents validated by pydantic schemas."""

    def test_round_trip(self, tmp_path):
        manifest = TrialManifest(trials=[TrialInfo(trial_id="t1", participant_id="p1", arm="affected",
                                                   duration_s=7.0)])
        path = save_document(manifest, tmp_path / "trials.json")
        loaded = load_document(path, TrialManifest, "trial manifest")
        assert loaded == manifest

    def test_invalid_json_reports_line(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{\n  "seed": 1,\n  oops\n}\n')
        with pytest.raises(MalformedFileError) as info:
            load_document(path, PipelineConfig, "pipeline config")
        assert info.value.to_record()["line"] == 3

    def test_unknown_keys_are_rejected(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"seed": 1, "sede": 2}))
        with pytest.raises(MalformedFileError, match="sede"):
            load_document(path, PipelineConfig, "pipeline config")

    def test_shipped_fit_config_is_valid(self):
        path = Path(__file__).parent.parent / "data" / "fit_config.json"
        config = load_document(path, PipelineConfig, "pipeline config")
        assert config.synth.participants == 3
        assert config.fit.batches == 8
