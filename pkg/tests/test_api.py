"""
Tests for the HTTP surface.
"""

import json
import sys
from pathlib import Path

import pytest
from httpx import ASGITransport, AsyncClient

# Add backend to path
backend_path = Path(__file__).parent.parent / "backend"
sys.path.insert(0, str(backend_path))

from api.pipeline import set_pipeline_tool
from main import app
from tools.pipeline_tool import PipelineTool, load_pipeline_config


@pytest.fixture
def tool(tmp_path):
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps({"synth": {"participants": 1, "trials": 1}, "jobs": 1}))
    tool = PipelineTool(load_pipeline_config(str(config_path)), output_dir=str(tmp_path / "out"))
    set_pipeline_tool(tool)
    yield tool
    set_pipeline_tool(None)


def _client():
    return AsyncClient(transport=ASGITransport(app=app), base_url="http://test")


class TestService:
    """Root and health endpoints."""

    @pytest.mark.asyncio
    async def test_health(self):
        async with _client() as client:
            response = await client.get("/health")
        assert response.status_code == 200
        assert response.json() == {"status": "healthy", "service": "mocap-pipeline"}

    @pytest.mark.asyncio
    async def test_root_lists_endpoints(self):
        async with _client() as client:
            response = await client.get("/")
        assert response.json()["endpoints"]["run"] == "/api/pipeline/run"


class TestPipelineEndpoints:
    """Stage endpoints and their error statuses."""

    @pytest.mark.asyncio
    async def test_config(self, tool):
        async with _client() as client:
            response = await client.get("/api/pipeline/config")
        body = response.json()
        assert body["output_dir"] == str(tool.workspace.root)
        assert body["config"]["synth"]["participants"] == 1

    @pytest.mark.asyncio
    async def test_report_without_trials(self, tool):
        async with _client() as client:
            response = await client.post("/api/pipeline/report")
        assert response.status_code == 422
        detail = response.json()["detail"]
        assert detail["stage"] == "report"
        assert detail["error"] == "no_trials"

    @pytest.mark.asyncio
    async def test_fit_mmc_without_calibration(self, tool):
        async with _client() as client:
            response = await client.post("/api/pipeline/fit-mmc", json={})
        assert response.status_code == 400
        assert response.json()["detail"]["error"] == "missing_input"

    @pytest.mark.asyncio
    async def test_synth(self, tool):
        async with _client() as client:
            response = await client.post("/api/pipeline/synth", json={"trials": 1})
        assert response.status_code == 200
        body = response.json()
        assert body["success"]
        assert body["stage"] == "synth"
        assert body["outputs"] == [str(tool.workspace.dataset)]
        assert (tool.workspace.dataset / "trials.json").is_file()

    @pytest.mark.asyncio
    async def test_synth_rejects_zero_participants(self, tool):
        async with _client() as client:
            response = await client.post("/api/pipeline/synth", json={"participants": 0})
        assert response.status_code == 422
