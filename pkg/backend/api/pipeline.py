"""
Pipeline API endpoints: one POST per stage, run in a worker thread.
"""

from typing import Dict, List, Optional

from fastapi import APIRouter, HTTPException
from fastapi.concurrency import run_in_threadpool
from pydantic import BaseModel, Field

from tools.pipeline_tool import PipelineTool, load_pipeline_config

router = APIRouter(prefix="/api/pipeline", tags=["pipeline"])

# Initialize tool (singleton pattern)
_tool: Optional[PipelineTool] = None


def get_pipeline_tool() -> PipelineTool:
    """Get or create the pipeline tool instance."""
    global _tool
    if _tool is None:
        _tool = PipelineTool(load_pipeline_config())
    return _tool


def set_pipeline_tool(tool: Optional[PipelineTool]) -> None:
    """Replace the shared tool (None resets it to settings defaults)."""
    global _tool
    _tool = tool


class SynthRequest(BaseModel):
    participants: Optional[int] = Field(None, ge=1)
    trials: Optional[int] = Field(None, ge=1)


class FitRequest(BaseModel):
    cameras: Optional[List[str]] = None
    trial_ids: Optional[List[str]] = None


class PipelineRequest(BaseModel):
    synth: bool = False
    cameras: Optional[List[str]] = None


class StageResponse(BaseModel):
    success: bool
    stage: str
    outputs: List[str] = []
    details: Dict = {}


def _respond(result: Dict) -> StageResponse:
    """Map a tool result to a response, or raise the matching HTTP error."""
    if not result["success"]:
        error = result["error"]
        if error.get("error") == "missing_input":
            status = 400
        elif result.get("input_error"):
            status = 422
        else:
            status = 500
        raise HTTPException(status_code=status, detail={"stage": result["stage"], **error})
    details = {k: v for k, v in result.items() if k not in ("success", "stage", "outputs", "input_error")}
    return StageResponse(success=True, stage=result["stage"], outputs=result.get("outputs", []), details=details)


@router.get("/config")
async def get_config():
    """The configuration the service runs with."""
    tool = get_pipeline_tool()
    return {"output_dir": str(tool.workspace.root), "config": tool.config.model_dump(mode="json")}


@router.post("/synth", response_model=StageResponse)
async def synth(request: SynthRequest):
    """
    Write a synthetic dataset into the output directory.

    - **participants**: Number of synthetic participants
    - **trials**: Trials per participant (arms alternate)
    """
    tool = get_pipeline_tool()
    return _respond(await run_in_threadpool(tool.synth, request.participants, request.trials))


@router.post("/fit-mmc", response_model=StageResponse)
async def fit_mmc(request: FitRequest):
    """
    End-to-end fit of every participant's keypoints.

    - **cameras**: Optional camera subset
    - **trial_ids**: Optional trial subset
    """
    tool = get_pipeline_tool()
    return _respond(await run_in_threadpool(tool.fit_mmc, request.cameras, request.trial_ids))


@router.post("/fit-omc", response_model=StageResponse)
async def fit_omc(request: FitRequest):
    """Two-stage fit of every participant's 3D markers."""
    tool = get_pipeline_tool()
    return _respond(await run_in_threadpool(tool.fit_omc, request.trial_ids))


@router.post("/derive", response_model=StageResponse)
async def derive():
    tool = get_pipeline_tool()
    return _respond(await run_in_threadpool(tool.derive))


@router.post("/measures", response_model=StageResponse)
async def measures():
    tool = get_pipeline_tool()
    return _respond(await run_in_threadpool(tool.measures))


@router.post("/compare", response_model=StageResponse)
async def compare():
    tool = get_pipeline_tool()
    return _respond(await run_in_threadpool(tool.compare))


@router.post("/report", response_model=StageResponse)
async def report():
    tool = get_pipeline_tool()
    return _respond(await run_in_threadpool(tool.report))


@router.post("/run", response_model=StageResponse)
async def run_pipeline(request: PipelineRequest):
    """Run every stage in order, stopping at the first failure."""
    tool = get_pipeline_tool()
    result = await run_in_threadpool(tool.pipeline, request.synth, request.cameras)
    if result["success"]:
        result["outputs"] = [p for stage in result["stages"].values() for p in stage.get("outputs", [])]
    return _respond(result)
