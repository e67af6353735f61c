"""
Markerless Motion-Capture Pipeline - FastAPI Backend

This is the service entry point. It exposes the pipeline stages over HTTP:
- Synthetic dataset generation
- End-to-end (keypoints) and two-stage (markers) fits
- Trajectory derivation, drinking-task measures, system comparison and reporting
"""

import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from api.pipeline import get_pipeline_tool, router as pipeline_router
from settings import configure_logging, get_settings

logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    """
    Application lifespan manager.
    Configures logging and resolves the pipeline configuration on startup.
    """
    configure_logging()
    try:
        tool = get_pipeline_tool()
        logger.info("Pipeline ready, output directory %s", tool.workspace.root)
    except Exception as e:
        logger.warning("Could not load the pipeline configuration: %s", e)
    yield
    logger.info("Shutting down")


app = FastAPI(
    title="Markerless Motion-Capture Pipeline",
    description="""
    Fits a biomechanical upper-body model to multi-camera keypoints and to
    3D markers, then compares both systems on a drinking task.

    ## API Endpoints
    - `/api/pipeline/synth`: Write a synthetic dataset
    - `/api/pipeline/fit-mmc`, `/api/pipeline/fit-omc`: Fit both systems
    - `/api/pipeline/derive`, `/measures`, `/compare`, `/report`: Analysis stages
    - `/api/pipeline/run`: Every stage in order
    """,
    version="1.0.0",
    lifespan=lifespan,
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["http://localhost:3000", "http://127.0.0.1:3000"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

app.include_router(pipeline_router)


@app.get("/")
async def root():
    """Root endpoint with API information."""
    return {
        "name": "Markerless Motion-Capture Pipeline",
        "version": "1.0.0",
        "status": "running",
        "docs": "/docs",
        "endpoints": {
            "config": "/api/pipeline/config",
            "run": "/api/pipeline/run",
            "report": "/api/pipeline/report",
        },
    }


@app.get("/health")
async def health_check():
    """Health check endpoint."""
    return {"status": "healthy", "service": "mocap-pipeline"}


if __name__ == "__main__":
    import uvicorn

    settings = get_settings()
    uvicorn.run(
        "main:app",
        host="0.0.0.0",
        port=settings.api_port,
        reload=settings.debug,
    )
