from .pipeline_tool import PipelineTool, Workspace, load_pipeline_config

__all__ = [
    "PipelineTool",
    "Workspace",
    "load_pipeline_config",
]
