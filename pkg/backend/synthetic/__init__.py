from .scenario import GroundTruth, generate_trajectory, minimum_jerk, participant_scale
from .render import corrupt, default_rig, render_markers, render_observations
from .dataset import SyntheticDataset, write_dataset

__all__ = [
    "GroundTruth",
    "generate_trajectory",
    "minimum_jerk",
    "participant_scale",
    "corrupt",
    "default_rig",
    "render_markers",
    "render_observations",
    "SyntheticDataset",
    "write_dataset",
]
