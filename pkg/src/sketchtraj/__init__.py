"""sketchtraj: learn 3D end-effector trajectory distributions from 2D
sketches drawn over posed camera views.

Pipeline: per-view normalizing-flow densities over sketch points ->
ray-traced cross-view intersection samples -> a Gaussian distribution
over basis-function trajectory weights, with closed-form conditioning on
a start position.
"""

from .geometry import Ray, ViewCamera, pixel_ray, project, ray_point
from .flow import FlowConfig, FlowModel, SketchTrajectory, train_flow
from .intersect import IntersectionConfig, IntersectionSamples, sample_intersections
from .trajdist import (BasisConfig, TrajectoryDistribution, condition_start,
                       fit_distribution, sample_trajectory)
from .metrics import EvaluationReport, evaluate_heldout, frechet, wasserstein2
from .service import PipelineConfig, SessionStore

__version__ = "0.1.0"

__all__ = [
    "Ray", "ViewCamera", "pixel_ray", "project", "ray_point",
    "FlowConfig", "FlowModel", "SketchTrajectory", "train_flow",
    "IntersectionConfig", "IntersectionSamples", "sample_intersections",
    "BasisConfig", "TrajectoryDistribution", "condition_start",
    "fit_distribution", "sample_trajectory",
    "EvaluationReport", "evaluate_heldout", "frechet", "wasserstein2",
    "PipelineConfig", "SessionStore",
    "__version__",
]
