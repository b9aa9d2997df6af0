import pytest

from sketchtraj.fixtures import synth_fixture
from sketchtraj.flow import FlowConfig, load_sketch_file, train_flow
from sketchtraj.intersect import IntersectionConfig, sample_intersections
from sketchtraj.service import PipelineConfig
from sketchtraj.trajdist import BasisConfig, FitConfig, fit_distribution

TRAIN_VIEWS = ("view1", "view2")
HELDOUT_VIEW = "view3"


def run_pipeline(kind, seed=0, noise=0.005):
    """Train the full default pipeline on a synthetic fixture."""
    bundle = synth_fixture(kind, noise=noise, seed=seed)
    cams = {c.view_id: c for c in bundle.cameras}
    sketches = {vid: load_sketch_file(payload)
                for vid, payload in bundle.sketch_files.items()}
    models = {vid: train_flow(sketches[vid], FlowConfig(seed=j))
              for j, vid in enumerate(TRAIN_VIEWS)}
    samples = sample_intersections(models["view1"], models["view2"],
                                   cams["view1"], cams["view2"],
                                   IntersectionConfig())
    dist = fit_distribution(samples, BasisConfig(), FitConfig())
    return {"bundle": bundle, "cams": cams, "sketches": sketches,
            "models": models, "samples": samples, "dist": dist}


@pytest.fixture(scope="session")
def arc_pipeline():
    return run_pipeline("arc")


@pytest.fixture(scope="session")
def letter_pipeline():
    return run_pipeline("letter")


@pytest.fixture(scope="session")
def fast_config():
    """Cheap pipeline config for service/API tests."""
    return PipelineConfig(
        flow=FlowConfig(epochs=250, hidden_width=32, seed=0),
        intersect=IntersectionConfig(grid=32, n_depth=32, n_time=12),
        basis=BasisConfig(),
        fit=FitConfig(steps=200),
    )
