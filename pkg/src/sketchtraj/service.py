"""Session-oriented pipeline orchestration with JSON-on-disk persistence.

A session lives in one directory: manifest, per-view sketch files, a
status file, and versioned artifacts (flow models, intersection samples,
trajectory distribution, evaluation report). All writes are atomic
(write-then-rename), so a crash between transitions leaves the previous
consistent state on disk.
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from dataclasses import dataclass, replace, asdict, field
from pathlib import Path

import numpy as np

from . import flow as flow_mod
from . import intersect as intersect_mod
from . import trajdist as trajdist_mod
from .fixtures import synth_fixture, write_fixture
from .flow import FlowConfig, FlowTrainingError, load_sketch_file, train_flow
from .geometry import ViewCamera, camera_from_dict, camera_to_dict
from .intersect import IntersectionConfig, NoIntersectionsError, sample_intersections
from .metrics import evaluate_heldout, project_curve
from .trajdist import BasisConfig, FitConfig, fit_distribution, sample_trajectory

STATUSES = ("empty", "sketching", "training", "trained", "failed")


class SessionError(RuntimeError):
    pass


class UnknownSessionError(SessionError):
    pass


class TrainingInProgressError(SessionError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    flow: FlowConfig = FlowConfig()
    intersect: IntersectionConfig = IntersectionConfig()
    basis: BasisConfig = BasisConfig()
    fit: FitConfig = FitConfig()

    def to_dict(self):
        return {"flow": asdict(self.flow), "intersect": asdict(self.intersect),
                "basis": asdict(self.basis), "fit": asdict(self.fit)}

    @classmethod
    def from_dict(cls, d):
        d = d or {}
        return cls(
            flow=FlowConfig(**d.get("flow", {})),
            intersect=IntersectionConfig(**d.get("intersect", {})),
            basis=BasisConfig(**d.get("basis", {})),
            fit=FitConfig(**d.get("fit", {})),
        )

    def with_seed(self, seed: int):
        return replace(self, flow=replace(self.flow, seed=seed),
                       fit=replace(self.fit, seed=seed))


@dataclass
class Session:
    """In-memory view of one persisted session."""

    id: str
    root: Path
    status: str
    cameras: list
    train_view_ids: list
    heldout_view_ids: list
    progress: dict = field(default_factory=dict)
    error: str | None = None

    def camera(self, view_id) -> ViewCamera:
        for cam in self.cameras:
            if cam.view_id == view_id:
                return cam
        raise SessionError(f"unknown view '{view_id}'")


def _atomic_write(path: Path, payload: dict):
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(payload, sort_keys=True))
    os.replace(tmp, path)


def _validate_manifest(views) -> list[ViewCamera]:
    if not isinstance(views, list) or len(views) < 2:
        raise SessionError("manifest must list at least 2 views")
    cameras, errors = [], []
    for i, entry in enumerate(views):
        try:
            cameras.append(camera_from_dict(entry))
        except (ValueError, TypeError) as err:
            errors.append(f"view[{i}]: {err}")
    ids = [c.view_id for c in cameras]
    if len(set(ids)) != len(ids):
        errors.append("duplicate view ids")
    if errors:
        raise SessionError("manifest validation failed: " + "; ".join(errors))
    return cameras


class SessionStore:
    """Directory-backed session registry. One subdirectory per session."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._locks = {}
        self._locks_guard = threading.Lock()

    def _lock(self, sid) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(sid, threading.Lock())

    def _dir(self, sid) -> Path:
        d = self.root / sid
        if not d.is_dir():
            raise UnknownSessionError(f"unknown session '{sid}'")
        return d

    # ---- lifecycle -------------------------------------------------

    def create_session(self, manifest, session_id=None) -> Session:
        if isinstance(manifest, (str, Path)):
            manifest = json.loads(Path(manifest).read_text())
        cameras = _validate_manifest(manifest)
        sid = session_id or uuid.uuid4().hex[:12]
        d = self.root / sid
        if d.exists():
            raise SessionError(f"session '{sid}' already exists")
        (d / "sketches").mkdir(parents=True)
        (d / "artifacts").mkdir()
        manifest_echo = [camera_to_dict(c, image_path=m.get("image_path", ""))
                         for c, m in zip(cameras, manifest)]
        _atomic_write(d / "manifest.json", {"views": manifest_echo})
        train_ids = [c.view_id for c in cameras[:2]]
        heldout_ids = [c.view_id for c in cameras[2:]]
        _atomic_write(d / "status.json", {
            "status": "sketching",
            "train_view_ids": train_ids,
            "heldout_view_ids": heldout_ids,
            "progress": {},
            "error": None,
        })
        return self.get(sid)

    def get(self, sid) -> Session:
        d = self._dir(sid)
        status = json.loads((d / "status.json").read_text())
        manifest = json.loads((d / "manifest.json").read_text())
        cameras = [camera_from_dict(v) for v in manifest["views"]]
        return Session(
            id=sid, root=d, status=status["status"], cameras=cameras,
            train_view_ids=status["train_view_ids"],
            heldout_view_ids=status["heldout_view_ids"],
            progress=status.get("progress", {}),
            error=status.get("error"),
        )

    def list_sessions(self):
        return sorted(p.name for p in self.root.iterdir()
                      if (p / "status.json").is_file())

    def image_path(self, sid, view_id) -> Path | None:
        d = self._dir(sid)
        manifest = json.loads((d / "manifest.json").read_text())
        for v in manifest["views"]:
            if v["id"] == view_id:
                p = v.get("image_path", "")
                if not p:
                    return None
                path = Path(p)
                return path if path.is_absolute() else d / path
        raise SessionError(f"unknown view '{view_id}'")

    def _set_status(self, sid, status, progress=None, error=None):
        d = self._dir(sid)
        current = json.loads((d / "status.json").read_text())
        current["status"] = status
        current["progress"] = progress or {}
        current["error"] = error
        _atomic_write(d / "status.json", current)

    def is_training(self, sid) -> bool:
        return self._lock(sid).locked()

    def mark_failed(self, sid, reason: str):
        self._set_status(sid, "failed", error=reason)

    # ---- sketches --------------------------------------------------

    def submit_sketches(self, sid, view_id, payload, idempotency_key=None) -> Session:
        session = self.get(sid)
        if session.status not in ("sketching", "trained", "failed"):
            raise SessionError(f"cannot submit sketches while session is {session.status}")
        session.camera(view_id)  # raises on unknown view
        if isinstance(payload, dict) and payload.get("view_id") not in (None, view_id):
            raise SessionError(
                f"sketch file is for view '{payload.get('view_id')}', not '{view_id}'")
        try:
            new_sketches = load_sketch_file(payload, default_view_id=view_id)
        except ValueError as err:
            raise SessionError(f"invalid sketch file: {err}") from err
        d = session.root
        keys_path = d / "sketches" / "idempotency_keys.json"
        keys = json.loads(keys_path.read_text()) if keys_path.is_file() else []
        if idempotency_key is not None and idempotency_key in keys:
            return self.get(sid)
        sketch_path = d / "sketches" / f"{view_id}.json"
        existing = []
        if sketch_path.is_file():
            existing = json.loads(sketch_path.read_text())["strokes"]
        merged = existing + [[[float(x) for x in row] for row in s.points]
                             for s in new_sketches]
        _atomic_write(sketch_path, {"view_id": view_id, "time_mode": "recorded",
                                    "strokes": merged})
        if idempotency_key is not None:
            keys.append(idempotency_key)
            _atomic_write(keys_path, keys)
        if session.status != "sketching":
            self._set_status(sid, "sketching")
        return self.get(sid)

    def sketches(self, sid, view_id) -> list:
        d = self._dir(sid)
        path = d / "sketches" / f"{view_id}.json"
        if not path.is_file():
            return []
        return load_sketch_file(json.loads(path.read_text()), default_view_id=view_id)

    def sketch_counts(self, sid) -> dict:
        session = self.get(sid)
        return {cam.view_id: len(self.sketches(sid, cam.view_id))
                for cam in session.cameras}

    # ---- training pipeline -----------------------------------------

    def train(self, sid, config: PipelineConfig = PipelineConfig()) -> Session:
        lock = self._lock(sid)
        if not lock.acquire(blocking=False):
            raise TrainingInProgressError(f"session '{sid}' is already training")
        try:
            return self._train_locked(sid, config)
        finally:
            lock.release()

    def _train_locked(self, sid, config) -> Session:
        session = self.get(sid)
        for vid in session.train_view_ids:
            if not self.sketches(sid, vid):
                raise SessionError(f"training view '{vid}' has no sketches")
        d = session.root
        _atomic_write(d / "config.json", config.to_dict())
        self._set_status(sid, "training", progress={"phase": "start"})
        echo = config.to_dict()
        try:
            models = {}
            for j, vid in enumerate(session.train_view_ids):
                cfg = replace(config.flow, seed=config.flow.seed + j)

                def progress(epoch, total, nll, vid=vid):
                    self._set_status(sid, "training", progress={
                        "phase": f"flow:{vid}", "epoch": epoch, "total": total,
                        "mean_nll": nll})

                model = train_flow(self.sketches(sid, vid), cfg, progress_cb=progress)
                payload = flow_mod.flow_to_dict(model)
                payload["pipeline_config"] = echo
                _atomic_write(d / "artifacts" / f"flow_{vid}.json", payload)
                models[vid] = model
            self._set_status(sid, "training", progress={"phase": "intersect"})
            cam1 = session.camera(session.train_view_ids[0])
            cam2 = session.camera(session.train_view_ids[1])
            samples = sample_intersections(models[session.train_view_ids[0]],
                                           models[session.train_view_ids[1]],
                                           cam1, cam2, config.intersect)
            payload = intersect_mod.samples_to_dict(samples)
            payload["pipeline_config"] = echo
            _atomic_write(d / "artifacts" / "intersections.json", payload)
            self._set_status(sid, "training", progress={"phase": "fit"})
            dist = fit_distribution(samples, config.basis, config.fit)
            payload = trajdist_mod.trajdist_to_dict(dist)
            payload["pipeline_config"] = echo
            _atomic_write(d / "artifacts" / "trajdist.json", payload)
        except NoIntersectionsError as err:
            self._set_status(sid, "failed", error=f"no intersections: {err}")
            return self.get(sid)
        except FlowTrainingError as err:
            self._set_status(sid, "failed", error=f"training divergence: {err}")
            return self.get(sid)
        self._set_status(sid, "trained")
        return self.get(sid)

    # ---- artifacts -------------------------------------------------

    def _artifact(self, sid, name) -> dict:
        path = self._dir(sid) / "artifacts" / name
        if not path.is_file():
            raise SessionError(f"artifact '{name}' not available for session '{sid}'")
        return json.loads(path.read_text())

    def flow_model(self, sid, view_id):
        return flow_mod.flow_from_dict(self._artifact(sid, f"flow_{view_id}.json"))

    def intersections(self, sid):
        return intersect_mod.samples_from_dict(self._artifact(sid, "intersections.json"))

    def distribution(self, sid):
        return trajdist_mod.trajdist_from_dict(self._artifact(sid, "trajdist.json"))

    # ---- generation ------------------------------------------------

    def sample(self, sid, n, start=None, timesteps: int = 100, seed: int = 0):
        session = self.get(sid)
        if session.status != "trained":
            raise SessionError(f"session is {session.status}, not trained")
        if n < 0:
            raise SessionError("sample count must be >= 0")
        dist = self.distribution(sid)
        out = []
        for k in range(n):
            ts, pts = sample_trajectory(dist, seed + k, start=start, timesteps=timesteps)
            out.append({
                "seed": seed + k,
                "times": [float(x) for x in ts],
                "points": [[float(v) for v in row] for row in pts],
            })
        return out

    def overlay(self, sid, view_id, n, seed: int = 0, start=None,
                timesteps: int = 100):
        session = self.get(sid)
        if session.status != "trained":
            raise SessionError(f"session is {session.status}, not trained")
        cam = session.camera(view_id)
        dist = self.distribution(sid)
        polylines = []
        for k in range(n):
            ts, pts = sample_trajectory(dist, seed + k, start=start, timesteps=timesteps)
            uv, keep = project_curve(cam, pts)
            polylines.append({
                "seed": seed + k,
                "points": [[float(u), float(v)] for u, v in uv],
                "times": [float(x) for x in ts[keep]],
            })
        return polylines

    def report(self, sid, n_samples: int = 5, seed: int = 0, start=None):
        session = self.get(sid)
        if session.status != "trained":
            raise SessionError(f"session is {session.status}, not trained")
        if not session.heldout_view_ids:
            raise SessionError("no held-out view to evaluate against")
        heldout_id = session.heldout_view_ids[0]
        heldout_sketches = self.sketches(sid, heldout_id)
        if not heldout_sketches:
            raise SessionError(f"held-out view '{heldout_id}' has no sketches")
        train_views = [(session.camera(vid), self.sketches(sid, vid))
                       for vid in session.train_view_ids]
        report = evaluate_heldout(self.distribution(sid), session.camera(heldout_id),
                                  heldout_sketches, n_samples=n_samples, seed=seed,
                                  train_views=train_views, start=start)
        payload = report.to_dict()
        config_path = self._dir(sid) / "config.json"
        if config_path.is_file():
            payload["pipeline_config"] = json.loads(config_path.read_text())
        _atomic_write(self._dir(sid) / "artifacts" / "report.json", payload)
        return report


def bootstrap_fixture_session(store: SessionStore, kind="arc", noise=0.005, seed=0,
                              config: PipelineConfig | None = None, train=True,
                              session_id=None):
    """Create, populate, and optionally train a synthetic-fixture session."""
    bundle = synth_fixture(kind=kind, noise=noise, seed=seed)
    fixture_dir = store.root / f"fixture_{kind}_{seed}"
    paths = write_fixture(bundle, fixture_dir)
    manifest = json.loads(paths["manifest"].read_text())
    session = store.create_session(manifest, session_id=session_id)
    for vid, payload in bundle.sketch_files.items():
        store.submit_sketches(session.id, vid, payload)
    if train:
        session = store.train(session.id, config or PipelineConfig())
    return store.get(session.id), bundle
