"""HTTP API over a SessionStore. Training runs in a background thread;
status polling reports the last persisted progress.
"""

from __future__ import annotations

import threading

from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse, JSONResponse

from .service import (PipelineConfig, SessionError, SessionStore,
                      TrainingInProgressError, UnknownSessionError)


def _parse_start(start):
    if start is None or start == "":
        return None
    try:
        parts = [float(x) for x in str(start).split(",")]
    except ValueError as err:
        raise HTTPException(400, f"bad start position '{start}'") from err
    if len(parts) != 3:
        raise HTTPException(400, "start position needs exactly 3 coordinates")
    return parts


def _session_payload(session, store):
    return {
        "id": session.id,
        "status": session.status,
        "progress": session.progress,
        "error": session.error,
        "train_view_ids": session.train_view_ids,
        "heldout_view_ids": session.heldout_view_ids,
        "views": [cam.view_id for cam in session.cameras],
        "sketch_counts": store.sketch_counts(session.id),
    }


def create_app(store: SessionStore) -> FastAPI:
    app = FastAPI(title="sketchtraj")

    def _get(sid):
        try:
            return store.get(sid)
        except UnknownSessionError as err:
            raise HTTPException(404, str(err)) from err

    @app.exception_handler(SessionError)
    def _session_error(_, err):
        code = 404 if isinstance(err, UnknownSessionError) else 409
        return JSONResponse(status_code=code, content={"detail": str(err)})

    @app.post("/sessions", status_code=201)
    def create_session(body: dict):
        manifest = body.get("views", body) if isinstance(body, dict) else body
        try:
            session = store.create_session(manifest)
        except SessionError as err:
            raise HTTPException(400, str(err)) from err
        return _session_payload(session, store)

    @app.get("/sessions")
    def list_sessions():
        return {"sessions": store.list_sessions()}

    @app.get("/sessions/{sid}")
    def get_session(sid: str):
        return _session_payload(_get(sid), store)

    @app.post("/sessions/{sid}/views/{vid}/sketches")
    def submit_sketches(sid: str, vid: str, body: dict):
        key = body.pop("idempotency_key", None)
        try:
            store.submit_sketches(sid, vid, body, idempotency_key=key)
        except UnknownSessionError as err:
            raise HTTPException(404, str(err)) from err
        except SessionError as err:
            raise HTTPException(400, str(err)) from err
        return {"stored_strokes": len(store.sketches(sid, vid))}

    @app.post("/sessions/{sid}/train", status_code=202)
    def train(sid: str, body: dict | None = None):
        session = _get(sid)
        config = PipelineConfig.from_dict((body or {}).get("config"))
        for view_id in session.train_view_ids:
            if not store.sketches(sid, view_id):
                raise HTTPException(409, f"training view '{view_id}' has no sketches")
        if store.is_training(sid):
            raise HTTPException(409, f"session '{sid}' is already training")

        def run():
            try:
                store.train(sid, config)
            except TrainingInProgressError:
                pass  # a concurrent request won the race; its outcome persists
            except Exception as err:  # noqa: BLE001 - persist instead of losing it
                store.mark_failed(sid, str(err))

        threading.Thread(target=run, daemon=True).start()
        return {"id": sid, "status": "training"}

    @app.get("/sessions/{sid}/samples")
    def samples(sid: str, n: int = 1, start: str | None = None,
                timesteps: int = 100, seed: int = 0):
        return {"seed": seed,
                "trajectories": store.sample(sid, n, start=_parse_start(start),
                                             timesteps=timesteps, seed=seed)}

    @app.get("/sessions/{sid}/overlay/{vid}")
    def overlay(sid: str, vid: str, n: int = 5, seed: int = 0,
                start: str | None = None, timesteps: int = 100):
        return {"view_id": vid, "seed": seed,
                "polylines": store.overlay(sid, vid, n, seed=seed,
                                           start=_parse_start(start),
                                           timesteps=timesteps)}

    @app.get("/sessions/{sid}/report")
    def report(sid: str, n_samples: int = 5, seed: int = 0):
        return store.report(sid, n_samples=n_samples, seed=seed).to_dict()

    @app.get("/sessions/{sid}/images/{vid}")
    def image(sid: str, vid: str):
        path = store.image_path(sid, vid)
        if path is None or not path.is_file():
            raise HTTPException(404, f"no image for view '{vid}'")
        return FileResponse(path)

    return app
