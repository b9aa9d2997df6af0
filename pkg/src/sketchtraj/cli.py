"""Command line entry points: synth, train, sample, evaluate, serve."""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from .fixtures import synth_fixture, write_fixture
from .metrics import report_table
from .service import PipelineConfig, SessionError, SessionStore

DATA_ROOT_ENV = "SKETCHTRAJ_DATA_ROOT"


def _store(root) -> SessionStore:
    root = root or os.environ.get(DATA_ROOT_ENV, "./data")
    return SessionStore(root)


def _load_config(config_path, seed) -> PipelineConfig:
    if config_path:
        config = PipelineConfig.from_dict(json.loads(Path(config_path).read_text()))
    else:
        config = PipelineConfig()
    if seed is not None:
        config = config.with_seed(seed)
    return config


@click.group()
def main():
    """Learn 3D trajectory distributions from sketches over posed views."""


@main.command()
@click.option("--kind", type=click.Choice(["arc", "letter", "line"]), default="arc")
@click.option("--noise", type=float, default=0.005, help="pixel noise std, normalized units")
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--views", type=int, default=3, show_default=True)
@click.option("--sketches-per-view", type=int, default=3, show_default=True)
def synth(kind, noise, seed, out_dir, views, sketches_per_view):
    """Generate a synthetic scene with sketches and ground truth."""
    bundle = synth_fixture(kind=kind, noise=noise, seed=seed, n_views=views,
                           sketches_per_view=sketches_per_view)
    paths = write_fixture(bundle, out_dir)
    click.echo(f"wrote {kind} fixture to {out_dir}:")
    for name, path in paths.items():
        click.echo(f"  {name}: {path}")


@main.command()
@click.option("--manifest", type=click.Path(exists=True), required=True)
@click.option("--sketches", "sketch_files", type=click.Path(exists=True), multiple=True,
              required=True, help="sketch JSON files (repeatable)")
@click.option("--root", type=click.Path(), default=None, help=f"data root (or ${DATA_ROOT_ENV})")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=None, help="override all component seeds")
@click.option("--session-id", default=None)
def train(manifest, sketch_files, root, config_path, seed, session_id):
    """Create a session from a manifest plus sketch files and train it."""
    store = _store(root)
    config = _load_config(config_path, seed)
    try:
        session = store.create_session(manifest, session_id=session_id)
        for path in sketch_files:
            payload = json.loads(Path(path).read_text())
            if "view_id" not in payload:
                raise SessionError(f"{path} has no view_id")
            store.submit_sketches(session.id, payload["view_id"], payload)
        session = store.train(session.id, config)
    except SessionError as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(1)
    click.echo(f"session {session.id}: {session.status}")
    if session.status != "trained":
        click.echo(f"error: {session.error}", err=True)
        sys.exit(1)


@main.command()
@click.argument("session_id")
@click.option("--root", type=click.Path(), default=None)
@click.option("-n", type=int, default=1, show_default=True)
@click.option("--start", default=None, help="x,y,z start position to condition on")
@click.option("--timesteps", type=int, default=100, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="write JSON here instead of stdout")
@click.option("--csv", "as_csv", is_flag=True, help="emit CSV rows of t,x,y,z")
def sample(session_id, root, n, start, timesteps, seed, out_path, as_csv):
    """Sample trajectories from a trained session."""
    store = _store(root)
    start_vec = [float(x) for x in start.split(",")] if start else None
    try:
        trajectories = store.sample(session_id, n, start=start_vec,
                                    timesteps=timesteps, seed=seed)
    except SessionError as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(1)
    if as_csv:
        lines = ["trajectory,t,x,y,z"]
        for k, traj in enumerate(trajectories):
            for t, (x, y, z) in zip(traj["times"], traj["points"]):
                lines.append(f"{k},{t},{x},{y},{z}")
        text = "\n".join(lines)
    else:
        text = json.dumps({"trajectories": trajectories}, sort_keys=True)
    if out_path:
        Path(out_path).write_text(text)
        click.echo(f"wrote {out_path}")
    else:
        click.echo(text)


@main.command()
@click.argument("session_id")
@click.option("--root", type=click.Path(), default=None)
@click.option("--n-samples", type=int, default=5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
def evaluate(session_id, root, n_samples, seed, out_path):
    """Evaluate a trained session against its held-out view."""
    store = _store(root)
    try:
        report = store.report(session_id, n_samples=n_samples, seed=seed)
    except SessionError as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(1)
    click.echo(report_table(report))
    if out_path:
        Path(out_path).write_text(json.dumps(report.to_dict(), sort_keys=True))
        click.echo(f"wrote {out_path}")


@main.command()
@click.option("--root", type=click.Path(), default=None)
@click.option("--port", type=int, default=8008, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
def serve(root, port, host):
    """Run the HTTP API."""
    import uvicorn

    from .server import create_app

    uvicorn.run(create_app(_store(root)), host=host, port=port)


if __name__ == "__main__":
    main()
