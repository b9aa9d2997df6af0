"""Probabilistic trajectory model over normalized time.

A trajectory is a linear combination of M squared-exponential basis
functions with a weight matrix W (M x 3); a distribution of trajectories
puts an independent Gaussian on every weight entry. Fitting minimizes the
Gaussian negative log-likelihood of the time-conditional marginals over a
set of timestamped 3D samples.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import numerics
from .numerics import ParamVector, OptimizerState, adam_step

VAR_FLOOR = 1e-8
TRAJDIST_FORMAT_VERSION = 1


@dataclass(frozen=True)
class BasisConfig:
    """Squared-exponential basis: centers evenly spaced on [0, 1]."""

    M: int = 20
    gamma: float = 200.0

    def __post_init__(self):
        if self.M < 2:
            raise ValueError("basis count M must be >= 2")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")

    @property
    def centers(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.M)


def basis_eval(cfg: BasisConfig, t: float) -> np.ndarray:
    """Phi(t): exp(-gamma * (t - center)^2) per basis, each in (0, 1]."""
    if not (0.0 <= t <= 1.0):
        raise ValueError(f"t={t} outside [0, 1]")
    d = t - cfg.centers
    return np.exp(-cfg.gamma * d * d)


def basis_matrix(cfg: BasisConfig, ts) -> np.ndarray:
    """Stacked Phi rows for an array of times, shape (len(ts), M)."""
    ts = np.asarray(ts, dtype=np.float64)
    if np.min(ts) < 0.0 or np.max(ts) > 1.0:
        raise ValueError("times outside [0, 1]")
    d = ts[:, None] - cfg.centers[None, :]
    return np.exp(-cfg.gamma * d * d)


def eval_trajectory(W: np.ndarray, cfg: BasisConfig, t: float) -> np.ndarray:
    """Trajectory value W^T Phi(t)."""
    W = np.asarray(W, dtype=np.float64)
    if W.shape != (cfg.M, 3):
        raise ValueError(f"weight matrix must be ({cfg.M}, 3), got {W.shape}")
    if not np.all(np.isfinite(W)):
        raise ValueError("weight matrix must be finite")
    return W.T @ basis_eval(cfg, t)


def eval_trajectory_batch(W: np.ndarray, cfg: BasisConfig, ts) -> np.ndarray:
    return basis_matrix(cfg, ts) @ np.asarray(W, dtype=np.float64)


@dataclass(frozen=True)
class TrajectoryDistribution:
    """Basis config plus per-weight Gaussian means and log standard deviations."""

    basis: BasisConfig
    means: np.ndarray      # (M, 3)
    log_stds: np.ndarray   # (M, 3); variance = exp(2 * log_std)
    fit_meta: dict | None = None

    def __post_init__(self):
        m = np.asarray(self.means, dtype=np.float64)
        s = np.asarray(self.log_stds, dtype=np.float64)
        if m.shape != (self.basis.M, 3) or s.shape != (self.basis.M, 3):
            raise ValueError("means and log_stds must be (M, 3)")
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(s))):
            raise ValueError("distribution parameters must be finite")
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "log_stds", s)

    def variances(self) -> np.ndarray:
        return np.exp(2.0 * self.log_stds)


def conditional_moments(dist: TrajectoryDistribution, t: float):
    """Mean and (floored) variance of the trajectory value at time t."""
    phi = basis_eval(dist.basis, t)
    mean = dist.means.T @ phi
    var = dist.variances().T @ (phi * phi) + VAR_FLOOR
    return mean, var


def mean_curve(dist: TrajectoryDistribution, ts) -> np.ndarray:
    """Mean trajectory evaluated at an array of times, shape (len(ts), 3)."""
    return eval_trajectory_batch(dist.means, dist.basis, ts)


@dataclass(frozen=True)
class FitConfig:
    lr: float = 0.01
    lr_decay: float = 0.1  # final lr = lr * lr_decay
    steps: int = 2000
    ridge: float = 1e-6
    init_log_std: float = float(np.log(0.05))
    seed: int = 0


def _fit_loss(leaves, phi, phi_sq, xs):
    means, log_stds = leaves["means"], leaves["log_stds"]
    pred = numerics.affine(phi, means)
    var = numerics.add(numerics.affine(phi_sq, numerics.exp(numerics.mul(log_stds, 2.0))),
                       VAR_FLOOR)
    log_var = numerics.log(var)
    resid_sq = numerics.square(numerics.add(numerics.mul(pred, -1.0), xs))
    weighted = numerics.mul(resid_sq, numerics.exp(numerics.mul(log_var, -1.0)))
    return numerics.mul(numerics.tsum(numerics.add(log_var, weighted)), 0.5)


def fit_distribution(samples, cfg: BasisConfig = BasisConfig(),
                     fit: FitConfig = FitConfig()) -> TrajectoryDistribution:
    """Fit means and variances to intersection samples by NLL descent.

    Means are warm-started with ridge-regularized least squares, which
    stabilizes the joint objective. The learning rate decays
    geometrically to lr * lr_decay, damping the oscillation the
    residual/variance coupling causes once variances get small; the best
    parameters seen are returned, so the final loss never exceeds the
    initial one.
    """
    ts = np.asarray(samples.t, dtype=np.float64)
    xs = np.asarray(samples.x, dtype=np.float64)
    if ts.shape[0] == 0:
        raise ValueError("cannot fit a distribution to an empty sample set")
    span = ts.max() - ts.min()
    if span < 0.5:
        warnings.warn(f"sample times span only {span:.2f} of [0, 1]; "
                      "the fit is unconstrained elsewhere")
    phi = basis_matrix(cfg, ts)
    phi_sq = phi * phi
    means0 = np.linalg.solve(phi.T @ phi + fit.ridge * np.eye(cfg.M), phi.T @ xs)
    params = ParamVector.build({
        "means": means0,
        "log_stds": np.full((cfg.M, 3), fit.init_log_std),
    })
    opt = OptimizerState.init(params, lr=fit.lr)
    curve = []
    best = (np.inf, params)
    for step in range(fit.steps):
        loss, g = numerics.value_and_grad(
            lambda leaves: _fit_loss(leaves, phi, phi_sq, xs), params)
        curve.append(loss / ts.shape[0])
        if loss < best[0]:
            best = (loss, params)
        if fit.lr_decay < 1.0:
            opt = replace(opt, lr=fit.lr * fit.lr_decay ** (step / fit.steps))
        opt, params = adam_step(opt, params, g)
    final_loss, _ = numerics.value_and_grad(
        lambda leaves: _fit_loss(leaves, phi, phi_sq, xs), params)
    if final_loss < best[0]:
        best = (final_loss, params)
    fitted = best[1]
    meta = {
        "loss_curve_tail": [float(x) for x in curve[-20:]],
        "final_loss": float(best[0] / ts.shape[0]),
        "seed": fit.seed,
        "sample_count": int(ts.shape[0]),
    }
    return TrajectoryDistribution(cfg, fitted.block("means"),
                                  fitted.block("log_stds"), meta)


def sample_weights(dist: TrajectoryDistribution, seed) -> np.ndarray:
    """Draw one weight matrix; every entry independent, deterministic per seed."""
    rng = np.random.default_rng(seed)
    return dist.means + np.exp(dist.log_stds) * rng.standard_normal((dist.basis.M, 3))


def condition_start(W: np.ndarray, cfg: BasisConfig, x_eef) -> np.ndarray:
    """Replace the first weight row so the trajectory starts at x_eef.

    Solves W1 from x_eef = W1 * Phi(0)_1 + W_2:^T Phi(0)_2:; the other
    rows are untouched. With canonical centers Phi(0)_1 = 1.
    """
    W = np.asarray(W, dtype=np.float64)
    if W.shape != (cfg.M, 3):
        raise ValueError(f"weight matrix must be ({cfg.M}, 3), got {W.shape}")
    x_eef = np.asarray(x_eef, dtype=np.float64).reshape(3)
    phi0 = basis_eval(cfg, 0.0)
    if abs(phi0[0]) <= 1e-6:
        raise ValueError("first basis function vanishes at t=0; cannot condition")
    rest = W[1:].T @ phi0[1:]
    out = W.copy()
    out[0] = (x_eef - rest) / phi0[0]
    return out


def sample_trajectory(dist: TrajectoryDistribution, seed, start=None, timesteps: int = 100):
    """Sample one trajectory on evenly spaced times; returns (times, points).

    When ``start`` is given the sampled weights are conditioned so the
    first point equals it exactly.
    """
    if timesteps < 2:
        raise ValueError("timesteps must be >= 2")
    W = sample_weights(dist, seed)
    if start is not None:
        W = condition_start(W, dist.basis, start)
    ts = np.linspace(0.0, 1.0, timesteps)
    return ts, eval_trajectory_batch(W, dist.basis, ts)


def trajdist_to_dict(dist: TrajectoryDistribution) -> dict:
    return {
        "format_version": TRAJDIST_FORMAT_VERSION,
        "kind": "trajectory_distribution",
        "basis": asdict(dist.basis),
        "means": [[float(x) for x in row] for row in dist.means],
        "log_stds": [[float(x) for x in row] for row in dist.log_stds],
        "fit_meta": dist.fit_meta or {},
    }


def trajdist_from_dict(d: dict) -> TrajectoryDistribution:
    if d.get("format_version") != TRAJDIST_FORMAT_VERSION:
        raise ValueError(f"unsupported trajectory model format: {d.get('format_version')}")
    return TrajectoryDistribution(
        BasisConfig(**d["basis"]),
        np.asarray(d["means"], dtype=np.float64),
        np.asarray(d["log_stds"], dtype=np.float64),
        d.get("fit_meta") or None,
    )
