"""Feature-noise generators and the idealized (oracle) gate.

Two corruption models over a node-feature matrix: global additive Gaussian
noise, and coordinate-missing noise where each entry is independently kept
or replaced by a Gaussian fill-in. The oracle gate zeroes exactly the
replaced coordinates using the realized keep-mask, which is returned by
apply_missing precisely for that purpose.

Both generators draw from one PCG64 stream seeded per call and fill the
matrix in a single vectorized pass, so results are deterministic and
independent of any surrounding parallel schedule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NoiseSetting:
    """Noise configuration: kind in {"none", "gaussian", "missing"}.

    gaussian uses `sigma`; missing uses `rho` (replace probability) and
    `tau` (fill-in standard deviation).
    """

    kind: str = "none"
    sigma: float = 0.0
    rho: float = 0.0
    tau: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "gaussian", "missing"):
            raise ValueError(f"unknown noise kind: {self.kind}")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        if self.tau < 0:
            raise ValueError("tau must be non-negative")


def apply_gaussian(features, sigma, seed):
    """Add i.i.d. N(0, sigma^2) noise to every entry; deterministic per seed."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    features = np.asarray(features, dtype=np.float64)
    if sigma == 0:
        return features.copy()
    rng = np.random.default_rng(seed)
    return features + sigma * rng.standard_normal(features.shape)


def apply_missing(features, rho, tau, seed):
    """Keep each coordinate with probability 1-rho, else replace by N(0, tau^2).

    Returns (noisy features, keep mask) where mask entry 1 means the original
    value survived; the mask is what the oracle gate consumes.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    if tau < 0:
        raise ValueError("tau must be non-negative")
    features = np.asarray(features, dtype=np.float64)
    rng = np.random.default_rng(seed)
    keep = (rng.random(features.shape) >= rho).astype(np.float64)
    fill = tau * rng.standard_normal(features.shape)
    return keep * features + (1.0 - keep) * fill, keep


def oracle_gate(features, keep_mask):
    """Zero exactly the coordinates the missing-noise replaced: R (*) F."""
    features = np.asarray(features, dtype=np.float64)
    keep_mask = np.asarray(keep_mask, dtype=np.float64)
    if features.shape != keep_mask.shape:
        raise ValueError("mask shape must match features")
    return keep_mask * features


def apply_noise(features, setting):
    """Dispatch a NoiseSetting; returns (features, keep_mask or None)."""
    if setting.kind == "none":
        return np.asarray(features, dtype=np.float64).copy(), None
    if setting.kind == "gaussian":
        return apply_gaussian(features, setting.sigma, setting.seed), None
    return apply_missing(features, setting.rho, setting.tau, setting.seed)
