"""Noise calibration: solve for the centering jitter that yields a target
per-pair force noise.

The photon-shot-noise floor of the fit is measured first; if the target
sits above it, bisection on the jitter amplitude (with common random
numbers, so the objective is a deterministic function of the jitter)
closes the gap to 1% bracket tolerance.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from ..constants import HBAR
from .config import CampaignConfig
from .runner import _fit_window, _simulate_cycle

__all__ = ["CalibrationError", "calibrate_jitter", "pair_sigma_force"]


class CalibrationError(RuntimeError):
    """The requested noise target cannot be reached."""


def pair_sigma_force(cfg: CampaignConfig, n_pairs: int = 400,
                     seed_offset: int = 0) -> float:
    """Empirical per-pair force noise (N): component-averaged std of the
    reconstructed force over n_pairs independent differential pairs."""
    lat = cfg.lattice()
    window_k = _fit_window(cfg)
    dt = cfg.dt_list[0]
    forces = []
    for i in range(n_pairs):
        c = _simulate_cycle(cfg, lat, window_k, seed_offset + i, dt, cfg.force)
        if c.converged:
            forces.append(c.force)
    if len(forces) < max(8, n_pairs // 2):
        raise CalibrationError("too many unconverged fits while calibrating")
    forces = np.array(forces)
    return float(np.mean(forces.std(axis=0, ddof=1)))


def calibrate_jitter(cfg: CampaignConfig, target_sigma_f: float,
                     n_pairs: int = 400, rel_tol: float = 0.01,
                     max_iter: int = 40):
    """Centering jitter (m^-1) whose per-pair force noise matches the target.

    Returns (jitter_k, achieved_sigma_f). The same seeds are replayed at
    every candidate jitter, making the objective monotone and the bisection
    well posed. Raises CalibrationError when the photon-noise floor already
    exceeds the target.
    """
    if not target_sigma_f > 0:
        raise CalibrationError("target sigma must be positive")
    dt = cfg.dt_list[0]

    def sigma_at(jitter: float) -> float:
        probe = replace(cfg, imaging=cfg.imaging.with_jitter(jitter))
        return pair_sigma_force(probe, n_pairs=n_pairs)

    floor = sigma_at(0.0)
    if floor >= target_sigma_f:
        raise CalibrationError(
            f"photon-noise floor {floor:.3e} N already exceeds the target "
            f"{target_sigma_f:.3e} N; reduce n0 or enlarge the target")

    # Analytic first bracket: sigma_F ~ hbar*sqrt(2)*jitter/dt once jitter
    # dominates the fit noise.
    guess = target_sigma_f * dt / (HBAR * np.sqrt(2.0))
    hi = guess
    for _ in range(max_iter):
        if sigma_at(hi) >= target_sigma_f:
            break
        hi *= 2.0
    else:
        raise CalibrationError("failed to bracket the jitter target")
    lo = 0.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        val = sigma_at(mid)
        if abs(val - target_sigma_f) <= rel_tol * target_sigma_f:
            return mid, val
        if val < target_sigma_f:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rel_tol * max(hi, guess):
            break
    mid = 0.5 * (lo + hi)
    return mid, sigma_at(mid)
