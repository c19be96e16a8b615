"""Quasi-momentum dynamics of the lattice-confined condensate.

An applied force changes only the quasi-momentum of the matter wave
(single-band, semiclassical: spatial motion is suppressed by the lattice),
so evolution is the exact time integral of the force divided by hbar, and
inverting that integral reconstructs the force. Profiles are piecewise
constant, so all integrals are evaluated in closed form; there is no ODE
stepper and hence no integration error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .constants import HBAR
from .lattice import ReciprocalLattice, fold_to_fbz

__all__ = [
    "ForceProfile",
    "QuasimomentumTrace",
    "CondensateState",
    "force_at",
    "force_impulse",
    "evolve_quasimomentum",
    "sample_trace",
    "force_from_impulse",
    "unwrap_trace",
    "apply_decoherence",
]

STATIC = "static"
SQUARE_WAVE = "square_wave"

_ZERO2 = (0.0, 0.0)


def _vec2(v) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.shape != (2,):
        raise ValueError(f"expected a 2-vector, got shape {a.shape}")
    return a


@dataclass(frozen=True, eq=False)
class ForceProfile:
    """Static 2D force, or a square-wave modulated one.

    SquareWave: F(t) = sw_offset + sw_amplitude * sgn(sin(2*pi*f*t + phase)),
    with sgn(0) defined as +1 so the profile is total and deterministic.
    """

    kind: str
    static_force: np.ndarray = None
    sw_amplitude: np.ndarray = None
    sw_frequency: float = 0.0
    sw_phase: float = 0.0
    sw_offset: np.ndarray = None

    def __post_init__(self):
        if self.kind not in (STATIC, SQUARE_WAVE):
            raise ValueError(f"unknown force profile kind {self.kind!r}")
        object.__setattr__(self, "static_force",
                           _vec2(self.static_force if self.static_force is not None else _ZERO2))
        object.__setattr__(self, "sw_amplitude",
                           _vec2(self.sw_amplitude if self.sw_amplitude is not None else _ZERO2))
        object.__setattr__(self, "sw_offset",
                           _vec2(self.sw_offset if self.sw_offset is not None else _ZERO2))
        if self.kind == SQUARE_WAVE and not self.sw_frequency > 0:
            raise ValueError("square-wave profile requires sw_frequency > 0")

    @classmethod
    def static(cls, force) -> "ForceProfile":
        return cls(kind=STATIC, static_force=force)

    @classmethod
    def square_wave(cls, amplitude, frequency: float, phase: float = 0.0,
                    offset=_ZERO2) -> "ForceProfile":
        return cls(kind=SQUARE_WAVE, sw_amplitude=amplitude,
                   sw_frequency=frequency, sw_phase=phase, sw_offset=offset)


def force_at(profile: ForceProfile, t: float) -> np.ndarray:
    """Force (N) at time t >= 0 after force-on."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if profile.kind == STATIC:
        return profile.static_force.copy()
    s = math.sin(2.0 * math.pi * profile.sw_frequency * t + profile.sw_phase)
    sign = 1.0 if s >= 0 else -1.0
    return profile.sw_offset + sign * profile.sw_amplitude


def _square_wave_antiderivative(u: float) -> float:
    """Integral of sgn(sin(2*pi*v)) dv from 0 to u: a unit triangular wave."""
    x = u - math.floor(u)
    return x if x <= 0.5 else 1.0 - x


def force_impulse(profile: ForceProfile, dt: float) -> np.ndarray:
    """Exact integral of the force over [0, dt] (N*s), in closed form."""
    if dt < 0:
        raise ValueError("dt must be >= 0")
    if profile.kind == STATIC:
        return profile.static_force * dt
    f = profile.sw_frequency
    u0 = profile.sw_phase / (2.0 * math.pi)
    u1 = f * dt + u0
    tri = _square_wave_antiderivative(u1) - _square_wave_antiderivative(u0)
    return profile.sw_offset * dt + profile.sw_amplitude * (tri / f)


def evolve_quasimomentum(k_i, profile: ForceProfile, dt: float) -> np.ndarray:
    """k_f = k_i + (1/hbar) * integral of F over [0, dt]; unfolded wavevector."""
    return _vec2(k_i) + force_impulse(profile, dt) / HBAR


@dataclass(frozen=True, eq=False)
class QuasimomentumTrace:
    """Sampled wavevector evolution; times[0] is the force-on instant."""

    times: np.ndarray  # (n,) s, strictly increasing
    k_unfolded: np.ndarray  # (n, 2) m^-1
    k_folded: np.ndarray  # (n, 2) m^-1

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or len(t) == 0:
            raise ValueError("times must be a nonempty 1D array")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "k_unfolded", np.asarray(self.k_unfolded, dtype=float))
        object.__setattr__(self, "k_folded", np.asarray(self.k_folded, dtype=float))


def sample_trace(k_i, profile: ForceProfile, times, lat: ReciprocalLattice) -> QuasimomentumTrace:
    """Exact quasi-momentum at each sample time, unfolded and FBZ-folded.

    A square-wave profile yields a triangular wave in k_unfolded.
    """
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or len(t) == 0:
        raise ValueError("times must be a nonempty 1D array")
    if np.any(t < 0):
        raise ValueError("times must be >= 0")
    if np.any(np.diff(t) <= 0):
        raise ValueError("times must be strictly increasing")
    k_i = _vec2(k_i)
    k_un = np.array([evolve_quasimomentum(k_i, profile, ti) for ti in t])
    k_fold = np.array([fold_to_fbz(k, lat) for k in k_un])
    return QuasimomentumTrace(times=t, k_unfolded=k_un, k_folded=k_fold)


def force_from_impulse(k_i, k_f, dt: float) -> np.ndarray:
    """Impulse-momentum force estimate F = hbar * (k_f - k_i) / dt.

    Exact inverse of evolve_quasimomentum for static profiles.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    return HBAR * (_vec2(k_f) - _vec2(k_i)) / dt


def unwrap_trace(folded_samples, lat: ReciprocalLattice) -> np.ndarray:
    """Undo zone folding along a sampled trace.

    Each sample is shifted by the reciprocal lattice vector that minimizes
    the jump from its (already unwrapped) predecessor; the first sample is
    returned unchanged. Caller contract: true increments between successive
    samples stay below half the minimal FBZ diameter.
    """
    samples = np.asarray(folded_samples, dtype=float)
    if samples.ndim != 2 or samples.shape[1] != 2:
        raise ValueError("folded_samples must have shape (n, 2)")
    if len(samples) == 0:
        return samples.copy()
    out = np.empty_like(samples)
    out[0] = samples[0]
    for i in range(1, len(samples)):
        # fold_to_fbz of the jump finds the lattice vector nearest to it.
        jump = samples[i] - out[i - 1]
        out[i] = out[i - 1] + fold_to_fbz(jump, lat)
    return out


@dataclass(frozen=True, eq=False)
class CondensateState:
    """Condensate summary: atom number, purity, wavevector, contrast, size scale."""

    n0: float  # condensed atom number
    condensate_fraction: float  # [0, 1]
    k: np.ndarray  # quasi-momentum wavevector (2,) m^-1
    coherence: float = 1.0  # [0, 1] contrast factor
    l_q: float = 1e-6  # characteristic BEC length scale (m)

    def __post_init__(self):
        if not self.n0 > 0:
            raise ValueError("n0 must be > 0")
        if not 0.0 <= self.condensate_fraction <= 1.0:
            raise ValueError("condensate_fraction must be in [0, 1]")
        if not 0.0 <= self.coherence <= 1.0:
            raise ValueError("coherence must be in [0, 1]")
        if not self.l_q > 0:
            raise ValueError("l_q must be > 0")
        object.__setattr__(self, "k", _vec2(self.k))


def apply_decoherence(state: CondensateState, dt: float, tau_coh: float) -> CondensateState:
    """Phenomenological contrast decay: coherence *= exp(-dt/tau_coh).

    Affects only peak visibility in imaging, never the mean wavevector.
    """
    if dt < 0:
        raise ValueError("dt must be >= 0")
    if not tau_coh > 0:
        raise ValueError("tau_coh must be > 0")
    return replace(state, coherence=state.coherence * math.exp(-dt / tau_coh))
