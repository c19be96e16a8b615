"""Synthetic time-of-flight readout of the condensate wavevector.

The far-field TOF image is modeled directly in k-space: the condensed part
appears as sharp Gaussian Bragg copies at the reciprocal-lattice translates
of the quasi-momentum, the uncondensed part as one broad thermal Gaussian,
and every pixel is an independent Poisson draw around that mean. A windowed
2D Gaussian + offset least-squares fit reads the wavevector back out with
an uncertainty from the fit covariance.

Pixel means and the fit model both use exact per-pixel integrals of the
Gaussian (erf differences), so a noiseless image is represented exactly by
the fit model.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit
from scipy.special import ndtr

from .dynamics import CondensateState
from .lattice import ReciprocalLattice, bragg_peak_shells

__all__ = [
    "ImagingConfig",
    "TofImage",
    "PeakFitResult",
    "DifferentialFitError",
    "expected_tof",
    "synthesize_tof",
    "fit_peak",
    "differential_wavevector",
]

_MAGIC = b"TOFI"


@dataclass(frozen=True)
class ImagingConfig:
    """Detector grid and forward-model widths (all k quantities in m^-1)."""

    nx: int
    ny: int
    k_per_pixel: float
    peak_sigma_k: float  # rms width of a Bragg peak
    thermal_sigma_k: float  # rms width of the thermal cloud
    shell_cutoff: int = 1
    peak_weight_decay: float = 0.15  # relative weight per Bragg shell
    centering_jitter_k: float = 0.0  # rms per-shot common offset, per component

    def __post_init__(self):
        if self.nx < 16 or self.ny < 16:
            raise ValueError("grid must be at least 16x16 pixels")
        if not self.k_per_pixel > 0:
            raise ValueError("k_per_pixel must be > 0")
        if not self.peak_sigma_k > 0:
            raise ValueError("peak_sigma_k must be > 0")
        if not self.thermal_sigma_k > self.peak_sigma_k:
            raise ValueError("thermal_sigma_k must exceed peak_sigma_k")
        if self.shell_cutoff < 0:
            raise ValueError("shell_cutoff must be >= 0")
        if self.centering_jitter_k < 0:
            raise ValueError("centering_jitter_k must be >= 0")

    @classmethod
    def for_lattice(cls, lat: ReciprocalLattice, nx: int = 256, ny: int = 256,
                    **overrides) -> "ImagingConfig":
        """Defaults scaled to the lattice: |b1|/64 per pixel, ~1.6 px peak rms."""
        b = lat.b_norm
        params = dict(nx=nx, ny=ny, k_per_pixel=b / 64.0, peak_sigma_k=b / 40.0,
                      thermal_sigma_k=b / 4.0)
        params.update(overrides)
        return cls(**params)

    def with_jitter(self, centering_jitter_k: float) -> "ImagingConfig":
        return replace(self, centering_jitter_k=centering_jitter_k)


@dataclass(frozen=True, eq=False)
class TofImage:
    """Pixel grid of atom counts with its k-space calibration.

    counts[j, i] is the count at k = k_origin + (i, j) * k_per_pixel, i.e.
    rows run along ky and columns along kx.
    """

    counts: np.ndarray  # (ny, nx) nonnegative
    k_origin: np.ndarray  # (2,) k of pixel (i=0, j=0)
    k_per_pixel: float

    @property
    def nx(self) -> int:
        return self.counts.shape[1]

    @property
    def ny(self) -> int:
        return self.counts.shape[0]

    @property
    def kx_centers(self) -> np.ndarray:
        return self.k_origin[0] + np.arange(self.nx) * self.k_per_pixel

    @property
    def ky_centers(self) -> np.ndarray:
        return self.k_origin[1] + np.arange(self.ny) * self.k_per_pixel

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    def contains(self, k) -> bool:
        k = np.asarray(k, dtype=float)
        kx, ky = self.kx_centers, self.ky_centers
        return bool(kx[0] <= k[0] <= kx[-1] and ky[0] <= k[1] <= ky[-1])

    def save(self, path) -> None:
        """Write the binary grid format: 16-byte header + row-major f64 counts."""
        header = struct.pack("<4sIIf", _MAGIC, self.nx, self.ny,
                             float(self.k_per_pixel))
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(self.counts, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "TofImage":
        """Read the binary grid format.

        The header carries no origin, so the grid is reconstructed centered
        on k = 0 — the only convention synthesize_tof produces.
        """
        with open(path, "rb") as fh:
            header = fh.read(16)
            if len(header) != 16 or header[:4] != _MAGIC:
                raise ValueError(f"not a TOF image file: {path}")
            _, nx, ny, kpp = struct.unpack("<4sIIf", header)
            payload = fh.read()
        if len(payload) != 8 * nx * ny:
            raise ValueError(f"truncated TOF image file: {path}")
        counts = np.frombuffer(payload, dtype="<f8")
        kpp = float(kpp)
        origin = np.array([-(nx - 1) / 2.0 * kpp, -(ny - 1) / 2.0 * kpp])
        return cls(counts=counts.reshape(ny, nx).copy(), k_origin=origin,
                   k_per_pixel=kpp)

    def to_csv(self, path) -> None:
        """Plain CSV of the count grid, one image row per line, for inspection."""
        np.savetxt(path, self.counts, delimiter=",", fmt="%.17g")


def _pixel_profile(centers: np.ndarray, mu: float, sigma: float,
                   pixel: float) -> np.ndarray:
    """Integral of a unit-mass 1D Gaussian over each pixel."""
    lo = (centers - 0.5 * pixel - mu) / sigma
    hi = (centers + 0.5 * pixel - mu) / sigma
    return ndtr(hi) - ndtr(lo)


def _pixel_profile_grad(centers: np.ndarray, mu: float, sigma: float,
                        pixel: float):
    """Pixel integral of a 1D Gaussian and its d/dmu, d/dsigma."""
    lo = (centers - 0.5 * pixel - mu) / sigma
    hi = (centers + 0.5 * pixel - mu) / sigma
    phi_lo = np.exp(-0.5 * lo ** 2) / math.sqrt(2.0 * math.pi)
    phi_hi = np.exp(-0.5 * hi ** 2) / math.sqrt(2.0 * math.pi)
    g = ndtr(hi) - ndtr(lo)
    dmu = -(phi_hi - phi_lo) / sigma
    dsigma = -(phi_hi * hi - phi_lo * lo) / sigma
    return g, dmu, dsigma


def expected_tof(state: CondensateState, lat: ReciprocalLattice,
                 cfg: ImagingConfig, jitter=(0.0, 0.0)) -> np.ndarray:
    """Noise-free mean image (ny, nx) for the given shot offset.

    Condensate weight n0 * fraction * coherence is split over the Bragg
    copies with geometric per-shell decay; the remainder sits in one broad
    thermal Gaussian at the FBZ origin. The whole pattern is shifted by
    `jitter`.
    """
    jitter = np.asarray(jitter, dtype=float)
    kpp = cfg.k_per_pixel
    kx = (np.arange(cfg.nx) - (cfg.nx - 1) / 2.0) * kpp
    ky = (np.arange(cfg.ny) - (cfg.ny - 1) / 2.0) * kpp

    peaks, shells = bragg_peak_shells(lat, cfg.shell_cutoff)
    peaks = peaks + state.k[None, :]
    for p in peaks:
        if not (kx[0] <= p[0] <= kx[-1] and ky[0] <= p[1] <= ky[-1]):
            raise ValueError(
                f"Bragg peak at {p} lies outside the image grid; "
                f"grid must cover shell_cutoff={cfg.shell_cutoff} shells")

    weights = cfg.peak_weight_decay ** shells.astype(float)
    weights = weights / weights.sum()
    n_coh = state.n0 * state.condensate_fraction * state.coherence

    mean = np.zeros((cfg.ny, cfg.nx))
    for p, w in zip(peaks, weights):
        px = _pixel_profile(kx, p[0] + jitter[0], cfg.peak_sigma_k, kpp)
        py = _pixel_profile(ky, p[1] + jitter[1], cfg.peak_sigma_k, kpp)
        mean += (n_coh * w) * np.outer(py, px)

    n_th = state.n0 - n_coh
    tx = _pixel_profile(kx, jitter[0], cfg.thermal_sigma_k, kpp)
    ty = _pixel_profile(ky, jitter[1], cfg.thermal_sigma_k, kpp)
    mean += n_th * np.outer(ty, tx)
    return mean


def synthesize_tof(state: CondensateState, lat: ReciprocalLattice,
                   cfg: ImagingConfig, seed, jitter=None) -> TofImage:
    """One simulated shot: Poisson pixel counts around the expected image.

    Deterministic given (inputs, seed). `jitter` overrides the per-shot
    random centering offset; passing the same realization to two shots
    models a common-mode (paired) measurement.
    """
    rng = np.random.default_rng(seed)
    if jitter is None:
        jitter = rng.normal(0.0, cfg.centering_jitter_k, size=2) \
            if cfg.centering_jitter_k > 0 else np.zeros(2)
    mean = expected_tof(state, lat, cfg, jitter=jitter)
    counts = rng.poisson(mean).astype(float)
    kpp = cfg.k_per_pixel
    origin = np.array([-(cfg.nx - 1) / 2.0 * kpp, -(cfg.ny - 1) / 2.0 * kpp])
    return TofImage(counts=counts, k_origin=origin, k_per_pixel=kpp)


@dataclass(frozen=True, eq=False)
class PeakFitResult:
    """Windowed Gaussian-peak fit: center, 1-sigma uncertainty, diagnostics."""

    k_hat: np.ndarray  # (2,) m^-1
    sigma_k: np.ndarray  # (2,) m^-1
    amplitude: float  # integrated counts in the peak
    converged: bool
    residual_norm: float  # rms of noise-normalized residuals (~1 for pure shot noise)


class DifferentialFitError(RuntimeError):
    """Raised when either shot of a differential pair fails to fit."""

    def __init__(self, ref_result: PeakFitResult, sig_result: PeakFitResult):
        super().__init__("differential wavevector fit did not converge")
        self.ref_result = ref_result
        self.sig_result = sig_result


def _failed_fit() -> PeakFitResult:
    nan2 = np.full(2, np.nan)
    return PeakFitResult(k_hat=nan2, sigma_k=nan2.copy(), amplitude=np.nan,
                         converged=False, residual_norm=np.nan)


def fit_peak(img: TofImage, guess, window_k: float) -> PeakFitResult:
    """Least-squares 2D Gaussian + constant offset over a window around `guess`.

    The model value of pixel (i, j) is A * gx(i) * gy(j) + c with gx, gy the
    exact per-pixel Gaussian integrals, so A is the integrated peak count.
    Two Levenberg-Marquardt passes, each with a 100-iteration budget: an
    unweighted pass to locate the peak, then a refit weighted by the Poisson
    noise of the pass-1 model, which makes sigma_k an honest shot-noise
    uncertainty. converged is False when the budget is exhausted, the
    covariance is unusable, or the center left the image.
    """
    guess = np.asarray(guess, dtype=float)
    if not img.contains(guess):
        raise ValueError(f"guess {guess} lies outside the image")
    kx, ky = img.kx_centers, img.ky_centers
    ix = np.flatnonzero(np.abs(kx - guess[0]) <= window_k)
    iy = np.flatnonzero(np.abs(ky - guess[1]) <= window_k)
    if ix.size < 5 or iy.size < 5:
        raise ValueError("fit window is too small; increase window_k")
    kpp = img.k_per_pixel
    # Work in pixel offsets from the guess: O(1) parameters keep the
    # finite-difference Jacobian well conditioned at any k scale.
    wx = (kx[ix] - guess[0]) / kpp
    wy = (ky[iy] - guess[1]) / kpp
    win = img.counts[np.ix_(iy, ix)].astype(float)
    half_w = window_k / kpp

    # Moment-based starting point on the offset-subtracted window.
    c0 = float(np.percentile(win, 10.0))
    resid = np.clip(win - c0, 0.0, None)
    total = float(resid.sum())
    if total <= 0:
        total = 1.0
        x0 = y0 = 0.0
        sx0 = sy0 = 2.0
    else:
        x0 = float((resid.sum(axis=0) * wx).sum() / total)
        y0 = float((resid.sum(axis=1) * wy).sum() / total)
        sx0 = float(np.sqrt(np.clip((resid.sum(axis=0) * (wx - x0) ** 2).sum()
                                    / total, 0.09, half_w ** 2)))
        sy0 = float(np.sqrt(np.clip((resid.sum(axis=1) * (wy - y0) ** 2).sum()
                                    / total, 0.09, half_w ** 2)))
    p0 = (total, x0, y0, sx0, sy0, c0)

    def model(_x, amp, mx, my, sx, sy, c):
        gx = _pixel_profile(wx, mx, abs(sx), 1.0)
        gy = _pixel_profile(wy, my, abs(sy), 1.0)
        return (amp * np.outer(gy, gx) + c).ravel()

    def jac(_x, amp, mx, my, sx, sy, c):
        ssx, ssy = abs(sx), abs(sy)
        gx, gx_dm, gx_ds = _pixel_profile_grad(wx, mx, ssx, 1.0)
        gy, gy_dm, gy_ds = _pixel_profile_grad(wy, my, ssy, 1.0)
        cols = np.empty((gy.size * gx.size, 6))
        cols[:, 0] = np.outer(gy, gx).ravel()
        cols[:, 1] = amp * np.outer(gy, gx_dm).ravel()
        cols[:, 2] = amp * np.outer(gy_dm, gx).ravel()
        cols[:, 3] = amp * math.copysign(1.0, sx) * np.outer(gy, gx_ds).ravel()
        cols[:, 4] = amp * math.copysign(1.0, sy) * np.outer(gy_ds, gx).ravel()
        cols[:, 5] = 1.0
        return cols

    maxfev = 100 * (len(p0) + 1)
    data = win.ravel()
    try:
        with warnings.catch_warnings():
            # Convergence is judged from the returned covariance below.
            warnings.simplefilter("ignore", OptimizeWarning)
            p1, _ = curve_fit(model, None, data, p0=p0, jac=jac, method="lm",
                              maxfev=maxfev)
            noise = np.sqrt(np.clip(model(None, *p1), 1.0, None))
            popt, pcov = curve_fit(model, None, data, p0=p1, sigma=noise,
                                   absolute_sigma=True, jac=jac, method="lm",
                                   maxfev=maxfev)
    except RuntimeError:
        return _failed_fit()

    amp, mx, my, sx, sy, c = popt
    k_hat = guess + np.array([mx, my]) * kpp
    var = np.diag(pcov)[[1, 2]]
    # A usable fit: finite positive covariance, a real (positive) peak, a
    # center uncertainty smaller than the window, and a center in bounds.
    ok = (np.all(np.isfinite(pcov)) and np.all(var > 0) and amp > 0
          and np.all(np.sqrt(var) < 2 * half_w)
          and img.contains(k_hat))
    resid_norm = float(np.sqrt(np.mean(((model(None, *popt) - data) / noise) ** 2)))
    return PeakFitResult(
        k_hat=k_hat,
        sigma_k=np.sqrt(np.abs(var)) * kpp,
        amplitude=float(amp),
        converged=bool(ok),
        residual_norm=resid_norm,
    )


def differential_wavevector(img_ref: TofImage, img_sig: TofImage, guess,
                            window_k: float, guess_ref=None):
    """Wavevector difference between a signal and a reference shot.

    Returns (dk, sigma): dk = k_hat(sig) - k_hat(ref) and sigma the
    per-component quadrature sum of the two fit uncertainties. `guess`
    centers the signal window; the reference window defaults to the same
    guess (use guess_ref=(0, 0) for the background-free reference shot).
    Common-mode centering jitter cancels only when the two shots share a
    jitter realization; with independent shots it adds to the true error in
    quadrature on top of the returned fit sigma.
    """
    ref = fit_peak(img_ref, guess if guess_ref is None else guess_ref, window_k)
    sig = fit_peak(img_sig, guess, window_k)
    if not (ref.converged and sig.converged):
        raise DifferentialFitError(ref, sig)
    dk = sig.k_hat - ref.k_hat
    sigma = np.sqrt(ref.sigma_k ** 2 + sig.sigma_k ** 2)
    return dk, sigma
