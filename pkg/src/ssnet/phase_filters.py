"""Local-phase filtering of B-mode ultrasound frames.

Produces the three filtered images that accompany the raw B-mode scan as
network input: the local phase tensor image (LPT), the local phase bone
image (LP = LPT * LPE * LwPA built from monogenic-signal responses), and
the bone shadow enhanced image (BSE), assembled into a 4-channel stack.

All operations are pure functions over float64 grids; identical inputs give
identical outputs.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ConfigError, ContractError, FilterParameterError

# Relative bandwidth of the log-Gabor band-pass (sigma_f / f0). Standard
# 2-octave-ish choice; not exposed in FilterParams.
LOG_GABOR_SIGMA_ON_F = 0.55

STACK_CHANNELS = ("bmode", "lpt", "lp", "bse")


@dataclass(frozen=True)
class UltrasoundFrame:
    """A single-channel B-mode intensity grid.

    Rows are the depth axis: increasing row index means increasing depth
    along the beam. Pixel values must already be normalized to [0, 1].
    """

    pixels: np.ndarray
    mm_per_pixel: float | None = None

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2:
            raise ContractError(f"frame must be 2-D, got shape {px.shape}")
        h, w = px.shape
        if h < 8 or w < 8:
            raise ContractError(f"frame must be at least 8x8, got {h}x{w}")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ContractError("frame intensities must lie in [0, 1]")
        if self.mm_per_pixel is not None and self.mm_per_pixel <= 0:
            raise ContractError("mm_per_pixel must be positive")
        object.__setattr__(self, "pixels", px)

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape


@dataclass(frozen=True)
class FilterParams:
    """Parameters of the filtering pipeline.

    scales are band-pass wavelengths in pixels (strictly increasing);
    delta is the tissue attenuation coefficient, rho the echogenicity
    constant and epsilon the division floor of the shadow-enhancement
    formula; attenuation_alpha controls the confidence-map decay;
    usa_window is the side of the local-maximum neighborhood.
    """

    scales: tuple[float, ...] = (16.0, 32.0, 64.0)
    gaussian_sigma: float = 2.0
    attenuation_alpha: float = 0.25
    delta: float = 1.0
    rho: float = 0.1
    epsilon: float = 0.01
    usa_window: int = 7

    def __post_init__(self):
        scales = tuple(float(s) for s in self.scales)
        if len(scales) == 0:
            raise ConfigError("scales must be non-empty")
        if any(s <= 0 for s in scales):
            raise ConfigError("scales must be positive")
        if any(b <= a for a, b in zip(scales, scales[1:])):
            raise ConfigError(f"scales must be strictly increasing, got {scales}")
        if self.gaussian_sigma <= 0:
            raise ConfigError("gaussian_sigma must be positive")
        if self.attenuation_alpha <= 0:
            raise ConfigError("attenuation_alpha must be positive")
        if self.delta <= 0:
            raise ConfigError("delta must be positive")
        if not 0.0 <= self.rho < 1.0:
            raise ConfigError("rho must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        if self.usa_window < 1 or self.usa_window % 2 == 0:
            raise ConfigError("usa_window must be an odd integer >= 1")
        object.__setattr__(self, "scales", scales)

    def to_dict(self) -> dict:
        return {
            "scales": list(self.scales),
            "gaussian_sigma": self.gaussian_sigma,
            "attenuation_alpha": self.attenuation_alpha,
            "delta": self.delta,
            "rho": self.rho,
            "epsilon": self.epsilon,
            "usa_window": self.usa_window,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FilterParams":
        required = {"scales", "gaussian_sigma", "attenuation_alpha", "delta",
                    "rho", "epsilon", "usa_window"}
        missing = required - set(data)
        if missing:
            raise ConfigError(f"filter params missing fields: {sorted(missing)}")
        unknown = set(data) - required
        if unknown:
            raise ConfigError(f"filter params has unknown fields: {sorted(unknown)}")
        return cls(
            scales=tuple(data["scales"]),
            gaussian_sigma=float(data["gaussian_sigma"]),
            attenuation_alpha=float(data["attenuation_alpha"]),
            delta=float(data["delta"]),
            rho=float(data["rho"]),
            epsilon=float(data["epsilon"]),
            usa_window=int(data["usa_window"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FilterParams":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class MonogenicResponses:
    """Per-scale even (band-pass) and odd (Riesz pair) filter responses."""

    scales: tuple[float, ...]
    even: np.ndarray   # (S, H, W)
    odd1: np.ndarray   # (S, H, W) Riesz component along rows
    odd2: np.ndarray   # (S, H, W) Riesz component along columns

    def __post_init__(self):
        if not (self.even.shape == self.odd1.shape == self.odd2.shape):
            raise ContractError("monogenic response grids must share one shape")
        if self.even.ndim != 3 or self.even.shape[0] != len(self.scales):
            raise ContractError("responses must be stacked (scales, H, W)")


@dataclass(frozen=True)
class FilterStack:
    """The 4-channel network input: (bmode, lpt, lp, bse), aligned, each in [0, 1]."""

    bmode: np.ndarray
    lpt: np.ndarray
    lp: np.ndarray
    bse: np.ndarray
    params: FilterParams | None = None

    def __post_init__(self):
        shapes = {self.bmode.shape, self.lpt.shape, self.lp.shape, self.bse.shape}
        if len(shapes) != 1:
            raise ContractError(f"stack channels disagree on shape: {shapes}")
        for name in STACK_CHANNELS:
            ch = getattr(self, name)
            if ch.min() < 0.0 or ch.max() > 1.0:
                raise ContractError(f"stack channel '{name}' leaves [0, 1]")

    @property
    def shape(self) -> tuple[int, int]:
        return self.bmode.shape

    def as_array(self, dtype=np.float32) -> np.ndarray:
        """Channel-major (4, H, W) array."""
        return np.stack([self.bmode, self.lpt, self.lp, self.bse]).astype(dtype)


def _normalize_max(grid: np.ndarray) -> np.ndarray:
    """Divide by the grid maximum; degenerate all-zero grids stay zero."""
    m = grid.max()
    return grid / m if m > 0 else grid.copy()


def _normalize_minmax(grid: np.ndarray) -> np.ndarray:
    """Affine map onto [0, 1]; constant grids map to zero."""
    lo, hi = grid.min(), grid.max()
    if hi - lo <= 0:
        return np.zeros_like(grid)
    return (grid - lo) / (hi - lo)


def _log_gabor(freq_radius: np.ndarray, wavelength: float) -> np.ndarray:
    f0 = 1.0 / wavelength
    with np.errstate(divide="ignore"):
        g = np.exp(-(np.log(freq_radius / f0) ** 2)
                   / (2.0 * np.log(LOG_GABOR_SIGMA_ON_F) ** 2))
    g[freq_radius == 0] = 0.0  # kill DC
    return g


def bandpass_monogenic(frame: UltrasoundFrame, params: FilterParams) -> MonogenicResponses:
    """Band-pass the frame at each scale and attach the Riesz quadrature pair.

    For each wavelength the even response is the log-Gabor band-passed
    image; the odd pair is its Riesz transform, computed in the frequency
    domain with kernels i*u/|u| applied to the band-passed spectrum.
    """
    h, w = frame.shape
    limit = min(h, w) / 2.0
    for s in params.scales:
        if s > limit:
            raise FilterParameterError(
                f"scale {s} px does not fit a {h}x{w} frame (max allowed {limit})")

    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    radius = np.sqrt(fy ** 2 + fx ** 2)
    safe_radius = np.where(radius == 0, 1.0, radius)
    riesz1 = 1j * fy / safe_radius  # row (depth) direction
    riesz2 = 1j * fx / safe_radius  # column (lateral) direction

    spectrum = np.fft.fft2(frame.pixels)
    even = np.empty((len(params.scales), h, w), dtype=np.float64)
    odd1 = np.empty_like(even)
    odd2 = np.empty_like(even)
    for i, s in enumerate(params.scales):
        band = spectrum * _log_gabor(radius, s)
        even[i] = np.fft.ifft2(band).real
        odd1[i] = np.fft.ifft2(band * riesz1).real
        odd2[i] = np.fft.ifft2(band * riesz2).real
    return MonogenicResponses(scales=params.scales, even=even, odd1=odd1, odd2=odd2)


def compute_lpe(m: MonogenicResponses) -> np.ndarray:
    """Local phase energy: clamped even-minus-odd energy, summed over scales.

    LPE = max(0, sum_s(|even_s| - sqrt(odd1_s^2 + odd2_s^2))), rescaled by
    its maximum so the result lies in [0, 1].
    """
    odd_mag = np.sqrt(m.odd1 ** 2 + m.odd2 ** 2)
    raw = np.maximum(0.0, (np.abs(m.even) - odd_mag).sum(axis=0))
    return _normalize_max(raw)


def compute_lwpa(m: MonogenicResponses) -> np.ndarray:
    """Local weighted mean phase angle mapped from [-pi/2, pi/2] onto [0, 1].

    The angle is atan2 of the scale-summed even response against the
    magnitude of the scale-summed odd responses, so 0.5 marks pure odd
    structure and 1.0 pure positive even (ridge-like) structure.
    """
    even_sum = m.even.sum(axis=0)
    odd1_sum = m.odd1.sum(axis=0)
    odd2_sum = m.odd2.sum(axis=0)
    angle = np.arctan2(even_sum, np.sqrt(odd1_sum ** 2 + odd2_sum ** 2))
    return (angle + np.pi / 2.0) / np.pi


def compute_lpt(frame: UltrasoundFrame, params: FilterParams) -> np.ndarray:
    """Local phase tensor image from even/odd derivative responses.

    even = |Laplacian-of-Gaussian|, odd = gradient magnitude of the
    Gaussian-smoothed frame; LPT = sqrt(even^2 + odd^2) rescaled by its
    maximum.
    """
    sigma = params.gaussian_sigma
    even = np.abs(ndimage.gaussian_laplace(frame.pixels, sigma))
    gy = ndimage.gaussian_filter(frame.pixels, sigma, order=(1, 0))
    gx = ndimage.gaussian_filter(frame.pixels, sigma, order=(0, 1))
    odd = np.sqrt(gy ** 2 + gx ** 2)
    return _normalize_max(np.sqrt(even ** 2 + odd ** 2))


def compute_lp(lpt: np.ndarray, lpe: np.ndarray, lwpa: np.ndarray,
               normalize: bool = True) -> np.ndarray:
    """Local phase bone image: pointwise LPT * LPE * LwPA.

    With normalize=True (the stack path) the product is rescaled by its
    maximum; normalize=False returns the raw product.
    """
    if not (lpt.shape == lpe.shape == lwpa.shape):
        raise ContractError(
            f"lp factors disagree on shape: {lpt.shape}, {lpe.shape}, {lwpa.shape}")
    product = lpt * lpe * lwpa
    return _normalize_max(product) if normalize else product


def compute_confidence_map(lp: np.ndarray, params: FilterParams) -> np.ndarray:
    """Remaining signal confidence per pixel under columnwise attenuation.

    CM(x, y) = exp(-alpha * sum of lp over rows 0..y of the column), so
    each column starts at <= 1 and never increases with depth.
    """
    lp = np.asarray(lp, dtype=np.float64)
    if lp.min() < 0.0 or lp.max() > 1.0:
        raise ContractError("lp must lie in [0, 1]")
    return np.exp(-params.attenuation_alpha * np.cumsum(lp, axis=0))


def compute_us_a(frame: UltrasoundFrame, params: FilterParams) -> np.ndarray:
    """Local-maximum filtered B-mode (window usa_window, replicate border)."""
    h, w = frame.shape
    if params.usa_window > min(h, w):
        raise FilterParameterError(
            f"usa_window {params.usa_window} exceeds frame size {h}x{w}")
    return ndimage.maximum_filter(frame.pixels, size=params.usa_window, mode="nearest")


def compute_bse(cm: np.ndarray, us_a: np.ndarray, params: FilterParams,
                normalize: bool = True) -> np.ndarray:
    """Bone shadow enhanced image.

    BSE(x, y) = (CM(x, y) - rho) / max(US_A(x, y), epsilon)^delta + rho,
    evaluated pointwise. With normalize=True the result is min-max mapped
    onto [0, 1] for use as a stack channel; normalize=False returns the raw
    formula values.
    """
    cm = np.asarray(cm, dtype=np.float64)
    us_a = np.asarray(us_a, dtype=np.float64)
    if cm.shape != us_a.shape:
        raise ContractError(f"cm/us_a shape mismatch: {cm.shape} vs {us_a.shape}")
    raw = (cm - params.rho) / np.maximum(us_a, params.epsilon) ** params.delta + params.rho
    return _normalize_minmax(raw) if normalize else raw


def build_stack(frame: UltrasoundFrame, params: FilterParams) -> FilterStack:
    """Assemble the 4-channel input stack (bmode, lpt, lp, bse).

    Each filtered channel is normalized independently; the B-mode channel
    is passed through unchanged (already in [0, 1]). Deterministic for
    identical (frame, params).
    """
    lpt = compute_lpt(frame, params)
    responses = bandpass_monogenic(frame, params)
    lpe = compute_lpe(responses)
    lwpa = compute_lwpa(responses)
    lp = compute_lp(lpt, lpe, lwpa)
    cm = compute_confidence_map(lp, params)
    us_a = compute_us_a(frame, params)
    bse = compute_bse(cm, us_a, params)
    return FilterStack(bmode=frame.pixels.copy(), lpt=lpt, lp=lp, bse=bse, params=params)


def save_stack(stack: FilterStack, path: str) -> None:
    """Persist a stack as flat little-endian float32 plus a JSON sidecar.

    `path` is the binary file; the sidecar is written next to it with a
    `.json` suffix appended.
    """
    arr = stack.as_array(dtype="<f4")
    with open(path, "wb") as f:
        f.write(arr.tobytes(order="C"))
    sidecar = {
        "shape": [4, *stack.shape],
        "channels": list(STACK_CHANNELS),
        "params": stack.params.to_dict() if stack.params is not None else None,
    }
    with open(path + ".json", "w") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)


def load_stack(path: str) -> FilterStack:
    """Load a stack written by save_stack."""
    with open(path + ".json") as f:
        sidecar = json.load(f)
    shape = sidecar["shape"]
    if len(shape) != 3 or shape[0] != 4:
        raise ConfigError(f"stack sidecar has bad shape {shape}")
    if sidecar.get("channels") != list(STACK_CHANNELS):
        raise ConfigError(f"stack sidecar has bad channels {sidecar.get('channels')}")
    expected = 4 * shape[1] * shape[2] * 4
    size = os.path.getsize(path)
    if size != expected:
        raise ConfigError(f"stack binary is {size} bytes, expected {expected}")
    arr = np.fromfile(path, dtype="<f4").reshape(shape).astype(np.float64)
    params = sidecar.get("params")
    return FilterStack(
        bmode=arr[0], lpt=arr[1], lp=arr[2], bse=arr[3],
        params=FilterParams.from_dict(params) if params else None,
    )
