"""Synthetic B-mode-like phantoms with paired surface/shadow ground truth.

Each sample places a bright, smoothly curved bone band over depth-attenuated
tissue texture; everything below the band is acoustic shadow. The shadow
mask is by construction the columnwise running maximum of the surface mask,
which makes the surface<->shadow mappings exactly invertible on this data.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, PhantomGeometryError
from .images import load_frame_png, load_mask_png, save_frame_png, save_mask_png
from .phase_filters import UltrasoundFrame

TISSUE_BASE = 0.55
BONE_BASE = 0.92
SHADOW_BASE = 0.025
MAX_GEOMETRY_RETRIES = 100


@dataclass(frozen=True)
class PhantomSpec:
    """Generation parameters. Ranges are (low, high) pairs; fractions of H or W."""

    height: int = 224
    width: int = 224
    band_thickness: int = 8
    surface_depth: tuple[float, float] = (0.35, 0.60)
    surface_curvature: tuple[float, float] = (0.02, 0.10)
    bone_extent: tuple[float, float] = (0.45, 0.90)
    speckle_strength: float = 0.25
    depth_attenuation: float = 1.2
    seed: int = 0

    def __post_init__(self):
        if self.height < 8 or self.width < 8:
            raise ConfigError("phantom must be at least 8x8")
        if self.band_thickness < 1:
            raise ConfigError("band_thickness must be >= 1")
        for name in ("surface_depth", "surface_curvature", "bone_extent"):
            lo, hi = getattr(self, name)
            if not (0.0 <= lo <= hi <= 1.0):
                raise ConfigError(f"{name} must satisfy 0 <= low <= high <= 1")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if not 0.0 <= self.speckle_strength <= 1.0:
            raise ConfigError("speckle_strength must lie in [0, 1]")
        if self.depth_attenuation <= 0:
            raise ConfigError("depth_attenuation must be positive")

    def to_dict(self) -> dict:
        return {
            "height": self.height,
            "width": self.width,
            "band_thickness": self.band_thickness,
            "surface_depth": list(self.surface_depth),
            "surface_curvature": list(self.surface_curvature),
            "bone_extent": list(self.bone_extent),
            "speckle_strength": self.speckle_strength,
            "depth_attenuation": self.depth_attenuation,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PhantomSpec":
        known = {"height", "width", "band_thickness", "surface_depth",
                 "surface_curvature", "bone_extent", "speckle_strength",
                 "depth_attenuation", "seed"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"phantom spec has unknown fields: {sorted(unknown)}")
        kwargs = dict(data)
        for name in ("surface_depth", "surface_curvature", "bone_extent"):
            if name in kwargs:
                kwargs[name] = tuple(kwargs[name])
        return cls(**kwargs)


@dataclass(frozen=True)
class Sample:
    frame: UltrasoundFrame
    y1: np.ndarray  # surface mask, {0,1} uint8
    y2: np.ndarray  # shadow mask, {0,1} uint8
    meta: dict

    def __post_init__(self):
        for name, mask in (("y1", self.y1), ("y2", self.y2)):
            if mask.shape != self.frame.shape:
                raise ContractError(f"{name} shape {mask.shape} != frame {self.frame.shape}")
            if not np.isin(mask, (0, 1)).all():
                raise ContractError(f"{name} must be binary")


def column_cummax(mask: np.ndarray) -> np.ndarray:
    """Running maximum down every column (shadow from a surface mask)."""
    return np.maximum.accumulate(np.asarray(mask), axis=0)


def _smooth_curve(rng: np.random.Generator, n: int) -> np.ndarray:
    """Random cubic polynomial over [0, 1], centered and scaled to [-1, 1]."""
    coeffs = rng.uniform(-1.0, 1.0, size=4)
    u = np.linspace(0.0, 1.0, n)
    p = coeffs[0] + coeffs[1] * u + coeffs[2] * u ** 2 + coeffs[3] * u ** 3
    p = p - p.mean()
    peak = np.abs(p).max()
    return p / peak if peak > 0 else p


def generate_sample(spec: PhantomSpec, seed: int) -> Sample:
    """Generate one phantom; identical bytes for identical (spec, seed)."""
    rng = np.random.default_rng([spec.seed & 0xFFFFFFFFFFFFFFFF, int(seed) & 0xFFFFFFFFFFFFFFFF])
    h, w, t = spec.height, spec.width, spec.band_thickness

    y1 = np.zeros((h, w), dtype=np.uint8)
    geometry: dict = {"has_bone": False}
    for attempt in range(MAX_GEOMETRY_RETRIES):
        extent_frac = rng.uniform(*spec.bone_extent)
        extent_px = int(round(extent_frac * w))
        if extent_px == 0:
            break
        x0 = int(rng.integers(0, w - extent_px + 1))
        depth_frac = rng.uniform(*spec.surface_depth)
        curv_frac = rng.uniform(*spec.surface_curvature)
        curve = _smooth_curve(rng, extent_px)
        r = depth_frac * h + curv_frac * h * curve
        r = np.clip(r, spec.surface_depth[0] * h, spec.surface_depth[1] * h)
        r = np.round(r).astype(int)
        if (r < 0).any() or (r + t > h).any():
            continue
        cols = np.arange(x0, x0 + extent_px)
        for k in range(t):
            y1[r + k, cols] = 1
        geometry = {
            "has_bone": True,
            "x0": x0,
            "extent_px": extent_px,
            "depth_frac": float(depth_frac),
            "curvature_frac": float(curv_frac),
        }
        break
    else:
        raise PhantomGeometryError(
            f"could not place a {t}-row band after {MAX_GEOMETRY_RETRIES} attempts "
            f"(depth range {spec.surface_depth}, height {h})")

    y2 = column_cummax(y1)

    depth = np.arange(h, dtype=np.float64)[:, None] / h
    frame = TISSUE_BASE * np.exp(-spec.depth_attenuation * depth) * np.ones((h, w))
    shadow_only = (y2 == 1) & (y1 == 0)
    frame[shadow_only] = SHADOW_BASE
    frame[y1 == 1] = BONE_BASE
    speckle = 1.0 + spec.speckle_strength * rng.standard_normal((h, w))
    frame = np.clip(frame * np.clip(speckle, 0.0, None), 0.0, 1.0)

    meta = {"seed": int(seed), "band_thickness": t, **geometry}
    return Sample(frame=UltrasoundFrame(frame), y1=y1, y2=y2, meta=meta)


def verify_consistency(sample: Sample) -> bool:
    """True iff y2 is exactly colcummax(y1) and every bone column has a t-row band."""
    if not np.array_equal(sample.y2, column_cummax(sample.y1)):
        return False
    t = sample.meta.get("band_thickness")
    if t is None:
        return False
    col_counts = sample.y1.sum(axis=0)
    return bool(np.isin(col_counts, (0, t)).all())


def _sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def generate_dataset(spec: PhantomSpec, n: int, out_dir: str,
                     group_size: int = 8) -> dict:
    """Write n samples (frame/surface/shadow PNGs + meta JSON) and a manifest.

    Samples are grouped into pseudo-subjects of `group_size` consecutive
    seeds; the group key drives leakage-free train/test splitting. Returns
    the manifest dict; the manifest file lands in out_dir/manifest.json.
    """
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    if group_size < 1:
        raise ConfigError("group_size must be >= 1")
    os.makedirs(out_dir, exist_ok=True)

    entries = []
    hasher = hashlib.sha256(json.dumps(spec.to_dict(), sort_keys=True).encode())
    for i in range(n):
        sample = generate_sample(spec, i)
        stem = f"sample_{i:05d}"
        files = {
            "frame": f"{stem}_frame.png",
            "surface_mask": f"{stem}_surface.png",
            "shadow_mask": f"{stem}_shadow.png",
            "meta": f"{stem}_meta.json",
        }
        save_frame_png(sample.frame.pixels, os.path.join(out_dir, files["frame"]))
        save_mask_png(sample.y1, os.path.join(out_dir, files["surface_mask"]))
        save_mask_png(sample.y2, os.path.join(out_dir, files["shadow_mask"]))
        with open(os.path.join(out_dir, files["meta"]), "w") as f:
            json.dump(sample.meta, f, indent=2, sort_keys=True)
        for key in ("frame", "surface_mask", "shadow_mask", "meta"):
            hasher.update(_sha256_file(os.path.join(out_dir, files[key])).encode())
        entries.append({"index": i, "seed": i, "group": i // group_size, **files})

    manifest = {
        "kind": "phantom-dataset",
        "spec": spec.to_dict(),
        "n": n,
        "group_size": group_size,
        "samples": entries,
        "content_hash": hasher.hexdigest(),
    }
    manifest_path = os.path.join(out_dir, "manifest.json")
    tmp = manifest_path + ".tmp"
    with open(tmp, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    os.replace(tmp, manifest_path)
    return manifest


def load_sample(manifest: dict, base_dir: str, index: int) -> Sample:
    """Re-load one sample listed in a dataset manifest."""
    entry = manifest["samples"][index]
    frame = load_frame_png(os.path.join(base_dir, entry["frame"]))
    y1 = load_mask_png(os.path.join(base_dir, entry["surface_mask"]))
    y2 = load_mask_png(os.path.join(base_dir, entry["shadow_mask"]))
    with open(os.path.join(base_dir, entry["meta"])) as f:
        meta = json.load(f)
    return Sample(frame=UltrasoundFrame(frame), y1=y1, y2=y2, meta=meta)


def load_manifest(path: str) -> tuple[dict, str]:
    """Read a dataset manifest; returns (manifest, base_dir)."""
    if os.path.isdir(path):
        path = os.path.join(path, "manifest.json")
    with open(path) as f:
        manifest = json.load(f)
    if manifest.get("kind") != "phantom-dataset":
        raise ConfigError(f"{path} is not a phantom dataset manifest")
    return manifest, os.path.dirname(os.path.abspath(path))
