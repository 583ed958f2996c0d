"""Loss terms, the deterministic surface<->shadow mappings, and the dice metric.

The two mappings exploit the beam geometry: shadow is the columnwise
running maximum of the surface band (surface -> shadow), and the surface
band is the depth-directed dilation of the shadow's top edge (shadow ->
surface). Both are differentiable, so they can sit inside the consistency
loss that couples the two prediction heads.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import ConfigError, ContractError

BCE_CLAMP = 1e-7


@dataclass(frozen=True)
class MappingParams:
    """Band thickness t used by the shadow->surface dilation.

    Must match the generating phantom spec for the mappings to be exact
    oracles on ground truth.
    """

    band_thickness: int = 8

    def __post_init__(self):
        if self.band_thickness < 1:
            raise ConfigError("band_thickness must be >= 1")


def _pair(target, pred) -> tuple[torch.Tensor, torch.Tensor]:
    pred = torch.as_tensor(pred)
    target = torch.as_tensor(target, dtype=pred.dtype)
    if target.shape != pred.shape:
        raise ContractError(f"target shape {tuple(target.shape)} != prediction {tuple(pred.shape)}")
    return target, pred


def bce(target, pred) -> torch.Tensor:
    """Mean binary cross entropy over all pixels (and batch, if present).

    Predictions are clamped to [1e-7, 1 - 1e-7] before the logs.
    """
    target, pred = _pair(target, pred)
    pred = pred.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP)
    return -(target * torch.log(pred) + (1.0 - target) * torch.log(1.0 - pred)).mean()


def map_surface_to_shadow(pred, params: MappingParams | None = None) -> torch.Tensor:
    """Columnwise running maximum from the top: soft surface -> soft shadow."""
    pred = torch.as_tensor(pred)
    return torch.cummax(pred, dim=-2).values


def map_shadow_to_surface(pred, params: MappingParams) -> torch.Tensor:
    """Top-edge extraction plus depth-directed dilation: soft shadow -> soft surface.

    edge(x, y) = relu(pred(x, y) - pred(x, y-1)) with a zero row above the
    image; the band is recovered by taking, at each pixel, the maximum edge
    value over the t rows ending at it.
    """
    pred = torch.as_tensor(pred)
    zero_row = torch.zeros_like(pred[..., :1, :])
    edge = torch.relu(pred - torch.cat([zero_row, pred[..., :-1, :]], dim=-2))
    t = params.band_thickness
    if t == 1:
        return edge
    padded = torch.cat([torch.zeros_like(edge[..., : t - 1, :]), edge], dim=-2)
    return padded.unfold(-2, t, 1).max(dim=-1).values


def tcc_loss(y1, y2, y1_hat, y2_hat, params: MappingParams) -> torch.Tensor:
    """Task correspondence consistency loss.

    bce(y1, shadow->surface(y2_hat)) + bce(y2, surface->shadow(y1_hat));
    gradients reach both predictions through the mappings.
    """
    return bce(y1, map_shadow_to_surface(y2_hat, params)) + \
        bce(y2, map_surface_to_shadow(y1_hat, params))


@dataclass
class LossBreakdown:
    bce_surface: torch.Tensor
    bce_shadow: torch.Tensor
    tcc: torch.Tensor
    total: torch.Tensor

    def as_floats(self) -> dict[str, float]:
        return {
            "bce_surface": float(self.bce_surface),
            "bce_shadow": float(self.bce_shadow),
            "tcc": float(self.tcc),
            "total": float(self.total),
        }


def total_loss(y1, y2, y1_hat, y2_hat, params: MappingParams,
               tcc_enabled: bool = True) -> LossBreakdown:
    """Segmentation BCE for both tasks plus (optionally) the consistency term."""
    bce_surface = bce(y1, y1_hat)
    bce_shadow = bce(y2, y2_hat)
    if tcc_enabled:
        tcc = tcc_loss(y1, y2, y1_hat, y2_hat, params)
    else:
        tcc = torch.zeros_like(bce_surface)
    return LossBreakdown(bce_surface=bce_surface, bce_shadow=bce_shadow,
                         tcc=tcc, total=bce_surface + bce_shadow + tcc)


def dice(a, b) -> float:
    """Overlap 2|a&b| / (|a| + |b|) between binary masks; 1.0 when both empty."""
    a = torch.as_tensor(a)
    b = torch.as_tensor(b)
    if a.shape != b.shape:
        raise ContractError(f"mask shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    for name, m in (("a", a), ("b", b)):
        vals = torch.unique(m)
        if not bool(((vals == 0) | (vals == 1)).all()):
            raise ContractError(f"mask {name} must be binary")
    a = a.to(torch.float64)
    b = b.to(torch.float64)
    denom = float(a.sum() + b.sum())
    if denom == 0:
        return 1.0
    return float(2.0 * (a * b).sum() / denom)
