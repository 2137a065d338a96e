"""Synthetic differentiable feature-field generators with analytic oracles.

A scene is a sum of isotropic Gaussian blobs, each painting a fixed
channel signature; the optimization variable is the vector of blob
centers.  Centers live in latent units of ``latent_scale`` pixels so an
Adam step of the default learning rate moves content about one pixel.
The blob centers read back from the latent are exact ground truth for
where content "really" is, independent of any tracker.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence, Union

import numpy as np

from . import kernels
from .errors import ShapeError
from .tensor import Tensor


@dataclass(frozen=True)
class BlobSpec:
    """One Gaussian blob: unit-L2 channel signature, spread and height."""

    channel_signature: tuple
    sigma: float
    amplitude: float

    def __post_init__(self):
        sig = np.asarray(self.channel_signature, dtype=np.float64)
        object.__setattr__(self, "channel_signature", tuple(float(v) for v in sig))
        if self.sigma <= 0.5:
            raise ShapeError(f"blob sigma must exceed 0.5 px, got {self.sigma}")
        if self.amplitude <= 0:
            raise ShapeError("blob amplitude must be positive")
        norm = float(np.linalg.norm(sig))
        if abs(norm - 1.0) > 1e-6:
            raise ShapeError(f"channel signature must have unit L2 norm, got {norm:.6f}")


@dataclass(frozen=True)
class BlobSceneSpec:
    height: int
    width: int
    channels: int
    blobs: tuple
    background_noise_seed: int = 0
    noise_amplitude: float = 0.01
    latent_scale: float = 100.0

    def __post_init__(self):
        object.__setattr__(self, "blobs", tuple(self.blobs))
        if self.noise_amplitude < 0:
            raise ShapeError("noise amplitude must be >= 0")
        if self.latent_scale <= 0:
            raise ShapeError("latent scale must be positive")
        for i, b in enumerate(self.blobs):
            if len(b.channel_signature) != self.channels:
                raise ShapeError(
                    f"blob {i} signature has {len(b.channel_signature)} channels, "
                    f"scene has {self.channels}")

    @property
    def nblobs(self) -> int:
        return len(self.blobs)

    def signatures(self) -> np.ndarray:
        if not self.blobs:
            return np.zeros((0, self.channels))
        return np.array([b.channel_signature for b in self.blobs], dtype=np.float64)

    def sigmas(self) -> np.ndarray:
        return np.array([b.sigma for b in self.blobs], dtype=np.float64)

    def amplitudes(self) -> np.ndarray:
        return np.array([b.amplitude for b in self.blobs], dtype=np.float64)


@functools.lru_cache(maxsize=16)
def _noise_for(spec: BlobSceneSpec) -> np.ndarray:
    """Frozen background noise; never depends on the latent."""
    if spec.noise_amplitude == 0.0:
        return np.zeros((spec.channels, spec.height, spec.width))
    rng = np.random.default_rng(spec.background_noise_seed)
    return spec.noise_amplitude * rng.uniform(
        -1.0, 1.0, size=(spec.channels, spec.height, spec.width))


@dataclass
class LatentCode:
    """Blob centers in latent units; the drag loop's optimization variable."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if self.values.size % 2 != 0:
            raise ShapeError("latent length must be 2 x number of blobs")

    @classmethod
    def from_centers_px(cls, spec: BlobSceneSpec, centers_px) -> "LatentCode":
        arr = np.asarray(centers_px, dtype=np.float64).reshape(-1, 2)
        if arr.shape[0] != spec.nblobs:
            raise ShapeError(f"expected {spec.nblobs} centers, got {arr.shape[0]}")
        return cls(arr.reshape(-1) / spec.latent_scale)

    def copy(self) -> "LatentCode":
        return LatentCode(self.values.copy())


def _clamped_centers(spec: BlobSceneSpec, w_values: np.ndarray):
    """Pixel centers plus the pass-through mask for the clamp."""
    raw = w_values.reshape(-1, 2) * spec.latent_scale
    lo = np.array([0.0, 0.0])
    hi = np.array([spec.width - 1.0, spec.height - 1.0])
    clamped = np.clip(raw, lo, hi)
    interior = (raw > lo) & (raw < hi)
    return clamped, interior


@dataclass
class FeatureField:
    tensor: Tensor
    scenario_id: str = ""
    latent_snapshot: Optional[np.ndarray] = None

    @property
    def values(self) -> np.ndarray:
        return self.tensor.values


def generate(spec: BlobSceneSpec, w: Union[LatentCode, Tensor],
             scenario_id: str = "",
             cached_values: Optional[np.ndarray] = None) -> FeatureField:
    """Render the scene for a latent; differentiable when w is a Tensor.

    ``cached_values`` lets a caller that already holds the field for this
    exact latent (the engine regenerates after every update) skip the
    forward render; the backward path is unaffected.
    """
    w_tensor = w if isinstance(w, Tensor) else None
    w_values = w_tensor.values if w_tensor is not None else w.values
    if w_values.size != 2 * spec.nblobs:
        raise ShapeError(
            f"latent length {w_values.size} != 2 x {spec.nblobs} blobs")

    centers, interior = _clamped_centers(spec, w_values)
    if cached_values is not None:
        vals = cached_values
        out = Tensor(vals, requires_grad=w_tensor is not None
                     and w_tensor.requires_grad, _check=False)
    else:
        if spec.nblobs == 0:
            vals = np.zeros((spec.channels, spec.height, spec.width))
        else:
            vals = kernels.field_forward(centers, spec.sigmas(),
                                         spec.amplitudes(), spec.signatures(),
                                         spec.height, spec.width)
        noise = _noise_for(spec)
        if spec.noise_amplitude != 0.0:
            vals += noise
        out = Tensor(vals, requires_grad=w_tensor is not None
                     and w_tensor.requires_grad)
    if out.requires_grad:
        out._parents = (w_tensor,)

        def _bw():
            g_centers = kernels.field_backward(
                centers, spec.sigmas(), spec.amplitudes(), spec.signatures(),
                out.grad)
            g_centers = np.where(interior, g_centers, 0.0)
            w_tensor._accumulate(g_centers.reshape(-1) * spec.latent_scale,
                                 owned=True)

        out._backward = _bw
    return FeatureField(tensor=out, scenario_id=scenario_id,
                        latent_snapshot=np.array(w_values, copy=True))


def semantic_oracle(spec: BlobSceneSpec, w: Union[LatentCode, Tensor],
                    blob_index: int):
    """True pixel position of a blob's content, read straight off the latent."""
    w_values = w.values if isinstance(w, (LatentCode, Tensor)) else np.asarray(w)
    if not 0 <= blob_index < spec.nblobs:
        raise ShapeError(f"blob index {blob_index} out of range")
    centers, _ = _clamped_centers(spec, np.asarray(w_values, dtype=np.float64))
    return float(centers[blob_index, 0]), float(centers[blob_index, 1])


def default_projection(channels: int, seed: int = 7) -> np.ndarray:
    """Deterministic Cx3 projection spreading channels over distinct hues."""
    rng = np.random.default_rng(seed)
    hues = rng.permutation(channels) / max(channels, 1)
    proj = np.empty((channels, 3))
    for c in range(channels):
        h = hues[c] * 6.0
        proj[c] = np.clip([abs(h - 3) - 1, 2 - abs(h - 2), 2 - abs(h - 4)], 0, 1)
    return proj


def render_rgb(field: FeatureField, projection: Optional[np.ndarray] = None) -> np.ndarray:
    """Project channels to HxWx3 in [0, 1]; constant fields render mid-gray."""
    values = field.values
    channels = values.shape[0]
    if projection is None:
        projection = default_projection(channels)
    projection = np.asarray(projection, dtype=np.float64)
    if not np.all(np.isfinite(projection)):
        raise ShapeError("projection must be finite")
    if projection.shape != (channels, 3):
        raise ShapeError(f"projection must be {channels}x3, got {projection.shape}")
    img = np.einsum("chw,ck->hwk", values, projection)
    lo, hi = float(img.min()), float(img.max())
    if hi - lo < 1e-12:
        return np.full_like(img, 0.5)
    return (img - lo) / (hi - lo)
