"""Orbit cameras, pinhole ray casting and region sub-frustum cropping.

The subject sits at the origin facing +y; cameras orbit the origin with +z
as the world up axis. yaw = 0 places the camera on the +y axis, so a
head-on portrait view, and mirroring a camera about the yz-plane is simply
yaw -> -yaw.

A camera can carry a crop window (used for region-aware rendering): its
h x h ray grid then covers exactly the sub-frustum of a normalized image
box instead of the full frame. When the window is aligned with a coarser
pixel grid, rays are generated via the same arithmetic as the full-frame
grid so the two ray sets match bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import torch

REGION_NAMES = ("left_eye", "right_eye", "nose", "mouth")

_ALIGN_EPS = 1e-9


@dataclass(frozen=True)
class Camera:
    yaw: float = 0.0
    pitch: float = 0.0
    radius: float = 2.7
    fov_y: float = 0.6
    # crop window in normalized image coords: (u_lo, v_lo, scale); full frame = (0, 0, 1)
    window: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if abs(self.pitch) >= math.pi / 2:
            raise ValueError("pitch must satisfy |pitch| < pi/2")
        if not 0 < self.fov_y < math.pi:
            raise ValueError("fov_y must lie in (0, pi)")
        u0, v0, s = self.window
        if s <= 0 or u0 < -_ALIGN_EPS or v0 < -_ALIGN_EPS or u0 + s > 1 + _ALIGN_EPS or v0 + s > 1 + _ALIGN_EPS:
            raise ValueError(f"window {self.window} does not lie inside the image")

    @property
    def position(self) -> tuple[float, float, float]:
        cp = math.cos(self.pitch)
        return (
            self.radius * math.sin(self.yaw) * cp,
            self.radius * math.cos(self.yaw) * cp,
            self.radius * math.sin(self.pitch),
        )

    def basis(self) -> tuple[tuple, tuple, tuple]:
        """(forward, right, up) unit vectors; right = image +x, up = image +y."""
        px, py, pz = self.position
        f = (-px / self.radius, -py / self.radius, -pz / self.radius)
        # right = normalize(forward x world_up), world_up = +z
        rx, ry = f[1], -f[0]
        rn = math.hypot(rx, ry)
        r = (rx / rn, ry / rn, 0.0)
        # up = right x forward
        u = (
            r[1] * f[2] - r[2] * f[1],
            r[2] * f[0] - r[0] * f[2],
            r[0] * f[1] - r[1] * f[0],
        )
        return f, r, u


@dataclass(frozen=True)
class RegionSpec:
    """A named square sub-region of the image: center and side, normalized."""

    name: str
    center: tuple[float, float]
    scale: float

    def __post_init__(self):
        if self.name not in REGION_NAMES:
            raise ValueError(f"region name must be one of {REGION_NAMES}")
        if not 0 < self.scale <= 1:
            raise ValueError("scale must lie in (0, 1]")
        cx, cy = self.center
        if cx - self.scale / 2 < -_ALIGN_EPS or cx + self.scale / 2 > 1 + _ALIGN_EPS:
            raise ValueError(f"region {self.name} exceeds image bounds horizontally")
        if cy - self.scale / 2 < -_ALIGN_EPS or cy + self.scale / 2 > 1 + _ALIGN_EPS:
            raise ValueError(f"region {self.name} exceeds image bounds vertically")


def _pixel_fractions(lo: float, scale: float, h: int, dtype) -> torch.Tensor:
    """Pixel-center positions lo + scale*(i+0.5)/h as fractions of the image.

    When the window corresponds to whole pixels of a virtual h/scale grid,
    the positions are computed with the full-grid formula (J + 0.5)/H so the
    values are bit-identical to that grid's own fractions.
    """
    idx = torch.arange(h, dtype=dtype)
    virt = h / scale
    j0 = lo * virt
    if abs(virt - round(virt)) < _ALIGN_EPS and abs(j0 - round(j0)) < _ALIGN_EPS:
        return (round(j0) + (idx + 0.5)) / round(virt)
    return lo + scale * (idx + 0.5) / h


def generate_rays(cam: Camera, h: int, dtype: torch.dtype = torch.float32) -> tuple[torch.Tensor, torch.Tensor]:
    """Cast one ray per pixel of an h x h grid.

    Returns (origins, directions), both [h, h, 3]; directions unit-norm.
    Row 0 is the top of the image.
    """
    if h < 1:
        raise ValueError("resolution must be >= 1")
    f, r, u = cam.basis()
    f = torch.tensor(f, dtype=dtype)
    r = torch.tensor(r, dtype=dtype)
    u = torch.tensor(u, dtype=dtype)
    s = math.tan(cam.fov_y / 2)

    u0, v0, scale = cam.window
    x_ndc = 2.0 * _pixel_fractions(u0, scale, h, dtype) - 1.0  # [h] columns
    y_ndc = 1.0 - 2.0 * _pixel_fractions(v0, scale, h, dtype)  # [h] rows, top first

    dirs = (
        f.view(1, 1, 3)
        + (x_ndc * s).view(1, h, 1) * r.view(1, 1, 3)
        + (y_ndc * s).view(h, 1, 1) * u.view(1, 1, 3)
    )
    dirs = dirs / dirs.norm(dim=-1, keepdim=True)
    origins = torch.tensor(cam.position, dtype=dtype).expand(h, h, 3)
    return origins, dirs


def mirror_camera(cam: Camera) -> Camera:
    """The pose reflected about the yz-plane: yaw -> -yaw (window mirrored)."""
    u0, v0, s = cam.window
    window = (1.0 - u0 - s, v0, s) if (u0, v0, s) != (0.0, 0.0, 1.0) else cam.window
    return replace(cam, yaw=-cam.yaw, window=window)


def region_camera(cam: Camera, region: RegionSpec) -> Camera:
    """Camera whose full ray grid covers exactly the region's sub-frustum.

    Rendering it at resolution h yields the region at h x h, i.e. densely
    sampled compared with the same box inside a full-frame render.
    """
    if cam.window != (0.0, 0.0, 1.0):
        raise ValueError("region_camera expects a full-frame camera")
    cx, cy = region.center
    window = (cx - region.scale / 2, cy - region.scale / 2, region.scale)
    return replace(cam, window=window)


def project(cam: Camera, points: torch.Tensor) -> torch.Tensor:
    """World points -> normalized image coords (u, v) in [0,1]^2 when visible."""
    f, r, u = cam.basis()
    dtype = points.dtype
    eye = torch.tensor(cam.position, dtype=dtype)
    rel = points - eye
    z = rel @ torch.tensor(f, dtype=dtype)
    x = rel @ torch.tensor(r, dtype=dtype)
    y = rel @ torch.tensor(u, dtype=dtype)
    s = math.tan(cam.fov_y / 2)
    x_ndc = x / (z * s)
    y_ndc = y / (z * s)
    return torch.stack([(x_ndc + 1) / 2, (1 - y_ndc) / 2], dim=-1)


def default_near_far(cam: Camera, extent: float) -> tuple[float, float]:
    """Near/far planes bounding the feature cube from any orbit position."""
    span = math.sqrt(3.0) * extent
    return max(cam.radius - span, 1e-3), cam.radius + span
