"""Synthetic paired data: portrait image, detailed sketch, coarse contour.

Each sample is a procedural "cartoon head" built from ellipsoid primitives
(head, hair shell, eyes with irises, nose, mouth) living in the tri-plane
cube, facing +y. Images are rendered analytically by ray-primitive
intersection with flat Lambert shading; the detailed sketch is the boundary
map of the primitive-id image; the coarse contour keeps only the long
strokes of the sketch. Region boxes come from projecting the primitive
centers through the sampling camera, so they are always consistent with
the rendered geometry.

Everything is a pure function of the sample seed: the same seed always
yields the same sample, and mirror-symmetric parameters with a frontal
camera yield a bitwise x-symmetric scene.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from scipy import ndimage

from .camera import Camera, RegionSpec, generate_rays, project

_LIGHT = np.array([0.0, 0.8, 0.6]) / math.hypot(0.8, 0.6)
_BACKGROUND = 1.0
_AMBIENT = 0.55

CONTOUR_COMPONENT_FRACTION = 0.15  # strokes shorter than this * H are dropped


@dataclass(frozen=True)
class FaceParams:
    head_rx: float
    head_ry: float
    head_rz: float
    hair_pad: float
    hair_back: float
    hair_up: float
    eye_dx: float
    eye_z: float
    eye_r: float
    iris_r: float
    nose_z: float
    nose_r: float
    mouth_z: float
    mouth_w: float
    mouth_h: float
    eye_asym: float
    skin: tuple[float, float, float]
    hair_color: tuple[float, float, float]
    eye_color: tuple[float, float, float]
    mouth_color: tuple[float, float, float]

    @property
    def symmetric(self) -> bool:
        return self.eye_asym == 0.0


def random_face_params(rng: np.random.Generator, symmetric: bool = False) -> FaceParams:
    u = rng.uniform
    return FaceParams(
        head_rx=u(0.42, 0.55),
        head_ry=u(0.42, 0.52),
        head_rz=u(0.55, 0.7),
        hair_pad=u(0.03, 0.08),
        hair_back=u(0.16, 0.26),
        hair_up=u(0.3, 0.45),
        eye_dx=u(0.16, 0.24),
        eye_z=u(0.08, 0.18),
        eye_r=u(0.04, 0.06),
        iris_r=u(0.016, 0.026),
        nose_z=u(-0.08, 0.0),
        nose_r=u(0.04, 0.058),
        mouth_z=u(-0.32, -0.22),
        mouth_w=u(0.1, 0.16),
        mouth_h=u(0.035, 0.055),
        eye_asym=0.0 if symmetric else u(-0.15, 0.15),
        skin=tuple(u(0.7, 0.95, size=3).round(4)),
        hair_color=tuple(u(0.05, 0.45, size=3).round(4)),
        eye_color=tuple(u(0.05, 0.3, size=3).round(4)),
        mouth_color=tuple(u(0.45, 0.7, size=3).round(4)),
    )


def mirror_face_params(p: FaceParams) -> FaceParams:
    """Parameters of the x-mirrored head (only the asymmetry flips sign)."""
    return dataclasses.replace(p, eye_asym=-p.eye_asym)


def _front_y(p: FaceParams, x: float, z: float, bulge: float = 0.0) -> float:
    """y of the head surface at lateral (x, z), pushed outward by `bulge`."""
    rest = 1.0 - (x / p.head_rx) ** 2 - (z / p.head_rz) ** 2
    return p.head_ry * math.sqrt(max(rest, 0.0)) + bulge


def _primitives(p: FaceParams) -> list[dict]:
    """Ellipsoids as dicts: center, semi-axes, color, id order = paint order."""
    eye_l_r = p.eye_r * (1.0 + p.eye_asym)
    eye_r_r = p.eye_r * (1.0 - p.eye_asym)
    eye_y = _front_y(p, p.eye_dx, p.eye_z)
    nose_y = _front_y(p, 0.0, p.nose_z, bulge=0.35 * p.nose_r)
    mouth_y = _front_y(p, 0.0, p.mouth_z)
    prims = [
        dict(name="hair",
             center=(0.0, -p.hair_back, p.hair_up),
             semi=(p.head_rx + p.hair_pad, p.head_ry + p.hair_pad, p.head_rz + p.hair_pad),
             color=p.hair_color),
        dict(name="head", center=(0.0, 0.0, 0.0),
             semi=(p.head_rx, p.head_ry, p.head_rz), color=p.skin),
        dict(name="left_eye", center=(-p.eye_dx, eye_y, p.eye_z),
             semi=(eye_l_r, eye_l_r, eye_l_r), color=(0.97, 0.97, 0.97)),
        dict(name="right_eye", center=(p.eye_dx, eye_y, p.eye_z),
             semi=(eye_r_r, eye_r_r, eye_r_r), color=(0.97, 0.97, 0.97)),
        dict(name="left_iris", center=(-p.eye_dx, eye_y + 0.55 * eye_l_r, p.eye_z),
             semi=(p.iris_r, p.iris_r, p.iris_r), color=p.eye_color),
        dict(name="right_iris", center=(p.eye_dx, eye_y + 0.55 * eye_r_r, p.eye_z),
             semi=(p.iris_r, p.iris_r, p.iris_r), color=p.eye_color),
        dict(name="nose", center=(0.0, nose_y, p.nose_z),
             semi=(p.nose_r, p.nose_r, p.nose_r), color=p.skin),
        dict(name="mouth", center=(0.0, mouth_y, p.mouth_z),
             semi=(p.mouth_w, 0.06, p.mouth_h), color=p.mouth_color),
    ]
    return prims


def _intersect(origins: np.ndarray, dirs: np.ndarray, prim: dict) -> np.ndarray:
    """Nearest positive hit parameter per ray; inf where the ray misses."""
    c = np.asarray(prim["center"])
    s = np.asarray(prim["semi"])
    o = (origins - c) / s
    d = dirs / s
    a = (d * d).sum(-1)
    b = 2.0 * (o * d).sum(-1)
    cc = (o * o).sum(-1) - 1.0
    disc = b * b - 4 * a * cc
    hit = disc >= 0
    t = np.full(origins.shape[0], np.inf)
    sq = np.sqrt(np.where(hit, disc, 0.0))
    t0 = (-b - sq) / (2 * a)
    t1 = (-b + sq) / (2 * a)
    near = np.where(t0 > 1e-6, t0, np.where(t1 > 1e-6, t1, np.inf))
    t[hit] = near[hit]
    return t


def render_scene(p: FaceParams, cam: Camera, resolution: int) -> tuple[np.ndarray, np.ndarray]:
    """Analytic render: RGB image [H, W, 3] in [0, 1] and primitive-id map.

    id 0 is background; primitive k gets id k+1.
    """
    origins_t, dirs_t = generate_rays(cam, resolution, dtype=torch.float64)
    origins = origins_t.reshape(-1, 3).numpy()
    dirs = dirs_t.reshape(-1, 3).numpy()
    prims = _primitives(p)
    ts = np.stack([_intersect(origins, dirs, prim) for prim in prims], axis=1)
    best = ts.argmin(axis=1)
    t_hit = ts[np.arange(ts.shape[0]), best]
    visible = np.isfinite(t_hit)
    ids = np.where(visible, best + 1, 0)

    img = np.full((origins.shape[0], 3), _BACKGROUND)
    pts = origins + np.where(visible, t_hit, 0.0)[:, None] * dirs
    for k, prim in enumerate(prims):
        mask = visible & (best == k)
        if not mask.any():
            continue
        c = np.asarray(prim["center"])
        s = np.asarray(prim["semi"])
        normal = (pts[mask] - c) / (s * s)
        normal /= np.linalg.norm(normal, axis=1, keepdims=True)
        lam = np.clip((normal * _LIGHT).sum(1), 0.0, None)
        shade = _AMBIENT + (1.0 - _AMBIENT) * lam
        img[mask] = np.asarray(prim["color"]) * shade[:, None]
    h = resolution
    return img.reshape(h, h, 3).clip(0.0, 1.0), ids.reshape(h, h)


def sketch_from_ids(ids: np.ndarray) -> np.ndarray:
    """Boundary map of the id image: ink (0) where a 4-neighbour differs.

    Both sides of a boundary are marked, so a mirrored id map yields
    exactly the mirrored sketch.
    """
    ink = np.zeros_like(ids, dtype=bool)
    col_diff = ids[:, 1:] != ids[:, :-1]
    row_diff = ids[1:, :] != ids[:-1, :]
    ink[:, 1:] |= col_diff
    ink[:, :-1] |= col_diff
    ink[1:, :] |= row_diff
    ink[:-1, :] |= row_diff
    return np.where(ink, 0.0, 1.0)


def simplify_sketch(sketch: np.ndarray) -> np.ndarray:
    """Keep only long strokes: group nearby ink, drop short components.

    Components are measured by the longest bounding-box side after a
    1-pixel dilation groups adjacent strokes; surviving groups keep their
    original ink pixels only, so the contour is never denser than the
    sketch.
    """
    if sketch.ndim != 2:
        raise ValueError("sketch must be [H, W]")
    h = sketch.shape[0]
    ink = sketch < 0.5
    if not ink.any():
        return np.ones_like(sketch)
    grouped = ndimage.binary_dilation(ink, iterations=1)
    labels, _ = ndimage.label(grouped, structure=np.ones((3, 3)))
    keep = np.zeros_like(ink)
    threshold = CONTOUR_COMPONENT_FRACTION * h
    for lab, sl in enumerate(ndimage.find_objects(labels), start=1):
        side = max(sl[0].stop - sl[0].start, sl[1].stop - sl[1].start)
        if side >= threshold:
            keep[sl] |= labels[sl] == lab
    return np.where(keep & ink, 0.0, 1.0)


@dataclass
class Sample:
    image: torch.Tensor      # [3, H, H] in [0, 1]
    sketch: torch.Tensor     # [1, H, H], ink=0 paper=1
    contour: torch.Tensor    # [1, H, H]
    regions: list[RegionSpec]
    camera: Camera
    face: FaceParams
    seed: int


def _region_from_center(name: str, uv: np.ndarray, scale: float) -> RegionSpec:
    cx = float(np.clip(uv[0], scale / 2, 1 - scale / 2))
    cy = float(np.clip(uv[1], scale / 2, 1 - scale / 2))
    return RegionSpec(name, (cx, cy), scale)


def generate_sample(
    seed: int,
    resolution: int = 64,
    yaw_range: float = 0.5,
    pitch_range: float = 0.2,
    radius: float = 2.7,
    fov_y: float = 0.6,
    region_scales: tuple[float, float, float, float] = (0.25, 0.25, 0.30, 0.30),
    symmetric: bool = False,
    frontal: bool = False,
) -> Sample:
    rng = np.random.default_rng(seed)
    face = random_face_params(rng, symmetric=symmetric)
    yaw = 0.0 if frontal else float(rng.uniform(-yaw_range, yaw_range))
    pitch = 0.0 if frontal else float(rng.uniform(-pitch_range, pitch_range))
    cam = Camera(yaw=yaw, pitch=pitch, radius=radius, fov_y=fov_y)

    img, ids = render_scene(face, cam, resolution)
    sketch = sketch_from_ids(ids)
    contour = simplify_sketch(sketch)

    prims = {prim["name"]: prim["center"] for prim in _primitives(face)}
    centers = torch.tensor(
        np.stack([prims["left_eye"], prims["right_eye"], prims["nose"], prims["mouth"]]),
        dtype=torch.float64,
    )
    uv = project(cam, centers).numpy()
    regions = [
        _region_from_center(name, uv[i], region_scales[i])
        for i, name in enumerate(("left_eye", "right_eye", "nose", "mouth"))
    ]
    return Sample(
        image=torch.from_numpy(img).permute(2, 0, 1).float(),
        sketch=torch.from_numpy(sketch).unsqueeze(0).float(),
        contour=torch.from_numpy(contour).unsqueeze(0).float(),
        regions=regions,
        camera=cam,
        face=face,
        seed=seed,
    )


_SPLIT_OFFSETS = {"train": 1, "val": 500_001}


def sample_seeds(split: str, n: int, seed: int = 0) -> list[int]:
    """Disjoint, reproducible per-sample seeds for each split."""
    if split not in _SPLIT_OFFSETS:
        raise ValueError(f"split must be one of {sorted(_SPLIT_OFFSETS)}")
    if n < 1:
        raise ValueError("n must be >= 1")
    if n >= 500_000:
        raise ValueError("split capacity exceeded")
    base = seed * 1_000_000 + _SPLIT_OFFSETS[split]
    return [base + i for i in range(n)]


def dataset(split: str, n: int, seed: int = 0, **kwargs) -> list[Sample]:
    """Materialize n samples with fixed ordering; train/val never overlap."""
    return [generate_sample(s, **kwargs) for s in sample_seeds(split, n, seed)]


def cache_dir() -> Path | None:
    root = os.environ.get("SSSP_CACHE_DIR")
    return Path(root) if root else None


def save_sample(sample: Sample, directory: Path) -> None:
    from PIL import Image

    directory.mkdir(parents=True, exist_ok=True)

    def _save_gray(t: torch.Tensor, name: str):
        arr = (t.squeeze(0).numpy() * 255).round().astype(np.uint8)
        Image.fromarray(arr, mode="L").save(directory / name)

    rgb = (sample.image.permute(1, 2, 0).numpy() * 255).round().astype(np.uint8)
    Image.fromarray(rgb, mode="RGB").save(directory / "image.png")
    _save_gray(sample.sketch, "sketch.png")
    _save_gray(sample.contour, "contour.png")
    meta = {
        "seed": sample.seed,
        "camera": {"yaw": sample.camera.yaw, "pitch": sample.camera.pitch,
                   "radius": sample.camera.radius, "fov_y": sample.camera.fov_y},
        "regions": [
            {"name": r.name, "center": list(r.center), "scale": r.scale}
            for r in sample.regions
        ],
        "face": dataclasses.asdict(sample.face),
    }
    (directory / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
