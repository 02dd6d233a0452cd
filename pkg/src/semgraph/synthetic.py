"""Synthetic RGB-D scenes with known ground truth.

Axis-aligned boxes are ray-cast into depth images from cameras placed on an
arc around the scene and looking at its centre. Every box that is visible in
a frame gets a replay detection whose box is the extent of its visible pixels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from .detection import Attribute, BoundingBox, Detection, FrameDetections, write_replay
from .geometry import CameraIntrinsics, DepthImage, Pose, save_intrinsics, write_depth_png
from .pipeline import format_trajectory_line
from .taxonomy import ConceptKind

# label, color, material; labels resolve in the bundled hierarchy
CATALOG: Tuple[Tuple[str, str, str], ...] = (
    ("Chair", "blue", "plastic"),
    ("Table", "brown", "wood"),
    ("Mug", "red", "ceramic"),
    ("Bottle", "green", "glass"),
    ("Lamp", "white", "metal"),
    ("Vase", "yellow", "porcelain"),
    ("Backpack", "black", "fabric"),
    ("Suitcase", "gray", "leather"),
    ("Toaster", "silver", "steel"),
    ("Kettle", "orange", "aluminium"),
    ("Book", "purple", "paper"),
    ("Laptop", "black", "aluminium"),
    ("Flowerpot", "orange", "ceramic"),
    ("Bucket", "blue", "plastic"),
    ("Cardboard box", "brown", "cardboard"),
    ("Teddy bear", "beige", "cotton"),
)

DEFAULT_INTRINSICS = CameraIntrinsics(fx=525.0, fy=525.0, cx=319.5, cy=239.5, width=640, height=480)
MIN_VISIBLE_PIXELS = 200


@dataclass(frozen=True)
class SceneObject:
    label: str
    color: str
    material: str
    center: Tuple[float, float, float]
    half_size: Tuple[float, float, float]

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "color": self.color,
            "material": self.material,
            "center": list(self.center),
            "half_size": list(self.half_size),
        }


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> Pose:
    """Camera-to-map pose for a camera at ``eye`` looking at ``target``."""
    eye = np.asarray(eye, dtype=float)
    z = np.asarray(target, dtype=float) - eye
    z /= np.linalg.norm(z)
    x = np.cross(z, up)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return Pose.from_matrix(np.column_stack([x, y, z]), eye)


def render(objects: Sequence[SceneObject], pose: Pose, k: CameraIntrinsics):
    """Depth (meters, 0 where nothing is hit) and per-pixel object index (-1 for none)."""
    us, vs = np.meshgrid(np.arange(k.width, dtype=float), np.arange(k.height, dtype=float))
    rays_cam = np.stack([(us - k.cx) / k.fx, (vs - k.cy) / k.fy, np.ones_like(us)], axis=-1)
    rays = rays_cam.reshape(-1, 3) @ pose.rotation_matrix.T
    origin = np.asarray(pose.translation)
    best = np.full(rays.shape[0], np.inf)
    index = np.full(rays.shape[0], -1)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / rays
        for i, ob in enumerate(objects):
            lo = np.asarray(ob.center) - ob.half_size
            hi = np.asarray(ob.center) + ob.half_size
            t1 = (lo - origin) * inv
            t2 = (hi - origin) * inv
            t_near = np.nanmax(np.minimum(t1, t2), axis=1)
            t_far = np.nanmin(np.maximum(t1, t2), axis=1)
            hit = (t_near <= t_far) & (t_near > 0) & (t_near < best)
            best[hit] = t_near[hit]
            index[hit] = i
    # ray parameter equals camera-frame depth because rays have unit z in the camera frame
    depth = np.where(np.isfinite(best), best, 0.0).reshape(k.height, k.width)
    return depth, index.reshape(k.height, k.width)


def _place_objects(rng: np.random.Generator, n: int) -> List[SceneObject]:
    if n > len(CATALOG):
        raise ValueError(f"at most {len(CATALOG)} synthetic objects are supported")
    picks = rng.choice(len(CATALOG), size=n, replace=False)
    centers: List[np.ndarray] = []
    objects = []
    for pick in picks:
        label, color, material = CATALOG[int(pick)]
        half = rng.uniform(0.05, 0.08, size=3)
        for _ in range(10_000):
            xy = rng.uniform(-1.5, 1.5, size=2)
            if all(np.linalg.norm(xy - c[:2]) >= 0.9 for c in centers):
                break
        else:
            raise RuntimeError("could not place synthetic objects")
        center = np.array([xy[0], xy[1], half[2] + rng.uniform(0.0, 0.6)])
        centers.append(center)
        objects.append(
            SceneObject(label, color, material, tuple(float(c) for c in center), tuple(float(h) for h in half))
        )
    return objects


def _camera_poses(rng: np.random.Generator, n: int) -> List[Pose]:
    start = rng.uniform(0, 2 * np.pi)
    poses = []
    for i in range(n):
        angle = start + np.pi * i / max(n - 1, 1)
        radius = 3.5 + rng.uniform(-0.2, 0.2)
        eye = (radius * np.cos(angle), radius * np.sin(angle), 1.2 + rng.uniform(-0.1, 0.1))
        target = (rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), 0.2)
        poses.append(look_at(eye, target))
    return poses


def frame_detections(frame_id: str, objects: Sequence[SceneObject], index: np.ndarray, k: CameraIntrinsics):
    dets = []
    for i, ob in enumerate(objects):
        vs, us = np.nonzero(index == i)
        if vs.size < MIN_VISIBLE_PIXELS:
            continue
        box = BoundingBox(
            us.min() / k.width, vs.min() / k.height, (us.max() + 1) / k.width, (vs.max() + 1) / k.height
        )
        attrs = (
            Attribute(ConceptKind.COLOR, ob.color, 0.85),
            Attribute(ConceptKind.MATERIAL, ob.material, 0.8),
        )
        dets.append(Detection(ob.label.lower(), 0.9, box, attrs))
    return FrameDetections(frame_id, tuple(dets))


def generate(out_dir, n_objects: int = 5, n_frames: int = 10, seed: int = 0, k: CameraIntrinsics = DEFAULT_INTRINSICS) -> dict:
    """Write a complete dataset plus ``ground_truth.json``; deterministic in ``seed``."""
    if n_objects < 0 or n_frames < 0:
        raise ValueError("object and frame counts must be non-negative")
    rng = np.random.default_rng(seed)
    objects = _place_objects(rng, n_objects)
    poses = _camera_poses(rng, n_frames)

    root = Path(out_dir)
    (root / "depth").mkdir(parents=True, exist_ok=True)
    (root / "detections").mkdir(parents=True, exist_ok=True)
    save_intrinsics(k, root / "intrinsics.json")

    seen = np.zeros(len(objects), dtype=int)
    lines = ["# frame_id tx ty tz qx qy qz qw"]
    for f, pose in enumerate(poses):
        frame_id = f"{f:06d}"
        depth_m, index = render(objects, pose, k)
        raw = np.round(depth_m / k.depth_scale).astype(np.uint16)
        write_depth_png(DepthImage.from_array(raw), root / "depth" / f"{frame_id}.png")
        fd = frame_detections(frame_id, objects, index, k)
        for d in fd.detections:
            seen[[o.label.lower() for o in objects].index(d.label)] += 1
        write_replay(fd, root / "detections")
        lines.append(format_trajectory_line(frame_id, pose))
    (root / "trajectory.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")

    truth = {
        "seed": seed,
        "objects": [o.to_dict() for o in objects],
        "frames_seen": [int(s) for s in seen],
    }
    (root / "ground_truth.json").write_text(json.dumps(truth, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return truth
