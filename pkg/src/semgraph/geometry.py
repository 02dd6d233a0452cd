"""Pinhole camera model, rigid map-frame transforms and depth back-projection.

Conventions: the camera frame has +z along the optical axis, +x to the right
and +y down the image. Poses map camera-frame points into the map frame as
``p_map = R(q) @ p_cam + t`` with Hamilton quaternions stored ``(w, x, y, z)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np
from PIL import Image

from . import _accel
from ._accel import njit
from .errors import FrameMisuseError, InputShapeError, SchemaError

CAMERA = "camera"
MAP = "map"

DEFAULT_DEPTH_SCALE = 0.001
DEFAULT_MAX_RANGE = 6.0
# Projections closer than this to the camera plane are rejected.
MIN_PROJECTION_DEPTH = 1e-6
# Round-off allowance (pixels) below the 0 image bound; such hits are clamped to 0.
EDGE_SLACK = 1e-6


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    depth_scale: float = DEFAULT_DEPTH_SCALE

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not self.depth_scale > 0:
            raise ValueError(f"depth_scale must be positive, got {self.depth_scale}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"image size must be positive, got {self.width}x{self.height}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(
                f"principal point ({self.cx}, {self.cy}) outside image {self.width}x{self.height}"
            )

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
            "depth_scale": self.depth_scale,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CameraIntrinsics":
        missing = [key for key in ("fx", "fy", "cx", "cy", "width", "height") if key not in data]
        if missing:
            raise SchemaError(f"intrinsics missing field(s): {', '.join(missing)}")
        return cls(
            fx=float(data["fx"]),
            fy=float(data["fy"]),
            cx=float(data["cx"]),
            cy=float(data["cy"]),
            width=int(data["width"]),
            height=int(data["height"]),
            depth_scale=float(data.get("depth_scale", DEFAULT_DEPTH_SCALE)),
        )


def load_intrinsics(path) -> CameraIntrinsics:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON ({exc})") from exc
    return CameraIntrinsics.from_dict(data)


def save_intrinsics(k: CameraIntrinsics, path) -> None:
    Path(path).write_text(json.dumps(k.to_dict(), indent=2) + "\n", encoding="utf-8")


def quaternion_to_matrix(q: Sequence[float]) -> np.ndarray:
    """Rotation matrix of a unit Hamilton quaternion ``(w, x, y, z)``."""
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quaternion(r: np.ndarray) -> Tuple[float, float, float, float]:
    """Unit quaternion ``(w, x, y, z)`` with ``w >= 0`` for a rotation matrix."""
    r = np.asarray(r, dtype=float)
    trace = r[0, 0] + r[1, 1] + r[2, 2]
    if trace > 0:
        s = 2.0 * math.sqrt(trace + 1.0)
        w = 0.25 * s
        x = (r[2, 1] - r[1, 2]) / s
        y = (r[0, 2] - r[2, 0]) / s
        z = (r[1, 0] - r[0, 1]) / s
    elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
        s = 2.0 * math.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2])
        w = (r[2, 1] - r[1, 2]) / s
        x = 0.25 * s
        y = (r[0, 1] + r[1, 0]) / s
        z = (r[0, 2] + r[2, 0]) / s
    elif r[1, 1] > r[2, 2]:
        s = 2.0 * math.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2])
        w = (r[0, 2] - r[2, 0]) / s
        x = (r[0, 1] + r[1, 0]) / s
        y = 0.25 * s
        z = (r[1, 2] + r[2, 1]) / s
    else:
        s = 2.0 * math.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1])
        w = (r[1, 0] - r[0, 1]) / s
        x = (r[0, 2] + r[2, 0]) / s
        y = (r[1, 2] + r[2, 1]) / s
        z = 0.25 * s
    q = np.array([w, x, y, z])
    q /= np.linalg.norm(q)
    if q[0] < 0:
        q = -q
    return tuple(float(c) for c in q)


@dataclass(frozen=True)
class Pose:
    """Camera-to-map rigid transform."""

    translation: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    rotation: Tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)
    _matrix: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        t = tuple(float(c) for c in self.translation)
        q = tuple(float(c) for c in self.rotation)
        if len(t) != 3 or len(q) != 4:
            raise ValueError("pose needs a 3-vector translation and a (w, x, y, z) quaternion")
        if not all(math.isfinite(c) for c in t + q):
            raise ValueError("pose components must be finite")
        norm = math.sqrt(sum(c * c for c in q))
        if norm < 1e-12:
            raise ValueError("rotation quaternion has zero norm")
        q = tuple(c / norm for c in q)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", q)
        m = quaternion_to_matrix(q)
        m.setflags(write=False)
        object.__setattr__(self, "_matrix", m)

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_matrix(cls, rotation: np.ndarray, translation: Sequence[float]) -> "Pose":
        return cls(tuple(translation), matrix_to_quaternion(rotation))

    @property
    def rotation_matrix(self) -> np.ndarray:
        return self._matrix

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Camera-frame points (N, 3) to map frame."""
        return np.asarray(points, dtype=float) @ self._matrix.T + np.asarray(self.translation)

    def apply_inverse(self, points: np.ndarray) -> np.ndarray:
        """Map-frame points (N, 3) to camera frame."""
        return (np.asarray(points, dtype=float) - np.asarray(self.translation)) @ self._matrix


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray
    frame: str = CAMERA

    def __post_init__(self):
        if self.frame not in (CAMERA, MAP):
            raise ValueError(f"unknown frame {self.frame!r}")
        pts = np.array(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True, eq=False)
class DepthImage:
    width: int
    height: int
    raw: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.raw)
        if raw.size != self.width * self.height:
            raise InputShapeError(
                f"depth buffer has {raw.size} samples, expected {self.width}x{self.height}"
            )
        raw = np.ascontiguousarray(raw, dtype=np.uint16).reshape(self.height, self.width)
        raw.setflags(write=False)
        object.__setattr__(self, "raw", raw)

    @classmethod
    def from_array(cls, array) -> "DepthImage":
        array = np.asarray(array)
        if array.ndim != 2:
            raise InputShapeError(f"depth array must be 2-D, got shape {array.shape}")
        return cls(width=array.shape[1], height=array.shape[0], raw=array)


def read_depth_png(path) -> DepthImage:
    with Image.open(path) as img:
        array = np.array(img)
    if array.ndim != 2:
        raise InputShapeError(f"{path}: expected a single-channel depth image, got shape {array.shape}")
    return DepthImage.from_array(array.astype(np.uint16))


def write_depth_png(depth: DepthImage, path) -> None:
    Image.fromarray(np.asarray(depth.raw, dtype=np.uint16)).save(path, format="PNG")


@njit(cache=True)
def _back_project_kernel(raw, stride, fx, fy, cx, cy, scale, max_z):
    h, w = raw.shape
    count = 0
    for v in range(0, h, stride):
        for u in range(0, w, stride):
            d = raw[v, u]
            if d > 0 and d * scale <= max_z:
                count += 1
    out = np.empty((count, 3))
    i = 0
    for v in range(0, h, stride):
        for u in range(0, w, stride):
            d = raw[v, u]
            if d > 0:
                z = d * scale
                if z <= max_z:
                    out[i, 0] = (u - cx) * z / fx
                    out[i, 1] = (v - cy) * z / fy
                    out[i, 2] = z
                    i += 1
    return out


def _back_project_numpy(raw, stride, fx, fy, cx, cy, scale, max_z):
    sub = raw[::stride, ::stride]
    vs, us = np.nonzero(sub)
    z = sub[vs, us].astype(np.float64) * scale
    keep = z <= max_z
    vs, us, z = vs[keep] * stride, us[keep] * stride, z[keep]
    out = np.empty((z.size, 3))
    out[:, 0] = (us - cx) * z / fx
    out[:, 1] = (vs - cy) * z / fy
    out[:, 2] = z
    return out


def back_project(
    depth: DepthImage,
    k: CameraIntrinsics,
    stride: int = 1,
    max_range: Optional[float] = None,
) -> PointCloud:
    """Lift every ``stride``-th pixel with non-zero depth into a camera-frame cloud.

    Points whose depth exceeds ``max_range`` (meters) are dropped. Output order
    is row-major over the sampled pixels.
    """
    if depth.width != k.width or depth.height != k.height:
        raise InputShapeError(
            f"depth image is {depth.width}x{depth.height}, intrinsics expect {k.width}x{k.height}"
        )
    if int(stride) != stride or stride < 1:
        raise ValueError(f"stride must be a positive integer, got {stride}")
    max_z = math.inf if max_range is None else float(max_range)
    kernel = _back_project_kernel if _accel.USE_NUMBA else _back_project_numpy
    pts = kernel(depth.raw, int(stride), k.fx, k.fy, k.cx, k.cy, k.depth_scale, max_z)
    return PointCloud(pts, CAMERA)


def transform_cloud(cloud: PointCloud, pose: Pose) -> PointCloud:
    if cloud.frame != CAMERA:
        raise FrameMisuseError(f"expected a camera-frame cloud, got frame {cloud.frame!r}")
    return PointCloud(pose.apply(cloud.points), MAP)


def project_points(points_map: np.ndarray, pose: Pose, k: CameraIntrinsics):
    """Vectorized projection; returns ``(pixels (N, 2) in pixels, valid mask)``."""
    cam = pose.apply_inverse(np.asarray(points_map, dtype=float).reshape(-1, 3))
    z = cam[:, 2]
    valid = z > MIN_PROJECTION_DEPTH
    safe_z = np.where(valid, z, 1.0)
    u = k.fx * cam[:, 0] / safe_z + k.cx
    v = k.fy * cam[:, 1] / safe_z + k.cy
    valid &= (u >= -EDGE_SLACK) & (u < k.width) & (v >= -EDGE_SLACK) & (v < k.height)
    return np.stack([np.maximum(u, 0.0), np.maximum(v, 0.0)], axis=1), valid


def project_point(p_map, pose: Pose, k: CameraIntrinsics) -> Optional[Tuple[float, float]]:
    """Normalized image coordinates of a map-frame point, or ``None`` if not visible."""
    pix, valid = project_points(np.asarray(p_map, dtype=float), pose, k)
    if not valid[0]:
        return None
    return float(pix[0, 0] / k.width), float(pix[0, 1] / k.height)
