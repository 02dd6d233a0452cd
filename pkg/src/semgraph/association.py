"""Match projected cluster centroids to 2D detection boxes.

A (detection, cluster) pair is a candidate when the cluster centroid projects
into the image inside the detection box (bounds inclusive). Candidates are
taken greedily by ascending distance between the projected centroid and the
box centre, ties broken by detection index and then cluster index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .clustering import Cluster
from .detection import FrameDetections
from .geometry import CameraIntrinsics, Pose, project_points


@dataclass(frozen=True)
class Match:
    detection: int
    cluster: int
    pixel: Tuple[float, float]
    center_distance: float


@dataclass(frozen=True)
class FrameCounters:
    matched: int
    dropped_detections: int
    dropped_clusters: int


def candidates(boxes, pixels: Sequence[Optional[Tuple[float, float]]]):
    """All containment candidates as ``(distance, det, cluster, pixel)`` tuples."""
    out = []
    for di, box in enumerate(boxes):
        bu, bv = box.center
        for ci, pix in enumerate(pixels):
            if pix is None or not box.contains(*pix):
                continue
            out.append((math.hypot(pix[0] - bu, pix[1] - bv), di, ci, pix))
    return out


def greedy_match(boxes, pixels) -> List[Match]:
    taken_d, taken_c = set(), set()
    matches = []
    for dist, di, ci, pix in sorted(candidates(boxes, pixels), key=lambda c: c[:3]):
        if di in taken_d or ci in taken_c:
            continue
        taken_d.add(di)
        taken_c.add(ci)
        matches.append(Match(di, ci, pix, dist))
    return matches


def project_centroids(clusters: Sequence[Cluster], pose: Pose, k: CameraIntrinsics):
    if not clusters:
        return []
    pix, valid = project_points(np.array([c.centroid for c in clusters]), pose, k)
    return [
        (float(p[0] / k.width), float(p[1] / k.height)) if ok else None for p, ok in zip(pix, valid)
    ]


def associate(
    dets: FrameDetections, clusters: Sequence[Cluster], pose: Pose, k: CameraIntrinsics
) -> List[Match]:
    boxes = [d.bbox for d in dets.detections]
    return greedy_match(boxes, project_centroids(clusters, pose, k))


def frame_report(matches: Sequence[Match], dets: FrameDetections, clusters: Sequence[Cluster]) -> FrameCounters:
    n = len(matches)
    return FrameCounters(n, len(dets.detections) - n, len(clusters) - n)
