"""Per-frame fusion of the local geometric branch and the detection branch.

Dataset layout::

    dataset/
      intrinsics.json              fx fy cx cy width height depth_scale
      trajectory.txt               frame_id tx ty tz qx qy qz qw
      depth/<frame_id>.png         16-bit depth, raw units
      detections/<frame_id>.json   replay detections
      rgb/<frame_id>.png|jpg       optional, sent to the remote provider
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from .association import associate, frame_report
from .clustering import ClusterParams, cluster, filter_clusters
from .detection import FrameDetections, RemoteVisionProvider, ReplayProvider, VisionProvider
from .errors import DatasetError, FrameError, ParseError, SchemaError, SemgraphError
from .geometry import CameraIntrinsics, Pose, back_project, load_intrinsics, read_depth_png, transform_cloud
from .taxonomy import AttributeDefaults, Concept, ConceptKind, Taxonomy, load_attribute_defaults, load_bundled, load_taxonomy, normalize_label
from .worldgraph import WorldGraph

log = logging.getLogger(__name__)

PROVIDERS = ("replay", "remote")


@dataclass
class PipelineConfig:
    stride: int = 2
    max_range_m: float = 6.0
    cluster_epsilon: float = 0.05
    cluster_min_points: int = 10
    min_cluster_size: int = 30
    score_threshold: float = 0.5
    merge_radius_m: float = 0.5
    link_distance_m: float = 1.5
    prune: List[str] = field(default_factory=lambda: ["animal", "person"])
    provider: str = "replay"
    taxonomy: Optional[str] = None
    attribute_defaults: Optional[str] = None
    endpoint: Optional[str] = None
    isa_full_chain: bool = False
    skip_bad_frames: bool = False

    def __post_init__(self):
        for name in ("stride", "max_range_m", "cluster_epsilon", "cluster_min_points", "min_cluster_size",
                     "score_threshold", "merge_radius_m", "link_distance_m"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0:
                raise SchemaError(f"config field {name} must be a positive number, got {value!r}")
        for name in ("stride", "cluster_min_points", "min_cluster_size"):
            if int(getattr(self, name)) != getattr(self, name):
                raise SchemaError(f"config field {name} must be an integer")
            setattr(self, name, int(getattr(self, name)))
        if self.provider not in PROVIDERS:
            raise SchemaError(f"provider must be one of {PROVIDERS}, got {self.provider!r}")
        self.prune = [normalize_label(p) for p in self.prune]

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise SchemaError(f"unknown config key(s): {', '.join(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def cluster_params(self) -> ClusterParams:
        return ClusterParams(self.cluster_epsilon, self.cluster_min_points)


def load_config(path) -> PipelineConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise SchemaError(f"{path}: config must be a flat key/value object")
    return PipelineConfig.from_dict(data)


@dataclass(frozen=True)
class Frame:
    frame_id: str
    depth_path: Path
    pose: Pose
    detections_path: Optional[Path] = None
    image_path: Optional[Path] = None


def parse_trajectory(path) -> List[Tuple[str, Pose]]:
    """Read ``frame_id tx ty tz qx qy qz qw`` lines; ``#`` starts a comment."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 8:
                raise ParseError(f"{path}:{lineno}: expected 8 fields, got {len(parts)}")
            try:
                tx, ty, tz, qx, qy, qz, qw = (float(p) for p in parts[1:])
                pose = Pose((tx, ty, tz), (qw, qx, qy, qz))
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            out.append((parts[0], pose))
    return out


def format_trajectory_line(frame_id: str, pose: Pose) -> str:
    w, x, y, z = pose.rotation
    values = list(pose.translation) + [x, y, z, w]
    return frame_id + " " + " ".join(repr(float(v)) for v in values)


def load_dataset(directory) -> Tuple[List[Frame], CameraIntrinsics]:
    root = Path(directory)
    intr_path = root / "intrinsics.json"
    traj_path = root / "trajectory.txt"
    if not intr_path.is_file():
        raise DatasetError(f"{root}: missing intrinsics.json")
    if not traj_path.is_file():
        raise DatasetError(f"{root}: missing trajectory.txt")
    k = load_intrinsics(intr_path)
    frames = []
    seen = set()
    for frame_id, pose in parse_trajectory(traj_path):
        if frame_id in seen:
            raise DatasetError(f"frame {frame_id} listed twice in trajectory")
        seen.add(frame_id)
        depth = root / "depth" / f"{frame_id}.png"
        if not depth.is_file():
            raise DatasetError(f"frame {frame_id} has no depth image at {depth}")
        dets = root / "detections" / f"{frame_id}.json"
        image = next((p for p in (root / "rgb" / f"{frame_id}{ext}" for ext in (".png", ".jpg")) if p.is_file()), None)
        frames.append(Frame(frame_id, depth, pose, dets if dets.is_file() else None, image))
    return frames, k


def _concept_for(label: str, taxonomy: Taxonomy) -> Tuple[Concept, bool]:
    node = taxonomy.resolve_label(label)
    if node is not None:
        return Concept(node, ConceptKind.OBJECT), False
    name = normalize_label(label).replace("#", "_")
    return Concept(name, ConceptKind.OBJECT), True


def process_frame(
    w: WorldGraph,
    frame: Frame,
    cfg: PipelineConfig,
    taxonomy: Taxonomy,
    defaults: AttributeDefaults,
    provider: VisionProvider,
    k: CameraIntrinsics,
) -> dict:
    """Run one frame through both branches and commit its matches to ``w``."""
    try:
        depth = read_depth_png(frame.depth_path)
        cloud = transform_cloud(back_project(depth, k, cfg.stride, cfg.max_range_m), frame.pose)
        raw_clusters = cluster(cloud, cfg.cluster_params)
        clusters = filter_clusters(raw_clusters, cfg.min_cluster_size)
        fd = provider.detect(frame.frame_id, frame.image_path)
        kept = FrameDetections(fd.frame_id, tuple(d for d in fd.detections if d.score >= cfg.score_threshold))
        matches = associate(kept, clusters, frame.pose, k)
    except (SemgraphError, OSError, ValueError) as exc:
        raise FrameError(frame.frame_id, exc) from exc

    # commit phase: nothing below is expected to fail
    before = len(w.instances)
    merged = provisional = 0
    for m in matches:
        det = kept.detections[m.detection]
        concept, is_provisional = _concept_for(det.label, taxonomy)
        provisional += is_provisional
        attrs = [(a.kind, a.value, a.score) for a in det.attributes]
        have = {a.kind for a in det.attributes}
        if not is_provisional:
            attrs += [(kind, value, 0.0) for kind, value in taxonomy.inherit_attributes(defaults, concept.name) if kind not in have]
        n = len(w.instances)
        iid = w.upsert_instance(
            concept, clusters[m.cluster].centroid, attrs, frame.frame_id, cfg.merge_radius_m, is_provisional
        )
        merged += len(w.instances) == n
        w.emit_triples(iid, taxonomy, cfg.isa_full_chain)
    w.frame_log.append(frame.frame_id)

    counters = frame_report(matches, kept, clusters)
    return {
        "frame_id": frame.frame_id,
        "points": len(cloud),
        "clusters_raw": len(raw_clusters),
        "clusters": len(clusters),
        "detections": len(fd.detections),
        "detections_kept": len(kept.detections),
        "matches": counters.matched,
        "dropped_detections": counters.dropped_detections,
        "dropped_clusters": counters.dropped_clusters,
        "new_instances": len(w.instances) - before,
        "merged_instances": merged,
        "provisional": provisional,
    }


def make_provider(cfg: PipelineConfig, dataset_dir) -> VisionProvider:
    if cfg.provider == "remote":
        return RemoteVisionProvider(cfg.endpoint)
    return ReplayProvider(Path(dataset_dir) / "detections")


def load_knowledge(cfg: PipelineConfig) -> Tuple[Taxonomy, AttributeDefaults]:
    taxonomy = load_taxonomy(cfg.taxonomy) if cfg.taxonomy else load_bundled("full")
    if cfg.prune:
        taxonomy = taxonomy.prune(cfg.prune)
    defaults = load_attribute_defaults(cfg.attribute_defaults, taxonomy) if cfg.attribute_defaults else {}
    return taxonomy, defaults


def run(
    dataset_dir,
    cfg: Optional[PipelineConfig] = None,
    provider: Optional[VisionProvider] = None,
) -> Tuple[WorldGraph, List[dict]]:
    """Process every frame in trajectory order, then link the topology once."""
    cfg = cfg or PipelineConfig()
    frames, k = load_dataset(dataset_dir)
    taxonomy, defaults = load_knowledge(cfg)
    provider = provider or make_provider(cfg, dataset_dir)
    w = WorldGraph()
    reports = []
    for frame in frames:
        try:
            report = process_frame(w, frame, cfg, taxonomy, defaults, provider, k)
        except FrameError as exc:
            if not cfg.skip_bad_frames:
                raise
            log.warning("skipping %s", exc)
            report = {"frame_id": frame.frame_id, "error": str(exc.cause), "error_type": type(exc.cause).__name__}
        log.info("frame %s: %s", frame.frame_id, report)
        reports.append(report)
    w.build_topology(cfg.link_distance_m)
    return w, reports
