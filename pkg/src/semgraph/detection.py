"""Remote perception branch: 2D detections from a vision provider.

Two providers share one contract, ``detect(frame_id, image_ref)``:

* ``ReplayProvider`` reads ``detections/<frame_id>.json`` files and is what
  every offline run and test uses.
* ``RemoteVisionProvider`` posts the image to a cloud annotate endpoint and
  converts the response with ``parse_response``.

Labels are stripped and lowercased in both paths; mapping onto the
taxonomy happens later, in the pipeline.
"""

from __future__ import annotations

import base64
import json
import logging
import math
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import requests

from .errors import DataMissingError, NetworkError, ParseError, ProviderError, SemgraphError
from .taxonomy import ConceptKind, normalize_label

log = logging.getLogger(__name__)

CREDENTIAL_ENV = "SEMGRAPH_VISION_KEY"
DEFAULT_RETRIES = 3
DEFAULT_BACKOFF = 0.5
DEFAULT_RATE = 2.0

# label-annotation keyword -> attribute kind, used by the remote path
DEFAULT_KEYWORDS: Dict[ConceptKind, frozenset] = {
    ConceptKind.COLOR: frozenset(
        "red orange yellow green blue purple violet pink brown black white gray grey "
        "beige cyan magenta maroon navy teal turquoise gold silver".split()
    ),
    ConceptKind.MATERIAL: frozenset(
        "plastic wood metal steel aluminium aluminum iron glass ceramic porcelain paper "
        "cardboard fabric textile leather cotton wool rubber stone marble concrete brick "
        "denim silk".split()
    ),
    ConceptKind.SHAPE: frozenset(
        "cube cuboid rectangle square circle round sphere cylinder cone triangle oval "
        "rectangular cylindrical spherical".split()
    ),
}


def _clamp01(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise ParseError(f"{what} is not a finite number")
    if value < 0.0 or value > 1.0:
        clamped = min(1.0, max(0.0, value))
        log.warning("%s %.6g outside [0, 1], clamped to %.6g", what, value, clamped)
        return clamped
    return value


def _number(value, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"{what} must be a number, got {value!r}")
    return float(value)


@dataclass(frozen=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (0.0 <= self.x_min < self.x_max <= 1.0 and 0.0 <= self.y_min < self.y_max <= 1.0):
            raise ValueError(f"degenerate or out-of-range box {self.as_list()}")

    def as_list(self) -> List[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    @property
    def center(self) -> Tuple[float, float]:
        return (self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0

    def contains(self, u: float, v: float) -> bool:
        return self.x_min <= u <= self.x_max and self.y_min <= v <= self.y_max


@dataclass(frozen=True)
class Attribute:
    kind: ConceptKind
    value: str
    score: float


@dataclass(frozen=True)
class Detection:
    label: str
    score: float
    bbox: BoundingBox
    attributes: Tuple[Attribute, ...] = ()


@dataclass(frozen=True)
class FrameDetections:
    frame_id: str
    detections: Tuple[Detection, ...] = ()

    def __post_init__(self):
        if not self.frame_id:
            raise ValueError("frame_id must be non-empty")


def clean_label(raw: str) -> str:
    return " ".join(str(raw).split()).lower()


# --- replay schema --------------------------------------------------------


def _field(obj: Mapping, key: str, where: str):
    if not isinstance(obj, Mapping):
        raise ParseError(f"{where}: expected an object")
    if key not in obj:
        raise ParseError(f"{where}: missing required field {key!r}")
    return obj[key]


def _make_box(coords: Sequence[float], where: str) -> BoundingBox:
    x0, y0, x1, y1 = (_clamp01(c, f"{where} coordinate") for c in coords)
    try:
        return BoundingBox(x0, y0, x1, y1)
    except ValueError as exc:
        raise ParseError(f"{where}: {exc}") from None


def detections_from_dict(doc: Mapping) -> FrameDetections:
    """Parse the replay-file schema."""
    frame_id = _field(doc, "frame_id", "replay document")
    if not isinstance(frame_id, str) or not frame_id:
        raise ParseError("replay document: frame_id must be a non-empty string")
    raw_dets = _field(doc, "detections", "replay document")
    if not isinstance(raw_dets, list):
        raise ParseError("replay document: detections must be a list")
    dets = []
    for i, d in enumerate(raw_dets):
        where = f"detections[{i}]"
        label = _field(d, "label", where)
        score = _clamp01(_number(_field(d, "score", where), f"{where}.score"), f"{where}.score")
        bbox = _field(d, "bbox", where)
        if not isinstance(bbox, list) or len(bbox) != 4:
            raise ParseError(f"{where}.bbox must be [x_min, y_min, x_max, y_max]")
        box = _make_box([_number(c, f"{where}.bbox") for c in bbox], f"{where}.bbox")
        attrs = []
        for j, a in enumerate(d.get("attributes") or []):
            awhere = f"{where}.attributes[{j}]"
            kind = ConceptKind.attribute_kind(_field(a, "kind", awhere))
            value = normalize_label(_field(a, "value", awhere))
            ascore = _clamp01(_number(_field(a, "score", awhere), f"{awhere}.score"), f"{awhere}.score")
            attrs.append(Attribute(kind, value, ascore))
        dets.append(Detection(clean_label(label), score, box, tuple(attrs)))
    return FrameDetections(frame_id, tuple(dets))


def detections_to_dict(fd: FrameDetections) -> dict:
    return {
        "frame_id": fd.frame_id,
        "detections": [
            {
                "label": d.label,
                "score": d.score,
                "bbox": d.bbox.as_list(),
                "attributes": [{"kind": a.kind.value, "value": a.value, "score": a.score} for a in d.attributes],
            }
            for d in fd.detections
        ],
    }


def dump_replay(fd: FrameDetections) -> str:
    return json.dumps(detections_to_dict(fd), indent=2, sort_keys=True) + "\n"


def write_replay(fd: FrameDetections, directory) -> Path:
    path = Path(directory) / f"{fd.frame_id}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_replay(fd), encoding="utf-8")
    return path


# --- cloud response schema ------------------------------------------------


def map_label_annotation(description: str, keywords=DEFAULT_KEYWORDS) -> Optional[Tuple[ConceptKind, str]]:
    token = normalize_label(description)
    for kind in (ConceptKind.COLOR, ConceptKind.MATERIAL, ConceptKind.SHAPE):
        if token in keywords.get(kind, ()):
            return kind, token
    return None


def parse_response(body, frame_id: str = "remote", keywords=DEFAULT_KEYWORDS) -> FrameDetections:
    """Convert a cloud annotate response into ``FrameDetections``.

    ``body`` is the decoded JSON (or its text) of an annotate call with a
    single image: ``{"responses": [{"localizedObjectAnnotations": [...],
    "labelAnnotations": [...]}]}``. Object vertices are reduced to an
    axis-aligned box. Label annotations are image-level; those matching the
    keyword table become attributes, but only when the frame holds exactly one
    object, since they cannot be tied to a particular box otherwise.
    """
    if isinstance(body, (str, bytes)):
        try:
            body = json.loads(body)
        except json.JSONDecodeError as exc:
            raise ParseError(f"response body is not JSON: {exc}") from None
    responses = _field(body, "responses", "response")
    if not isinstance(responses, list) or len(responses) != 1:
        raise ParseError("response: expected exactly one entry in 'responses'")
    resp = responses[0]
    if not isinstance(resp, Mapping):
        raise ParseError("responses[0]: expected an object")
    if "error" in resp:
        err = resp["error"] or {}
        raise ProviderError(err.get("code", 200), str(err.get("message", "")))

    objects = resp.get("localizedObjectAnnotations") or []
    dets = []
    for i, o in enumerate(objects):
        where = f"localizedObjectAnnotations[{i}]"
        name = _field(o, "name", where)
        score = _clamp01(_number(_field(o, "score", where), f"{where}.score"), f"{where}.score")
        poly = _field(o, "boundingPoly", where)
        verts = _field(poly, "normalizedVertices", f"{where}.boundingPoly")
        if not isinstance(verts, list) or not verts:
            raise ParseError(f"{where}.boundingPoly.normalizedVertices must be a non-empty list")
        # zero-valued coordinates are omitted from the wire format
        xs = [_number(v.get("x", 0.0), f"{where} vertex x") for v in verts]
        ys = [_number(v.get("y", 0.0), f"{where} vertex y") for v in verts]
        box = _make_box([min(xs), min(ys), max(xs), max(ys)], f"{where}.boundingPoly")
        dets.append(Detection(clean_label(name), score, box))

    attrs = []
    for j, lab in enumerate(resp.get("labelAnnotations") or []):
        where = f"labelAnnotations[{j}]"
        description = _field(lab, "description", where)
        mapped = map_label_annotation(description, keywords)
        if mapped is None:
            log.warning("label annotation %r has no attribute mapping, dropped", description)
            continue
        lscore = _clamp01(_number(_field(lab, "score", where), f"{where}.score"), f"{where}.score")
        attrs.append(Attribute(mapped[0], mapped[1], lscore))
    if attrs:
        if len(dets) == 1:
            dets[0] = Detection(dets[0].label, dets[0].score, dets[0].bbox, tuple(attrs))
        elif dets:
            log.warning("%d attribute hints dropped: %d objects in frame %s", len(attrs), len(dets), frame_id)
    return FrameDetections(frame_id, tuple(dets))


# --- providers ------------------------------------------------------------


class VisionProvider:
    """Contract shared by the replay and remote providers."""

    def detect(self, frame_id: str, image_ref=None) -> FrameDetections:
        raise NotImplementedError


class ReplayProvider(VisionProvider):
    def __init__(self, directory):
        self.directory = Path(directory)

    def detect(self, frame_id: str, image_ref=None) -> FrameDetections:
        path = self.directory / f"{frame_id}.json"
        try:
            text = path.read_text(encoding="utf-8")
        except FileNotFoundError:
            raise DataMissingError(f"no replay detections for frame {frame_id!r} at {path}") from None
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON ({exc})") from None
        fd = detections_from_dict(doc)
        if fd.frame_id != frame_id:
            raise ParseError(f"{path}: frame_id {fd.frame_id!r} does not match {frame_id!r}")
        return fd


class RateLimiter:
    """Spaces calls at least ``1 / rate`` seconds apart across threads."""

    def __init__(self, rate: float, clock: Callable[[], float] = time.monotonic, sleep=time.sleep):
        self.interval = 1.0 / rate if rate > 0 else 0.0
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._next = -math.inf

    def acquire(self) -> None:
        with self._lock:
            now = self._clock()
            if now < self._next:
                self._sleep(self._next - now)
                now = self._next
            self._next = now + self.interval


class RemoteVisionProvider(VisionProvider):
    FEATURES = [{"type": "OBJECT_LOCALIZATION", "maxResults": 50}, {"type": "LABEL_DETECTION", "maxResults": 50}]

    def __init__(
        self,
        endpoint: str,
        api_key: Optional[str] = None,
        *,
        retries: int = DEFAULT_RETRIES,
        backoff: float = DEFAULT_BACKOFF,
        rate: float = DEFAULT_RATE,
        timeout: float = 30.0,
        keywords=DEFAULT_KEYWORDS,
        session: Optional[requests.Session] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if not endpoint:
            raise ValueError("remote provider needs an endpoint")
        self.endpoint = endpoint
        self.api_key = api_key if api_key is not None else os.environ.get(CREDENTIAL_ENV)
        if not self.api_key:
            raise ValueError(f"remote provider needs a credential (set {CREDENTIAL_ENV})")
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self.keywords = keywords
        self.session = session or requests.Session()
        self._sleep = sleep
        self._limiter = RateLimiter(rate, sleep=sleep)

    def request_body(self, image: bytes) -> dict:
        return {
            "requests": [
                {"image": {"content": base64.b64encode(image).decode("ascii")}, "features": self.FEATURES}
            ]
        }

    def _post(self, body: dict) -> requests.Response:
        self._limiter.acquire()
        try:
            return self.session.post(
                self.endpoint, params={"key": self.api_key}, json=body, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise NetworkError(f"request to {self.endpoint} failed: {exc}") from exc

    def annotate(self, image: bytes) -> dict:
        """POST one image; retry transport failures, 429 and 5xx up to the budget."""
        body = self.request_body(image)
        attempt = 0
        while True:
            try:
                resp = self._post(body)
                if resp.status_code == 429 or resp.status_code >= 500:
                    raise ProviderError(resp.status_code, resp.text[:200])
                break
            except (NetworkError, ProviderError) as exc:
                if attempt >= self.retries:
                    raise
                delay = self.backoff * (2**attempt)
                attempt += 1
                log.warning("remote attempt %d failed (%s); retrying in %.2fs", attempt, exc, delay)
                self._sleep(delay)
        if not 200 <= resp.status_code < 300:
            raise ProviderError(resp.status_code, resp.text[:200])
        try:
            return resp.json()
        except ValueError as exc:
            raise ParseError(f"response body is not JSON: {exc}") from None

    def detect(self, frame_id: str, image_ref=None) -> FrameDetections:
        if image_ref is None:
            raise DataMissingError(f"frame {frame_id!r} has no image to send")
        image = image_ref if isinstance(image_ref, (bytes, bytearray)) else Path(image_ref).read_bytes()
        return parse_response(self.annotate(bytes(image)), frame_id, self.keywords)


def record_session(provider: VisionProvider, frames: Iterable[Tuple[str, object]], out_dir) -> dict:
    """Write one replay file per ``(frame_id, image_ref)``; failures go to ``manifest.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    recorded, failed = [], []
    for frame_id, image_ref in frames:
        try:
            fd = provider.detect(frame_id, image_ref)
        except (SemgraphError, OSError) as exc:
            log.error("frame %s: %s", frame_id, exc)
            entry = {"frame_id": frame_id, "error": type(exc).__name__, "message": str(exc)}
            if isinstance(exc, ProviderError):
                entry["status"] = exc.status
            failed.append(entry)
            continue
        write_replay(fd, out)
        recorded.append(frame_id)
    manifest = {"recorded": recorded, "failed": failed}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest
