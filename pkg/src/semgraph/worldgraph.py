"""World model: fused object instances, typed triples, topology and export."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

from .errors import KindError, LookupFailure, ParseError, SchemaError
from .taxonomy import ROOT_ID, Concept, ConceptKind, Taxonomy

SCHEMA_VERSION = 1
DEFAULT_MERGE_RADIUS = 0.5
DEFAULT_LINK_DISTANCE = 1.5

# fill colors of the four node groups in DOT output
GROUP_COLORS = {
    ConceptKind.OBJECT: "#8fb9e3",
    ConceptKind.MATERIAL: "#f3b562",
    ConceptKind.SHAPE: "#9bd4a0",
    ConceptKind.COLOR: "#ee8d8d",
}


class Predicate(enum.Enum):
    HAS_COLOR = "ObjHasColor"
    HAS_MATERIAL = "ObjHasMaterial"
    HAS_SHAPE = "ObjHasShape"
    IS_A = "IsA"
    NEAR_TO = "NearTo"

    @classmethod
    def parse(cls, text: str) -> "Predicate":
        try:
            return cls(text)
        except ValueError:
            raise ParseError(f"unknown predicate {text!r}") from None


ATTRIBUTE_PREDICATE = {
    ConceptKind.COLOR: Predicate.HAS_COLOR,
    ConceptKind.MATERIAL: Predicate.HAS_MATERIAL,
    ConceptKind.SHAPE: Predicate.HAS_SHAPE,
}
_PREDICATE_KIND = {v: k for k, v in ATTRIBUTE_PREDICATE.items()}


@dataclass(frozen=True)
class InstanceRef:
    instance_id: int
    concept: Concept

    def __str__(self):
        return f"{self.concept}#{self.instance_id}"


Term = Union[Concept, InstanceRef]


def parse_term(text: str) -> Term:
    head, sep, tail = str(text).partition("#")
    concept = Concept.parse(head)
    if not sep:
        return concept
    try:
        return InstanceRef(int(tail), concept)
    except ValueError:
        raise ParseError(f"bad instance reference {text!r}") from None


def _term_key(t: Term):
    if isinstance(t, InstanceRef):
        return (str(t.concept), t.instance_id)
    return (str(t), -1)


def _is_object(t: Term) -> bool:
    c = t.concept if isinstance(t, InstanceRef) else t
    return c.kind is ConceptKind.OBJECT


def typing_violation(subject: Term, predicate: Predicate, obj: Term) -> Optional[str]:
    """Why a triple breaks the predicate typing rules, or ``None``."""
    if predicate is Predicate.NEAR_TO:
        if not (isinstance(subject, InstanceRef) and isinstance(obj, InstanceRef)):
            return "NearTo links two instance references"
        if subject.instance_id == obj.instance_id:
            return "NearTo cannot link an instance to itself"
        return None
    if predicate is Predicate.IS_A:
        if not (isinstance(subject, Concept) and isinstance(obj, Concept)):
            return "IsA links two concepts"
        if not (_is_object(subject) and _is_object(obj)):
            return "IsA links two object concepts"
        return None
    if not _is_object(subject):
        return f"{predicate.value} needs an object subject"
    if not isinstance(obj, Concept) or obj.kind is not _PREDICATE_KIND[predicate]:
        return f"{predicate.value} needs a {_PREDICATE_KIND[predicate].value} concept as object"
    return None


@dataclass(frozen=True)
class Triple:
    subject: Term
    predicate: Predicate
    object: Term

    def __post_init__(self):
        problem = typing_violation(self.subject, self.predicate, self.object)
        if problem:
            raise KindError(f"{self}: {problem}")

    def __str__(self):
        return f"{self.subject} {self.predicate.value} {self.object}"

    def sort_key(self):
        return (_term_key(self.subject), self.predicate.value, _term_key(self.object))

    @classmethod
    def parse(cls, text: str) -> "Triple":
        parts = str(text).split()
        if len(parts) != 3:
            raise ParseError(f"triple needs 3 tokens, got {len(parts)}: {text!r}")
        return cls(parse_term(parts[0]), Predicate.parse(parts[1]), parse_term(parts[2]))


@dataclass
class ObjectInstance:
    instance_id: int
    concept: Concept
    centroid: Tuple[float, float, float]
    observations: int = 1
    first_frame: str = ""
    last_frame: str = ""
    attributes: Dict[Tuple[ConceptKind, str], float] = field(default_factory=dict)
    provisional: bool = False

    @property
    def ref(self) -> InstanceRef:
        return InstanceRef(self.instance_id, self.concept)

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "concept": str(self.concept),
            "centroid": list(self.centroid),
            "observations": self.observations,
            "first_frame": self.first_frame,
            "last_frame": self.last_frame,
            "attributes": [
                [k.value, v, s] for (k, v), s in sorted(self.attributes.items(), key=lambda i: (i[0][0].value, i[0][1]))
            ],
            "provisional": self.provisional,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ObjectInstance":
        return cls(
            instance_id=int(d["instance_id"]),
            concept=Concept.parse(d["concept"]),
            centroid=tuple(float(c) for c in d["centroid"]),
            observations=int(d["observations"]),
            first_frame=d["first_frame"],
            last_frame=d["last_frame"],
            attributes={(ConceptKind(k), v): float(s) for k, v, s in d["attributes"]},
            provisional=bool(d["provisional"]),
        )


def _distance(a, b) -> float:
    return math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))


class WorldGraph:
    """Single-writer store of instances and triples."""

    def __init__(self):
        self.instances: Dict[int, ObjectInstance] = {}
        self.triples: Set[Triple] = set()
        self.frame_log: List[str] = []
        self._next_id = 1

    def __eq__(self, other):
        if not isinstance(other, WorldGraph):
            return NotImplemented
        return (
            self.instances == other.instances
            and self.triples == other.triples
            and self.frame_log == other.frame_log
        )

    def upsert_instance(
        self,
        concept: Concept,
        centroid: Sequence[float],
        attributes: Iterable[Tuple[ConceptKind, str, float]] = (),
        frame_id: str = "",
        merge_radius: float = DEFAULT_MERGE_RADIUS,
        provisional: bool = False,
    ) -> int:
        """Merge into the nearest same-concept instance within ``merge_radius`` or create one."""
        if concept.kind is not ConceptKind.OBJECT:
            raise KindError(f"instances need an object concept, got {concept}")
        if not merge_radius > 0:
            raise ValueError(f"merge_radius must be positive, got {merge_radius}")
        centroid = tuple(float(c) for c in centroid)
        near = [
            (d, inst.instance_id)
            for inst in self.instances.values()
            if inst.concept == concept and (d := _distance(inst.centroid, centroid)) < merge_radius
        ]
        best = self.instances[min(near)[1]] if near else None
        if best is None:
            inst = ObjectInstance(
                self._next_id, concept, centroid, 1, frame_id, frame_id, {}, provisional
            )
            self.instances[inst.instance_id] = inst
            self._next_id += 1
        else:
            inst = best
            n = inst.observations
            inst.centroid = tuple((c * n + x) / (n + 1) for c, x in zip(inst.centroid, centroid))
            inst.observations = n + 1
            inst.last_frame = frame_id
        for kind, value, score in attributes:
            key = (kind, value)
            if score > inst.attributes.get(key, -math.inf):
                inst.attributes[key] = float(score)
        return inst.instance_id

    def instance(self, instance_id: int) -> ObjectInstance:
        try:
            return self.instances[instance_id]
        except KeyError:
            raise LookupFailure(f"unknown instance {instance_id}") from None

    def emit_triples(self, instance_id: int, taxonomy: Taxonomy, full_chain: bool = False) -> Set[Triple]:
        """Add attribute and IsA triples for one instance; returns the newly added ones."""
        inst = self.instance(instance_id)
        wanted = {
            Triple(inst.concept, ATTRIBUTE_PREDICATE[kind], Concept(value, kind)) for kind, value in inst.attributes
        }
        name = inst.concept.name
        if not inst.provisional and name in taxonomy:
            chain = taxonomy.ancestors(name)
            parents = chain if full_chain else chain[:1]
        else:
            parents = [] if name == ROOT_ID else [ROOT_ID]
        wanted.update(Triple(inst.concept, Predicate.IS_A, Concept(p, ConceptKind.OBJECT)) for p in parents)
        new = wanted - self.triples
        self.triples |= new
        return new

    def build_topology(self, link_distance: float = DEFAULT_LINK_DISTANCE) -> Set[Triple]:
        if not link_distance > 0:
            raise ValueError(f"link_distance must be positive, got {link_distance}")
        self.triples = {t for t in self.triples if t.predicate is not Predicate.NEAR_TO}
        ordered = sorted(self.instances.values(), key=lambda i: i.instance_id)
        links = set()
        for i, a in enumerate(ordered):
            for b in ordered[i + 1 :]:
                if _distance(a.centroid, b.centroid) <= link_distance:
                    links.add(Triple(a.ref, Predicate.NEAR_TO, b.ref))
        self.triples |= links
        return links

    def query(self, subject=None, predicate=None, obj=None) -> List[Triple]:
        s = parse_term(subject) if isinstance(subject, str) else subject
        p = Predicate.parse(predicate) if isinstance(predicate, str) else predicate
        o = parse_term(obj) if isinstance(obj, str) else obj
        hits = [
            t
            for t in self.triples
            if (s is None or t.subject == s) and (p is None or t.predicate is p) and (o is None or t.object == o)
        ]
        return sorted(hits, key=Triple.sort_key)

    def violations(self) -> List[str]:
        """Full scan of the typing and reference invariants."""
        problems = []
        for t in sorted(self.triples, key=Triple.sort_key):
            why = typing_violation(t.subject, t.predicate, t.object)
            if why:
                problems.append(f"{t}: {why}")
            for term in (t.subject, t.object):
                if isinstance(term, InstanceRef):
                    inst = self.instances.get(term.instance_id)
                    if inst is None or inst.concept != term.concept:
                        problems.append(f"{t}: dangling instance reference {term}")
        return problems

    # --- persistence ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "next_instance_id": self._next_id,
            "frame_log": list(self.frame_log),
            "instances": [self.instances[i].to_dict() for i in sorted(self.instances)],
            "triples": [
                [str(t.subject), t.predicate.value, str(t.object)] for t in sorted(self.triples, key=Triple.sort_key)
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "WorldGraph":
        version = doc.get("schema_version")
        if version != SCHEMA_VERSION:
            raise SchemaError(f"unsupported world schema_version {version!r}")
        try:
            w = cls()
            for d in doc["instances"]:
                inst = ObjectInstance.from_dict(d)
                w.instances[inst.instance_id] = inst
            w.triples = {Triple(parse_term(s), Predicate.parse(p), parse_term(o)) for s, p, o in doc["triples"]}
            w.frame_log = [str(f) for f in doc["frame_log"]]
            w._next_id = int(doc.get("next_instance_id", max(w.instances, default=0) + 1))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed world document: {exc}") from exc
        return w

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "WorldGraph":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(doc)

    # --- export -----------------------------------------------------------

    def _nodes(self) -> Dict[str, dict]:
        nodes: Dict[str, dict] = {}

        def add(term: Term):
            key = str(term)
            if key in nodes:
                return
            if isinstance(term, InstanceRef):
                inst = self.instances[term.instance_id]
                nodes[key] = {
                    "id": key,
                    "kind": ConceptKind.OBJECT.value,
                    "label": inst.concept.name,
                    "instance_id": inst.instance_id,
                    "centroid": list(inst.centroid),
                    "observations": inst.observations,
                    "provisional": inst.provisional,
                }
            else:
                nodes[key] = {"id": key, "kind": term.kind.value, "label": term.name}

        for inst in self.instances.values():
            add(inst.ref)
            add(inst.concept)
        for t in self.triples:
            add(t.subject)
            add(t.object)
        return nodes

    def graph_document(self) -> dict:
        nodes = self._nodes()
        return {
            "nodes": [nodes[k] for k in sorted(nodes)],
            "edges": [
                {"source": str(t.subject), "predicate": t.predicate.value, "target": str(t.object)}
                for t in sorted(self.triples, key=Triple.sort_key)
            ],
        }

    def to_dot(self) -> str:
        lines = [
            "digraph world {",
            '  graph [overlap=false, splines=true];',
            '  node [style=filled, fontname="Helvetica"];',
            "  edge [dir=none, fontsize=9];",
        ]
        nodes = self._nodes()
        for key in sorted(nodes):
            n = nodes[key]
            color = GROUP_COLORS[ConceptKind(n["kind"])]
            shape = "box" if "instance_id" in n else "ellipse"
            lines.append(f'  {_dot_id(key)} [label={_dot_id(key)}, shape={shape}, fillcolor="{color}"];')
        for t in sorted(self.triples, key=Triple.sort_key):
            lines.append(f"  {_dot_id(str(t.subject))} -> {_dot_id(str(t.object))} [label=\"{t.predicate.value}\"];")
        lines.append("}")
        return "\n".join(lines) + "\n"

    def export(self, fmt: str, out) -> Path:
        path = Path(out)
        if fmt == "graph-json":
            text = json.dumps(self.graph_document(), indent=2, sort_keys=True) + "\n"
        elif fmt == "dot":
            text = self.to_dot()
        else:
            raise ValueError(f"unknown export format {fmt!r}")
        path.write_text(text, encoding="utf-8")
        return path


def _dot_id(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


# Functional spellings.


def upsert_instance(w: WorldGraph, concept, centroid, attributes, frame_id, merge_radius=DEFAULT_MERGE_RADIUS) -> int:
    return w.upsert_instance(concept, centroid, attributes, frame_id, merge_radius)


def emit_triples(w: WorldGraph, instance_id: int, taxonomy: Taxonomy, full_chain: bool = False) -> Set[Triple]:
    return w.emit_triples(instance_id, taxonomy, full_chain)


def build_topology(w: WorldGraph, link_distance: float = DEFAULT_LINK_DISTANCE) -> Set[Triple]:
    return w.build_topology(link_distance)


def query(w: WorldGraph, pattern) -> List[Triple]:
    s, p, o = pattern
    return w.query(s, p, o)


def export(w: WorldGraph, fmt: str, out) -> Path:
    return w.export(fmt, out)


def save_world(w: WorldGraph, path) -> None:
    w.save(path)


def load_world(path) -> WorldGraph:
    return WorldGraph.load(path)
