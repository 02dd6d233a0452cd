"""Entity-rooted class hierarchy and suffix-typed concepts.

A hierarchy document is a nested ``{"name": ..., "children": [...]}``
structure whose root is ``Entity``. Node ids are the lowercased labels with
runs of whitespace turned into single underscores, so ``"Coffee table"``
becomes ``coffee_table``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

from .errors import InvalidOperationError, LookupFailure, ParseError, SchemaError

ROOT_ID = "entity"
DEFAULT_PRUNE = ("animal", "person")


class ConceptKind(enum.Enum):
    OBJECT = "object"
    MATERIAL = "material"
    SHAPE = "shape"
    COLOR = "color"

    @property
    def suffix(self) -> str:
        return _SUFFIX[self]

    @classmethod
    def from_suffix(cls, suffix: str) -> "ConceptKind":
        try:
            return _FROM_SUFFIX[suffix]
        except KeyError:
            raise ParseError(f"unknown concept suffix {suffix!r}") from None

    @classmethod
    def attribute_kind(cls, text: str) -> "ConceptKind":
        """Parse an attribute kind name; objects are not attributes."""
        try:
            kind = cls(str(text).strip().lower())
        except ValueError:
            raise ParseError(f"unknown attribute kind {text!r}") from None
        if kind is cls.OBJECT:
            raise ParseError("'object' is not an attribute kind")
        return kind


_SUFFIX = {
    ConceptKind.OBJECT: "o",
    ConceptKind.MATERIAL: "m",
    ConceptKind.SHAPE: "s",
    ConceptKind.COLOR: "c",
}
_FROM_SUFFIX = {v: k for k, v in _SUFFIX.items()}
ATTRIBUTE_KINDS = (ConceptKind.MATERIAL, ConceptKind.SHAPE, ConceptKind.COLOR)


def normalize_label(text: str) -> str:
    return "_".join(str(text).lower().split())


@dataclass(frozen=True)
class Concept:
    name: str
    kind: ConceptKind

    def __post_init__(self):
        if not self.name or any(ch.isspace() for ch in self.name) or "#" in self.name:
            raise ValueError(f"invalid concept name {self.name!r}")

    def __str__(self):
        return f"{self.name}.{self.kind.suffix}"

    def __lt__(self, other):
        return str(self) < str(other)

    @classmethod
    def parse(cls, text: str) -> "Concept":
        name, dot, suffix = str(text).rpartition(".")
        if not dot or not name:
            raise ParseError(f"not a concept string: {text!r}")
        try:
            return cls(name, ConceptKind.from_suffix(suffix))
        except ValueError as exc:
            raise ParseError(str(exc)) from None


def obj(name: str) -> Concept:
    return Concept(normalize_label(name), ConceptKind.OBJECT)


@dataclass(frozen=True)
class TaxonomyNode:
    id: str
    display_name: str
    children: Tuple["TaxonomyNode", ...] = ()


def _node_from_document(doc, path: str) -> TaxonomyNode:
    if isinstance(doc, str):
        name, children = doc, []
    elif isinstance(doc, Mapping) and "name" in doc:
        name, children = doc["name"], doc.get("children") or []
    elif isinstance(doc, Mapping) and len(doc) == 1:
        # compact form {"Entity": ["Vehicle", {"Animal": ["Bee"]}]}
        ((name, children),) = doc.items()
        children = children or []
    else:
        raise SchemaError(f"{path}: expected a name/children object")
    if not isinstance(name, str) or not name.strip():
        raise SchemaError(f"{path}: node name must be a non-empty string")
    if not isinstance(children, (list, tuple)):
        raise SchemaError(f"{path}/{name}: children must be a list")
    kids = tuple(_node_from_document(c, f"{path}/{name}") for c in children)
    return TaxonomyNode(normalize_label(name), name.strip(), kids)


class Taxonomy:
    """Immutable tree of classes with parent/depth indexes."""

    def __init__(self, root: TaxonomyNode):
        if root.id != ROOT_ID:
            raise SchemaError(f"root must be named Entity, got {root.display_name!r}")
        self.root = root
        self._nodes: Dict[str, TaxonomyNode] = {}
        self._parent: Dict[str, Optional[str]] = {}
        self._depth: Dict[str, int] = {}
        stack = [(root, None, 0)]
        while stack:
            node, parent, depth = stack.pop()
            if node.id in self._nodes:
                raise SchemaError(f"duplicate node id {node.id!r}")
            self._nodes[node.id] = node
            self._parent[node.id] = parent
            self._depth[node.id] = depth
            stack.extend((c, node.id, depth + 1) for c in reversed(node.children))

    def __contains__(self, node_id) -> bool:
        return node_id in self._nodes

    def __len__(self) -> int:
        return len(self._nodes)

    def __iter__(self) -> Iterator[str]:
        """Node ids in pre-order."""
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node.id
            stack.extend(reversed(node.children))

    def _require(self, node_id: str) -> TaxonomyNode:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise LookupFailure(f"unknown taxonomy node {node_id!r}") from None

    def node(self, node_id: str) -> TaxonomyNode:
        return self._require(node_id)

    def parent(self, node_id: str) -> Optional[str]:
        self._require(node_id)
        return self._parent[node_id]

    def children(self, node_id: str) -> List[str]:
        return [c.id for c in self._require(node_id).children]

    def depth(self, node_id: str) -> int:
        self._require(node_id)
        return self._depth[node_id]

    def leaves(self) -> List[str]:
        return [i for i in self if not self._nodes[i].children]

    def edges(self) -> List[Tuple[str, str]]:
        return [(p, c) for c, p in self._parent.items() if p is not None]

    def stats(self) -> dict:
        return {
            "nodes": len(self),
            "leaves": len(self.leaves()),
            "max_depth": max(self._depth.values()),
        }

    def ancestors(self, node_id: str) -> List[str]:
        self._require(node_id)
        out = []
        cur = self._parent[node_id]
        while cur is not None:
            out.append(cur)
            cur = self._parent[cur]
        return out

    def lowest_common_ancestor(self, a: str, b: str) -> str:
        path_a = [a] + self.ancestors(a)
        on_b = {b, *self.ancestors(b)}
        for node_id in path_a:
            if node_id in on_b:
                return node_id
        raise AssertionError("tree has a single root")  # pragma: no cover

    def resolve_label(self, raw_label: str) -> Optional[str]:
        key = normalize_label(raw_label)
        return key if key in self._nodes else None

    def prune(self, subtree_roots: Iterable[str]) -> "Taxonomy":
        roots = list(subtree_roots)
        for r in roots:
            if r == ROOT_ID:
                raise InvalidOperationError("cannot prune the root 'entity'")
            self._require(r)
        drop = set(roots)

        def rebuild(node: TaxonomyNode) -> TaxonomyNode:
            kids = tuple(rebuild(c) for c in node.children if c.id not in drop)
            return TaxonomyNode(node.id, node.display_name, kids)

        return Taxonomy(rebuild(self.root))

    def inherit_attributes(
        self, defaults: "AttributeDefaults", node_id: str
    ) -> List[Tuple[ConceptKind, str]]:
        found: Dict[ConceptKind, str] = {}
        for nid in [node_id] + self.ancestors(node_id):
            for kind, value in defaults.get(nid, ()):
                found.setdefault(kind, value)
            if len(found) == len(ATTRIBUTE_KINDS):
                break
        return [(k, found[k]) for k in ATTRIBUTE_KINDS if k in found]

    def to_document(self) -> dict:
        def dump(node: TaxonomyNode) -> dict:
            out = {"name": node.display_name}
            if node.children:
                out["children"] = [dump(c) for c in node.children]
            return out

        return dump(self.root)


# Mapping: node id -> [(kind, value), ...]
AttributeDefaults = Dict[str, List[Tuple[ConceptKind, str]]]


def load_taxonomy(source) -> Taxonomy:
    """Build a taxonomy from a parsed document or from a JSON file path."""
    if isinstance(source, (str, Path)) and not (isinstance(source, str) and source.lstrip().startswith("{")):
        try:
            text = Path(source).read_text(encoding="utf-8")
        except OSError as exc:
            raise SchemaError(f"cannot read hierarchy file {source}: {exc}") from exc
        source = text
    if isinstance(source, str):
        try:
            source = json.loads(source) if source.strip() else None
        except json.JSONDecodeError as exc:
            raise SchemaError(f"hierarchy is not valid JSON: {exc}") from exc
    if not source:
        raise SchemaError("empty hierarchy document")
    return Taxonomy(_node_from_document(source, ""))


def bundled_hierarchy_path(name: str = "full") -> Path:
    """Path of a packaged hierarchy: ``full`` or the small ``fixture``."""
    filename = {"full": "hierarchy_full.json", "fixture": "hierarchy_fixture.json"}[name]
    return Path(str(resources.files("semgraph") / "data" / filename))


def load_bundled(name: str = "full") -> Taxonomy:
    return load_taxonomy(bundled_hierarchy_path(name))


def parse_attribute_defaults(records: Sequence[Mapping], taxonomy: Taxonomy) -> AttributeDefaults:
    out: AttributeDefaults = {}
    for i, rec in enumerate(records):
        for key in ("node", "kind", "value"):
            if key not in rec:
                raise SchemaError(f"attribute default #{i} missing {key!r}")
        node = normalize_label(rec["node"])
        if node not in taxonomy:
            raise SchemaError(f"attribute default #{i} references unknown node {rec['node']!r}")
        try:
            kind = ConceptKind.attribute_kind(rec["kind"])
        except ParseError as exc:
            raise SchemaError(f"attribute default #{i}: {exc}") from None
        out.setdefault(node, []).append((kind, normalize_label(rec["value"])))
    return out


def load_attribute_defaults(path, taxonomy: Taxonomy) -> AttributeDefaults:
    with open(path, encoding="utf-8") as fh:
        try:
            records = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(records, list):
        raise SchemaError(f"{path}: expected a list of records")
    return parse_attribute_defaults(records, taxonomy)


# Functional spellings of the taxonomy queries.


def prune(t: Taxonomy, subtree_roots: Iterable[str]) -> Taxonomy:
    return t.prune(subtree_roots)


def resolve_label(t: Taxonomy, raw_label: str) -> Optional[str]:
    return t.resolve_label(raw_label)


def ancestors(t: Taxonomy, node_id: str) -> List[str]:
    return t.ancestors(node_id)


def lowest_common_ancestor(t: Taxonomy, a: str, b: str) -> str:
    return t.lowest_common_ancestor(a, b)


def inherit_attributes(t: Taxonomy, defaults: AttributeDefaults, node_id: str):
    return t.inherit_attributes(defaults, node_id)
