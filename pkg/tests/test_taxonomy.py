import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semgraph.errors import InvalidOperationError, LookupFailure, ParseError, SchemaError
from semgraph.taxonomy import (
    DEFAULT_PRUNE,
    Concept,
    ConceptKind,
    Taxonomy,
    bundled_hierarchy_path,
    inherit_attributes,
    load_attribute_defaults,
    load_taxonomy,
    lowest_common_ancestor,
    normalize_label,
    parse_attribute_defaults,
    prune,
    resolve_label,
)

SMALL = {"name": "Entity", "children": [{"name": "Animal", "children": [{"name": "Bee"}]}, {"name": "Vehicle"}]}


def path_to_root(t, node_id):
    # independent walk over the parent index built from the child lists
    parent = {c: p for p in t for c in t.children(p)}
    out = []
    while node_id in parent:
        node_id = parent[node_id]
        out.append(node_id)
    return out


def test_minimal_tree():
    t = load_taxonomy({"Entity": ["Vehicle", "Building"]})
    assert len(t) == 3
    assert t.depth("entity") == 0 and t.depth("vehicle") == 1


def test_load_from_file_and_json_text(tmp_path):
    p = tmp_path / "h.json"
    p.write_text(json.dumps(SMALL))
    assert list(load_taxonomy(p)) == ["entity", "animal", "bee", "vehicle"]
    assert list(load_taxonomy(json.dumps(SMALL))) == ["entity", "animal", "bee", "vehicle"]


@pytest.mark.parametrize(
    "doc",
    [
        {"Entity": ["Hammer", {"Tool": ["Hammer"]}]},
        {"name": "Thing", "children": []},
        {},
        "",
        {"name": "Entity", "children": "Vehicle"},
        {"name": " ", "children": []},
    ],
)
def test_schema_errors(doc):
    with pytest.raises(SchemaError):
        load_taxonomy(doc)


def test_full_hierarchy_size(full_taxonomy):
    assert len(full_taxonomy) > 800
    pruned = full_taxonomy.prune(DEFAULT_PRUNE)
    assert len(pruned) > 800
    for node in pruned:
        assert not set(path_to_root(pruned, node)) & set(DEFAULT_PRUNE)
        assert node not in DEFAULT_PRUNE


def test_full_hierarchy_shape(full_taxonomy):
    # every node walks up to the root
    for node in full_taxonomy:
        anc = full_taxonomy.ancestors(node)
        assert anc == path_to_root(full_taxonomy, node)
        assert node == "entity" or anc[-1] == "entity"
    stats = full_taxonomy.stats()
    assert stats["nodes"] == len(full_taxonomy)
    assert stats["leaves"] == len(full_taxonomy.leaves())
    assert len(full_taxonomy.edges()) == len(full_taxonomy) - 1


def test_prune_examples():
    t = load_taxonomy(SMALL)
    assert prune(t, ["animal"]).to_document() == {"name": "Entity", "children": [{"name": "Vehicle"}]}
    with pytest.raises(InvalidOperationError):
        t.prune(["entity"])
    with pytest.raises(LookupFailure):
        t.prune(["robot"])
    # original is untouched
    assert "bee" in t


def test_prune_keeps_surviving_paths_and_is_idempotent(small_taxonomy):
    once = small_taxonomy.prune(["animal", "person"])
    assert once.to_document() == once.prune([]).to_document()
    for node in once:
        assert once.ancestors(node) == small_taxonomy.ancestors(node)
    with pytest.raises(LookupFailure):
        once.prune(["animal"])


def test_resolve_label(small_taxonomy, full_taxonomy):
    assert resolve_label(small_taxonomy, "Chair") == "chair"
    assert resolve_label(small_taxonomy, " coffee  table ") == "coffee_table"
    assert resolve_label(small_taxonomy, "COFFEE_TABLE") == "coffee_table"
    assert resolve_label(full_taxonomy, "warp drive") is None
    # exhaustive oracle: no display name normalizes to the probe
    assert all(normalize_label(full_taxonomy.node(n).display_name) != "warp_drive" for n in full_taxonomy)


def test_ancestors_examples():
    t = load_taxonomy(SMALL)
    assert t.ancestors("bee") == ["animal", "entity"]
    assert t.ancestors("entity") == []
    with pytest.raises(LookupFailure):
        t.ancestors("robot")


def test_lca_examples(small_taxonomy):
    t = load_taxonomy(SMALL)
    assert lowest_common_ancestor(t, "bee", "vehicle") == "entity"
    assert t.lowest_common_ancestor("bee", "bee") == "bee"
    assert small_taxonomy.lowest_common_ancestor("desk", "furniture") == "furniture"
    assert small_taxonomy.lowest_common_ancestor("desk", "chair") == "furniture"
    with pytest.raises(LookupFailure):
        t.lowest_common_ancestor("bee", "robot")


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_lca_properties(small_taxonomy, data):
    nodes = list(small_taxonomy)
    a = data.draw(st.sampled_from(nodes))
    b = data.draw(st.sampled_from(nodes))
    lca = small_taxonomy.lowest_common_ancestor(a, b)
    assert lca == small_taxonomy.lowest_common_ancestor(b, a)
    assert small_taxonomy.depth(lca) <= min(small_taxonomy.depth(a), small_taxonomy.depth(b))
    # path-intersection oracle
    pa = [a] + path_to_root(small_taxonomy, a)
    pb = set([b] + path_to_root(small_taxonomy, b))
    assert lca == next(x for x in pa if x in pb)
    for anc in path_to_root(small_taxonomy, a):
        assert small_taxonomy.lowest_common_ancestor(a, anc) == anc


def test_tree_property(small_taxonomy):
    edges = small_taxonomy.edges()
    assert len(edges) == len(small_taxonomy) - 1
    children = [c for _, c in edges]
    assert len(children) == len(set(children))
    assert set(children) == set(small_taxonomy) - {"entity"}


@given(
    st.from_regex(r"[a-z][a-z0-9_]{0,15}", fullmatch=True),
    st.sampled_from(list(ConceptKind)),
)
def test_concept_round_trip(name, kind):
    c = Concept(name, kind)
    assert Concept.parse(str(c)) == c


def test_concept_forms():
    assert str(Concept("chair", ConceptKind.OBJECT)) == "chair.o"
    assert str(Concept("plastic", ConceptKind.MATERIAL)) == "plastic.m"
    assert str(Concept("cuboid", ConceptKind.SHAPE)) == "cuboid.s"
    assert str(Concept("blue", ConceptKind.COLOR)) == "blue.c"
    assert Concept.parse("coffee_table.o").name == "coffee_table"
    for bad in ("chair", "chair.x", ".o"):
        with pytest.raises(ParseError):
            Concept.parse(bad)
    with pytest.raises(ValueError):
        Concept("two words", ConceptKind.OBJECT)


def test_inherit_attributes(small_taxonomy):
    shape = ConceptKind.SHAPE
    defaults = {"furniture": [(shape, "cuboid")]}
    assert inherit_attributes(small_taxonomy, defaults, "chair") == [(shape, "cuboid")]
    defaults = {"furniture": [(shape, "cuboid")], "table": [(shape, "cylinder")]}
    assert small_taxonomy.inherit_attributes(defaults, "table") == [(shape, "cylinder")]
    assert small_taxonomy.inherit_attributes(defaults, "desk") == [(shape, "cylinder")]
    assert small_taxonomy.inherit_attributes(defaults, "mug") == []
    defaults = {
        "furniture": [(ConceptKind.MATERIAL, "wood"), (shape, "cuboid")],
        "chair": [(ConceptKind.COLOR, "black")],
    }
    assert small_taxonomy.inherit_attributes(defaults, "chair") == [
        (ConceptKind.MATERIAL, "wood"),
        (shape, "cuboid"),
        (ConceptKind.COLOR, "black"),
    ]
    with pytest.raises(LookupFailure):
        small_taxonomy.inherit_attributes(defaults, "robot")


def test_attribute_defaults_loader(small_taxonomy, tmp_path):
    p = tmp_path / "defaults.json"
    p.write_text(json.dumps([{"node": "Furniture", "kind": "Shape", "value": "cuboid"}]))
    assert load_attribute_defaults(p, small_taxonomy) == {"furniture": [(ConceptKind.SHAPE, "cuboid")]}
    for rec in (
        {"node": "robot", "kind": "shape", "value": "x"},
        {"node": "chair", "kind": "object", "value": "x"},
        {"node": "chair", "kind": "shape"},
    ):
        with pytest.raises(SchemaError):
            parse_attribute_defaults([rec], small_taxonomy)


def test_bundled_files_exist():
    assert bundled_hierarchy_path("full").is_file()
    assert bundled_hierarchy_path("fixture").is_file()
    assert isinstance(load_taxonomy(bundled_hierarchy_path("fixture")), Taxonomy)
