import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semgraph.association import associate, candidates, frame_report, greedy_match
from semgraph.clustering import Cluster
from semgraph.detection import BoundingBox, Detection, FrameDetections
from semgraph.geometry import CameraIntrinsics, Pose

from oracles import containment_edges, is_maximal, maximal_matchings, random_association_instance, unique_optimum

K = CameraIntrinsics(fx=500.0, fy=500.0, cx=320.0, cy=240.0, width=640, height=480)


def cluster_at(u, v, z=2.0):
    # a map-frame centroid that projects to normalized (u, v) under the identity pose
    x = (u * K.width - K.cx) * z / K.fx
    y = (v * K.height - K.cy) * z / K.fy
    return Cluster(tuple(range(30)), (x, y, z))


def frame(*boxes):
    return FrameDetections("f", tuple(Detection(f"obj{i}", 0.9, BoundingBox(*b)) for i, b in enumerate(boxes)))


def pairs(matches):
    return {(m.detection, m.cluster) for m in matches}


def test_single_containment():
    (m,) = associate(frame((0.4, 0.4, 0.6, 0.6)), [cluster_at(0.5, 0.5)], Pose.identity(), K)
    assert (m.detection, m.cluster) == (0, 0)
    assert m.pixel == pytest.approx((0.5, 0.5))
    assert m.center_distance == pytest.approx(0.0, abs=1e-12)


def test_disjoint():
    assert associate(frame((0.1, 0.1, 0.3, 0.3)), [cluster_at(0.9, 0.9)], Pose.identity(), K) == []


def test_nearest_center_wins():
    clusters = [cluster_at(0.45, 0.5), cluster_at(0.59, 0.5)]
    (m,) = associate(frame((0.3, 0.3, 0.7, 0.7)), clusters, Pose.identity(), K)
    assert m.cluster == 0
    assert m.center_distance == pytest.approx(0.05)


def test_cluster_behind_camera_is_not_a_candidate():
    behind = Cluster((0,), (0.0, 0.0, -2.0))
    assert associate(frame((0.0, 0.0, 1.0, 1.0)), [behind], Pose.identity(), K) == []


def test_inclusive_bounds():
    boxes = [BoundingBox(0.2, 0.2, 0.4, 0.4)]
    assert pairs(greedy_match(boxes, [(0.2, 0.4)])) == {(0, 0)}
    assert greedy_match(boxes, [(0.2000001, 0.41)]) == []


def test_tie_break_by_index():
    boxes = [BoundingBox(0.2, 0.2, 0.6, 0.6), BoundingBox(0.2, 0.2, 0.6, 0.6)]
    assert pairs(greedy_match(boxes, [(0.4, 0.4), (0.4, 0.4)])) == {(0, 0), (1, 1)}


def test_greedy_counterexample_to_unique_optimum():
    # box 0 centred at (0.5, 0.5), box 1 at (0.4, 0.5); both hold both pixels
    boxes = [BoundingBox(0.3, 0.3, 0.7, 0.7), BoundingBox(0.1, 0.3, 0.7, 0.7)]
    pixels = [(0.46, 0.5), (0.55, 0.5)]
    # distances: d0-c0 0.04, d0-c1 0.05, d1-c0 0.06, d1-c1 0.15
    greedy = pairs(greedy_match(boxes, pixels))
    assert greedy == {(0, 0), (1, 1)}  # total 0.19
    edges = containment_edges(boxes, pixels)
    found = maximal_matchings(edges)
    assert unique_optimum(found) == frozenset({(0, 1), (1, 0)})  # total 0.11
    assert found[frozenset(greedy)] == pytest.approx(0.19)
    assert is_maximal(greedy, edges)


@pytest.mark.parametrize("seed", range(5))
def test_greedy_one_to_one_and_maximal(seed):
    rng = np.random.default_rng(seed)
    for _ in range(100):
        boxes, pixels = random_association_instance(rng)
        matches = greedy_match(boxes, pixels)
        assert len({m.detection for m in matches}) == len(matches)
        assert len({m.cluster for m in matches}) == len(matches)
        for m in matches:
            assert boxes[m.detection].contains(*m.pixel)
        assert is_maximal(pairs(matches), containment_edges(boxes, pixels))


def test_candidates_agree_with_oracle():
    rng = np.random.default_rng(3)
    for _ in range(200):
        boxes, pixels = random_association_instance(rng)
        ours = sorted((d, c, round(dist, 12)) for dist, d, c, _ in candidates(boxes, pixels))
        theirs = sorted((d, c, round(w, 12)) for d, c, w in containment_edges(boxes, pixels))
        assert ours == theirs


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.data())
def test_irrelevant_detection_changes_nothing(seed, data):
    rng = np.random.default_rng(seed)
    boxes, pixels = random_association_instance(rng)
    before = greedy_match(boxes, pixels)
    # a box that holds no projected pixel, inserted anywhere
    for _ in range(50):
        w, h = rng.uniform(0.01, 0.2, 2)
        x, y = rng.uniform(0, 1 - w), rng.uniform(0, 1 - h)
        extra = BoundingBox(x, y, x + w, y + h)
        if not any(p is not None and extra.contains(*p) for p in pixels):
            break
    else:
        return
    at = data.draw(st.integers(0, len(boxes)))
    after = greedy_match(boxes[:at] + [extra] + boxes[at:], pixels)
    shift = lambda d: d + (d >= at)
    assert {(shift(m.detection), m.cluster, m.center_distance) for m in before} == {
        (m.detection, m.cluster, m.center_distance) for m in after
    }


def test_frame_report_conservation():
    rng = np.random.default_rng(9)
    for _ in range(100):
        boxes, pixels = random_association_instance(rng)
        fd = FrameDetections("f", tuple(Detection("x", 0.9, b) for b in boxes))
        clusters = [Cluster((i,), (0.0, 0.0, 1.0)) for i in range(len(pixels))]
        matches = greedy_match(boxes, pixels)
        c = frame_report(matches, fd, clusters)
        assert c.matched + c.dropped_detections == len(boxes)
        assert c.matched + c.dropped_clusters == len(pixels)


def test_associate_with_no_clusters():
    assert associate(frame((0.1, 0.1, 0.2, 0.2)), [], Pose.identity(), K) == []
