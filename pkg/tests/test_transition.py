"""Course transition network: construction, thresholding, and edge-list files."""

from __future__ import annotations

import random

import numpy as np
import pytest

from ocrank.data import RegistrationRecord
from ocrank.transition import (
    TransitionNetwork,
    apply_threshold,
    build_network,
    load_edgelist,
    neighbors,
    save_edgelist,
)
from conftest import FOUR_COURSE_EDGES


class TestBuildNetwork:
    def test_four_course_golden_weights(self, four_course_records):
        network = build_network(four_course_records)
        assert set(network.edges) == set(FOUR_COURSE_EDGES)
        for src, expected in FOUR_COURSE_EDGES.items():
            got = network.out_weights(src)
            assert set(got) == set(expected)
            for dst, weight in expected.items():
                assert got[dst] == pytest.approx(weight, abs=1e-12)

    def test_out_weights_normalized(self, four_course_records):
        network = build_network(four_course_records)
        for src in network.edges:
            assert sum(network.out_weights(src).values()) == pytest.approx(1.0, abs=1e-12)

    def test_record_order_irrelevant(self, four_course_records):
        shuffled = list(four_course_records)
        random.Random(5).shuffle(shuffled)
        assert build_network(shuffled) == build_network(four_course_records)

    def test_single_student_chain(self):
        records = [
            RegistrationRecord("s", "A", 2008, 1),
            RegistrationRecord("s", "B", 2008, 2),
            RegistrationRecord("s", "C", 2008, 3),
        ]
        network = build_network(records)
        assert network.out_weights("A") == {"B": 1.0}
        assert network.out_weights("B") == {"C": 1.0}
        assert network.out_weights("C") == {}

    def test_gap_year_breaks_chain(self):
        records = [
            RegistrationRecord("s", "A", 2008, 1),
            RegistrationRecord("s", "B", 2008, 3),
        ]
        network = build_network(records)
        assert network.num_edges() == 0
        assert network.nodes == {"A", "B"}

    def test_self_loop_allowed(self):
        records = [
            RegistrationRecord("s", "A", 2008, 1),
            RegistrationRecord("s", "A", 2008, 2),
        ]
        network = build_network(records)
        assert network.out_weights("A") == {"A": 1.0}

    def test_course_index_relabels_nodes(self, four_course_records):
        index = {"A": 0, "B": 1, "C": 2, "D": 3}
        network = build_network(four_course_records, course_index=index)
        assert network.nodes == {0, 1, 2, 3}
        assert network.out_weights(0) == {1: 0.25, 2: 0.5, 3: 0.25}

    def test_relabel_matches_indexed_build(self, four_course_records):
        index = {"A": 0, "B": 1, "C": 2, "D": 3}
        by_id = build_network(four_course_records)
        assert by_id.relabel(index) == build_network(four_course_records, course_index=index)
        with pytest.raises(ValueError):
            by_id.relabel({"A": 0})


class TestApplyThreshold:
    def test_zero_threshold_is_identity(self, four_course_records):
        network = build_network(four_course_records)
        assert apply_threshold(network, 0.0) == network

    def test_drops_weak_edges(self, four_course_records):
        network = apply_threshold(build_network(four_course_records), 0.3)
        kept = {
            (src, dst): w
            for src, targets in network.edges.items()
            for dst, w in targets.items()
        }
        assert kept == {("A", "C"): 0.5, ("B", "C"): 1.0, ("C", "D"): 0.5, ("D", "B"): 1.0}
        # No renormalization: A's only surviving edge keeps its 0.5 weight.
        assert network.out_weights("A") == {"C": 0.5}
        assert network.nodes == {"A", "B", "C", "D"}

    def test_idempotent(self, four_course_records):
        network = build_network(four_course_records)
        once = apply_threshold(network, 0.3)
        assert apply_threshold(once, 0.3) == once

    def test_boundary_keeps_equal_weights(self, four_course_records):
        network = apply_threshold(build_network(four_course_records), 1.0)
        kept = {(s, d) for s, t in network.edges.items() for d in t}
        assert kept == {("B", "C"), ("D", "B")}

    def test_threshold_bounds(self, four_course_records):
        network = build_network(four_course_records)
        with pytest.raises(ValueError):
            apply_threshold(network, -0.1)
        with pytest.raises(ValueError):
            apply_threshold(network, 1.1)


class TestNeighbors:
    def test_sorted_pairs(self, four_course_records):
        network = build_network(four_course_records)
        assert neighbors(network, "C") == [("A", 0.25), ("B", 0.25), ("D", 0.5)]

    def test_sink_has_no_neighbors(self):
        records = [
            RegistrationRecord("s", "A", 2008, 1),
            RegistrationRecord("s", "B", 2008, 2),
        ]
        network = build_network(records)
        assert neighbors(network, "B") == []

    def test_unknown_course_raises(self, four_course_records):
        network = build_network(four_course_records)
        with pytest.raises(KeyError):
            neighbors(network, "Z")


class TestEdgelistIO:
    def test_roundtrip_exact(self, tmp_path):
        # 1/3 and 1/7 exercise full float precision in the text format.
        edges = {
            "A": {"B": 1 / 3, "C": 2 / 3},
            "B": {"A": 1 / 7, "B": 6 / 7},
        }
        network = TransitionNetwork(edges=edges)
        path = tmp_path / "graph.tsv"
        save_edgelist(network, path)
        loaded = load_edgelist(path)
        assert loaded.edges == edges

    def test_file_is_sorted_and_tab_separated(self, tmp_path, four_course_records):
        path = tmp_path / "graph.tsv"
        save_edgelist(build_network(four_course_records), path)
        lines = path.read_text().splitlines()
        assert lines[0] == "A\tB\t0.25"
        assert lines == sorted(lines)

    def test_bad_lines_rejected(self, tmp_path):
        path = tmp_path / "graph.tsv"
        path.write_text("A\tB\n")
        with pytest.raises(ValueError, match="expected source"):
            load_edgelist(path)
        path.write_text("A\tB\theavy\n")
        with pytest.raises(ValueError, match="bad weight"):
            load_edgelist(path)

    def test_sink_only_network_roundtrip(self, tmp_path):
        network = TransitionNetwork(edges={}, nodes=frozenset({"A"}))
        path = tmp_path / "graph.tsv"
        save_edgelist(network, path)
        # Sinks have no edges to serialize; the loaded graph is empty.
        assert load_edgelist(path).num_edges() == 0
