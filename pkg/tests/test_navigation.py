import zlib

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import dags, diamond
from planweave.core import NavigationKind, NavigationPolicy, NodeKind, NodeStatus, PlanGraph, PlanNode
from planweave.errors import RoleResolutionError
from planweave.navigation import assign_role, next_directives, readiness_score, vote
from planweave.topology import ready_set

S = NodeStatus.SUCCEEDED
ROSTER = ("planner", "searcher")


def ids(ds):
    return [d.node for d in ds]


class TestNextDirectives:
    def test_sequential(self):
        assert ids(next_directives(diamond({"A": S}), NavigationPolicy(NavigationKind.SEQUENTIAL, 1), ROSTER, 1)) == ["B"]

    def test_dynamic_dispatch(self):
        out = next_directives(diamond({"A": S}), NavigationPolicy(NavigationKind.DYNAMIC_DISPATCH, 2), ROSTER, 1)
        assert ids(out) == ["B", "C"]
        assert all(d.issued_at_step == 1 for d in out)

    def test_all_terminal(self):
        g = diamond({k: S for k in "ABCD"})
        for kind in NavigationKind:
            assert next_directives(g, NavigationPolicy(kind, 1 if kind is NavigationKind.SEQUENTIAL else 3), ROSTER, 5) == []

    def test_speculative_dispatch_through_validated_nodes(self):
        nodes = [PlanNode("A", status=NodeStatus.DISPATCHED, aux_validated=True), PlanNode("B")]
        g = PlanGraph.build(nodes, [("A", "B")])
        assert ids(next_directives(g, NavigationPolicy(NavigationKind.CONCURRENT_PATHS, 4), ROSTER, 1)) == ["B"]
        assert ids(next_directives(g, NavigationPolicy(NavigationKind.DYNAMIC_DISPATCH, 4), ROSTER, 1)) == []

    def test_graph_traversal_prefers_satisfied_then_shallow(self):
        # B has a satisfied predecessor; C and E are roots, and C heads a longer chain than E
        nodes = [PlanNode(i, status=S if i == "A" else NodeStatus.PENDING) for i in "ABCDE"]
        g = PlanGraph.build(nodes, [("A", "B"), ("C", "D")])
        out = next_directives(g, NavigationPolicy(NavigationKind.GRAPH_TRAVERSAL, 3), ROSTER, 1)
        assert ids(out) == ["B", "E", "C"]
        assert readiness_score(g, "B") == (1, 0)

    def test_centralized_routing_assigns_roles(self):
        out = next_directives(diamond(), NavigationPolicy(NavigationKind.CENTRALIZED_ROUTING, 2), ROSTER, 1)
        assert out[0].role == assign_role(diamond().nodes["A"], ROSTER)

    @given(dags(), st.sampled_from(list(NavigationKind)), st.integers(1, 5))
    def test_distinct_pending_within_cap(self, g, kind, cap):
        if kind is NavigationKind.SEQUENTIAL:
            cap = 1
        out = next_directives(g, NavigationPolicy(kind, cap), ROSTER, 1)
        chosen = ids(out)
        assert len(chosen) == len(set(chosen)) <= cap
        assert all(g.nodes[i].status is NodeStatus.PENDING for i in chosen)
        assert (chosen == []) == (ready_set(g) == []) or kind is NavigationKind.CONCURRENT_PATHS


class TestAssignRole:
    def test_declared(self):
        assert assign_role(PlanNode("A", role="searcher"), ROSTER) == "searcher"

    def test_declared_missing(self):
        with pytest.raises(RoleResolutionError):
            assign_role(PlanNode("A", role="pilot"), ROSTER)

    def test_empty_roster(self):
        with pytest.raises(RoleResolutionError):
            assign_role(PlanNode("A"), ())

    def test_single_role(self):
        assert {assign_role(PlanNode(i), ["solo"]) for i in "ABC"} == {"solo"}

    def test_verifier(self):
        assert assign_role(PlanNode("A", kind=NodeKind.VERIFICATION), ["a", "verifier"]) == "verifier"

    def test_hash_mapping_independent(self):
        roster = ["zeta", "alpha"]
        for i in ("n1", "n2", "n3"):
            expected = sorted(roster)[zlib.crc32(i.encode()) % 2]
            assert assign_role(PlanNode(i), roster) == expected
            assert assign_role(PlanNode(i), list(reversed(roster))) == expected


class TestVote:
    def test_majority(self):
        assert vote([("n1", "42"), ("n2", "42"), ("n3", "7")]) == "42"

    def test_single(self):
        assert vote([("n1", "x")]) == "x"

    def test_tie_smallest_id(self):
        assert vote([("n2", "a"), ("n1", "b")]) == "b"

    def test_normalizes(self):
        assert vote([("n1", "Paris."), ("n2", " paris"), ("n3", "Lyon")]) == "paris"

    def test_empty(self):
        with pytest.raises(ValueError):
            vote([])
