import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import chain, dags, diamond
from planweave.core import (
    AgentSystemSpec,
    Aggregates,
    Budgets,
    CostClass,
    EventKind,
    NavigationKind,
    NavigationPolicy,
    NodeStatus,
    PlanConfiguration,
    PlanGraph,
    PlanNode,
    StrategySpec,
    TopologyKind,
    Trajectory,
    TrajectoryEvent,
    TriggerKind,
    TriggerSpec,
    check_event_classes,
    decode,
    encode,
    is_legal_transition,
    parse_trajectory_log,
    recompute_aggregates,
    sorted_ids,
    trajectory_log_lines,
    validate_configuration,
    validate_graph,
)
from planweave.errors import OrderingError, SchemaError, TransitionError
from planweave.paradigms import REGISTRY


def ev(step, kind, tin=0, tout=0, cost=CostClass.EXEC, **kw):
    return TrajectoryEvent(step, kind, tin, tout, 0.0, cost, **kw)


class TestValidateGraph:
    def test_empty_graph_is_valid(self):
        assert validate_graph(PlanGraph.build([], [], TopologyKind.DAG)) == []

    def test_two_node_cycle(self):
        g = PlanGraph.build([PlanNode("A"), PlanNode("B")], [("A", "B"), ("B", "A")])
        assert any("cycle" in v for v in validate_graph(g))

    def test_linear_extra_edge_reports_out_degree(self):
        g = chain("ABC")
        g = PlanGraph.build(g.nodes.values(), list(g.edges) + [("A", "C")], TopologyKind.LINEAR)
        assert "out-degree > 1 at A" in validate_graph(g)

    def test_hierarchy_rejects_two_parents(self):
        g = diamond(kind=TopologyKind.HIERARCHY)
        assert "in-degree > 1 at D" in validate_graph(g)

    def test_linear_requires_single_chain(self):
        g = PlanGraph.build([PlanNode("A"), PlanNode("B")], [], TopologyKind.LINEAR)
        assert any("single chain" in v for v in validate_graph(g))

    def test_dangling_and_self_loop(self):
        g = PlanGraph.build([PlanNode("A")], [("A", "Z"), ("A", "A")])
        report = validate_graph(g)
        assert any("unknown node Z" in v for v in report)
        assert "self-loop at A" in report

    @given(dags())
    def test_random_dags_valid(self, g):
        assert validate_graph(g) == []


class TestTransitions:
    LEGAL = {
        (NodeStatus.PENDING, NodeStatus.DISPATCHED),
        (NodeStatus.DISPATCHED, NodeStatus.SUCCEEDED),
        (NodeStatus.DISPATCHED, NodeStatus.FAILED),
        (NodeStatus.FAILED, NodeStatus.DISPATCHED),
        (NodeStatus.SUCCEEDED, NodeStatus.PRUNED),
    }

    def test_relation_matches_table(self):
        for a in NodeStatus:
            for b in NodeStatus:
                assert is_legal_transition(a, b) == ((a, b) in self.LEGAL)

    @given(st.lists(st.sampled_from(list(NodeStatus)), max_size=12))
    def test_random_sequences(self, seq):
        node = PlanNode("A")
        dispatches = 0
        for target in seq:
            if (node.status, target) in self.LEGAL:
                node = node.transition(target)
                dispatches += target is NodeStatus.DISPATCHED
            else:
                with pytest.raises(TransitionError):
                    node.transition(target)
        assert node.attempts == dispatches


class TestAggregates:
    def test_empty(self):
        assert recompute_aggregates(Trajectory("q")) == Aggregates()

    def test_cost_split(self):
        t = Trajectory.from_events("q", [ev(0, EventKind.PLAN_INIT, 0, 100, CostClass.PLAN), ev(1, EventKind.TOOL_CALL, 0, 300)])
        a = recompute_aggregates(t)
        assert (a.c_plan_tokens, a.c_exec_tokens, a.c_total_tokens) == (100, 300, 400)

    def test_failure_count(self):
        t = Trajectory.from_events("q", [ev(1, EventKind.FAILURE_SIGNAL), ev(2, EventKind.FAILURE_SIGNAL)])
        assert recompute_aggregates(t).n_fail == 2

    def test_out_of_order_steps(self):
        with pytest.raises(OrderingError):
            Trajectory.from_events("q", [ev(2, EventKind.DISPATCH), ev(1, EventKind.DISPATCH)])

    def test_steps_retries_revisions(self):
        events = [
            ev(1, EventKind.DISPATCH, node="A"), ev(1, EventKind.DISPATCH, node="B"),
            ev(1, EventKind.REVISION, cost=CostClass.PLAN),
            ev(2, EventKind.DISPATCH, node="A", detail="retry"),
        ]
        a = recompute_aggregates(Trajectory.from_events("q", events))
        assert (a.n_steps, a.n_retries, a.n_revisions) == (2, 1, 1)

    @given(st.lists(st.tuples(st.integers(0, 3), st.sampled_from(list(EventKind)), st.integers(0, 500),
                              st.integers(0, 500), st.sampled_from(list(CostClass)), st.booleans()), max_size=30))
    def test_matches_independent_fold_and_is_idempotent(self, raw):
        step = 0
        events = []
        for inc, kind, tin, tout, cost, retry in raw:
            step += inc
            events.append(ev(step, kind, tin, tout, cost, detail="retry" if retry else ""))
        t = Trajectory.from_events("q", events)
        a = recompute_aggregates(t)
        assert a == recompute_aggregates(Trajectory("q", t.events, aggregates=a))
        plan = sum(e.tokens_in + e.tokens_out for e in events if e.cost_class == CostClass.PLAN)
        exe = sum(e.tokens_in + e.tokens_out for e in events if e.cost_class == CostClass.EXEC)
        assert (a.c_plan_tokens, a.c_exec_tokens, a.c_total_tokens) == (plan, exe, plan + exe)
        assert a.n_fail == sum(e.kind == EventKind.FAILURE_SIGNAL for e in events)
        assert a.n_revisions == sum(e.kind == EventKind.REVISION for e in events)
        assert a.n_steps == len({e.step for e in events if e.kind == EventKind.DISPATCH})
        assert a.n_retries == sum(e.kind == EventKind.DISPATCH and e.detail == "retry" for e in events)

    def test_event_class_check(self):
        bad = [ev(0, EventKind.PLAN_INIT, cost=CostClass.EXEC), ev(1, EventKind.TOOL_CALL, cost=CostClass.PLAN)]
        assert len(check_event_classes(bad)) == 2


class TestEncoding:
    def test_empty_graph_roundtrip(self):
        g = PlanGraph.build([], [], TopologyKind.DAG)
        assert decode(encode(g)) == g

    def test_diamond_roundtrip(self):
        g = diamond({"A": NodeStatus.SUCCEEDED, "A_r": "x"})
        assert decode(encode(g)) == g

    def test_missing_topology_kind(self):
        d = json.loads(encode(diamond()))
        del d["topology_kind"]
        with pytest.raises(SchemaError) as info:
            decode(json.dumps(d))
        assert info.value.field == "topology_kind"

    def test_malformed_node_field_named(self):
        d = json.loads(encode(diamond()))
        d["nodes"][1]["status"] = "Sleeping"
        with pytest.raises(SchemaError) as info:
            decode(d)
        assert "status" in info.value.field

    def test_unknown_type(self):
        with pytest.raises(SchemaError):
            decode('{"type": "banana"}')

    @settings(max_examples=60)
    @given(dags(max_nodes=50))
    def test_random_graph_roundtrip(self, g):
        text = encode(g)
        assert decode(text) == g
        assert encode(decode(text)) == text

    @pytest.mark.parametrize("name", list(REGISTRY))
    def test_registry_configs_roundtrip(self, name):
        c = REGISTRY[name].config
        assert decode(encode(c)) == c

    def test_canonical_key_order(self):
        g1 = PlanGraph.build([PlanNode("B"), PlanNode("A")], [("A", "B")])
        g2 = PlanGraph.build([PlanNode("A"), PlanNode("B")], [("A", "B")])
        assert encode(g1) == encode(g2)

    def test_trajectory_log_roundtrip(self):
        events = [ev(0, EventKind.PLAN_INIT, 5, 7, CostClass.PLAN), ev(1, EventKind.DISPATCH, node="A")]
        t = Trajectory.from_events("q", events, final_answer="x", success=True)
        g = diamond()
        t2, g2 = parse_trajectory_log("\n".join(trajectory_log_lines(t, graph=g)))
        assert (t2, g2) == (t, g)
        assert decode(encode(t)) == t

    def test_replay_zeroes_wall_time(self):
        t1 = Trajectory.from_events("q", [TrajectoryEvent(1, EventKind.OBSERVATION, wall_ms=3.5)])
        t2 = Trajectory.from_events("q", [TrajectoryEvent(1, EventKind.OBSERVATION, wall_ms=9.0)])
        assert encode(t1, replay=True) == encode(t2, replay=True)
        assert encode(t1) != encode(t2)


class TestConfiguration:
    def _cfg(self, nav=NavigationKind.SEQUENTIAL, cap=1, budgets=Budgets(), triggers=()):
        return PlanConfiguration(TopologyKind.DAG, StrategySpec("DependencyParsing"), "PeriodicPruning",
                                 triggers, NavigationPolicy(nav, cap), budgets)

    def test_sequential_needs_cap_one(self):
        assert validate_configuration(self._cfg(cap=2))

    def test_budget_checks(self):
        assert validate_configuration(self._cfg(budgets=Budgets(max_total_tokens=0)))
        assert validate_configuration(self._cfg(budgets=Budgets(max_steps=-1)))
        assert validate_configuration(self._cfg()) == []

    def test_periodic_needs_period(self):
        assert validate_configuration(self._cfg(triggers=(TriggerSpec(TriggerKind.PERIODIC, 0),)))

    def test_agent_spec_validation(self):
        assert AgentSystemSpec(()).validate([])
        assert AgentSystemSpec(("a",), {"a": ("lookup", "teleport")}).validate(["lookup"]) == ["role a: unknown tool teleport"]


def test_natural_id_order():
    assert sorted_ids(["n10", "n2", "B", "A"]) == ["A", "B", "n2", "n10"]
