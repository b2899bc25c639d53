import random

import pytest
from hypothesis import strategies as st

from planweave.core import NodeStatus, PlanEdge, PlanGraph, PlanNode, TopologyKind
from planweave.planners import Recipe
from planweave.world import ScriptedWorld

STATUSES = list(NodeStatus)


def chain(ids="ABC", kind=TopologyKind.LINEAR, statuses=None):
    statuses = statuses or {}
    nodes = [PlanNode(i, i, f"note({i})", status=statuses.get(i, NodeStatus.PENDING)) for i in ids]
    return PlanGraph.build(nodes, [(a, b) for a, b in zip(ids, ids[1:])], kind)


def diamond(statuses=None, kind=TopologyKind.DAG):
    statuses = statuses or {}
    nodes = [PlanNode(i, i, f"note({i})", status=statuses.get(i, NodeStatus.PENDING), result=statuses.get(i + "_r")) for i in "ABCD"]
    return PlanGraph.build(nodes, [("A", "B"), ("A", "C"), ("B", "D"), ("C", "D")], kind)


def random_dag(rng: random.Random, max_nodes=20, statuses=STATUSES):
    n = rng.randint(0, max_nodes)
    ids = [f"n{i}" for i in range(n)]
    order = ids[:]
    rng.shuffle(order)
    edges = set()
    p = rng.uniform(0.05, 0.4)
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                edges.add((order[i], order[j]))
    nodes = [PlanNode(i, i, f"note({i})", status=rng.choice(statuses), result=f"r{i}") for i in ids]
    # pruned nodes never keep edges
    pruned = {x.id for x in nodes if x.status is NodeStatus.PRUNED}
    edges = {e for e in edges if not (set(e) & pruned)}
    return PlanGraph.build(nodes, edges, TopologyKind.DAG)


@st.composite
def dags(draw, max_nodes=12, statuses=STATUSES):
    seed = draw(st.integers(0, 2**32 - 1))
    return random_dag(random.Random(seed), max_nodes, statuses)


@pytest.fixture
def world():
    return ScriptedWorld(
        {
            ("France", "capital"): "Paris",
            ("Avaria", "capital"): "Ostrel",
            ("Ostrel", "population"): "42000",
            ("Avaria", "population"): "120",
            ("Bormia", "population"): "80",
            ("Cyrene", "population"): "95",
        }
    )


@pytest.fixture
def chain_recipe():
    return Recipe.from_list(
        [
            {"id": "A", "instruction": "lookup(capital, Avaria)"},
            {"id": "B", "instruction": "lookup(population, {A})", "deps": ["A"]},
        ]
    )


@pytest.fixture
def sum_recipe():
    return Recipe.from_list(
        [
            {"id": "A", "instruction": "lookup(population, Avaria)"},
            {"id": "B", "instruction": "lookup(population, Bormia)"},
            {"id": "C", "instruction": "lookup(population, Cyrene)"},
            {"id": "D", "instruction": "calc({A} + {B} + {C})", "deps": ["A", "B", "C"]},
        ]
    )


# one line per acceptance criterion, shown at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
