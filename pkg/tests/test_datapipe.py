import json
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import preference_rule, rule_cases
from planweave.core import Trajectory, encode
from planweave.datapipe import (
    CandidateResult,
    MetaContext,
    PreferenceRecord,
    PromptPack,
    ReferenceExemplar,
    ScriptedMetaPlanner,
    SftRecord,
    SynthesizedConfig,
    TaskSpec,
    build_context,
    build_preference_pairs,
    build_sft_records,
    emit_corpora,
    execution_judge_filter,
    exploratory_synthesis,
    read_corpus,
    registry_pool,
    run_candidate,
    run_pipeline,
    validate_preference,
)
from planweave.engine import Backend
from planweave.errors import ConfigurationError, DataError, SchemaError, StateError, SynthesisError
from planweave.impedance import ImpedanceBreakdown
from planweave.markup import render_config_markup
from planweave.paradigms import REGISTRY
from planweave.planners import ScriptedPlanner

POOL = registry_pool()
CTX = build_context("q", seed=1)
NAMES = list(REGISTRY)


def cand(success, imp, name="OWL"):
    b = ImpedanceBreakdown(imp, 0, imp, 0, 1.0, 0.0, 0.0, imp)
    return CandidateResult(CTX, REGISTRY[name].config, Trajectory("q", success=success), b)


class TestBuildContext:
    def test_pool_of_three(self):
        ctx = build_context("q", reference_pool=POOL[2:5], seed=9)
        assert [r.name for r in ctx.references] == [p.name for p in POOL[2:5]]

    def test_small_pool(self):
        with pytest.raises(ConfigurationError):
            build_context("q", reference_pool=POOL[:2])

    def test_sampling(self):
        triples = {tuple(r.name for r in build_context("q", seed=s).references) for s in range(30)}
        assert len(triples) > 5
        for t in triples:
            assert len(set(t)) == 3
            assert list(t) == [n for n in NAMES if n in t]

    def test_deterministic_and_roundtrip(self):
        a, b = build_context("q", seed=4), build_context("q", seed=4)
        assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())
        assert MetaContext.from_dict(a.to_dict()) == a

    def test_tool_docs_and_prompt(self):
        assert all(n in CTX.tool_docs for n in NAMES)
        assert CTX.user_prompt().count("### Reference") == 3

    def test_wrong_reference_count(self):
        with pytest.raises(ConfigurationError):
            MetaContext("q", "", "", tuple(POOL[:2]), 0)


class TestSynthesis:
    def test_cycling_planner(self):
        a, b = (render_config_markup(REGISTRY[n].config) for n in ("OWL", "Co-Sight"))
        out = exploratory_synthesis(CTX, ScriptedPlanner([a, b]), 4)
        assert [s.config for s in out] == [REGISTRY[n].config for n in ("OWL", "Co-Sight", "OWL", "Co-Sight")]
        assert not any(s.fallback for s in out)

    def test_one_malformed(self):
        out = exploratory_synthesis(CTX, ScriptedMetaPlanner(malformed={1}), 3)
        assert [s.fallback for s in out] == [False, True, False]
        assert out[1].config == CTX.references[0].config

    def test_all_malformed(self):
        with pytest.raises(SynthesisError):
            exploratory_synthesis(CTX, ScriptedPlanner(["nothing"]), 2)

    def test_scripted_meta_planner_deterministic(self):
        a = exploratory_synthesis(CTX, ScriptedMetaPlanner(), 4)
        b = exploratory_synthesis(CTX, ScriptedMetaPlanner(), 4)
        assert a == b and all(s.tokens_in > 0 for s in a)


class TestFilterAndPairs:
    def test_filter(self):
        s1, f, s2 = cand(True, 1), cand(False, 2), cand(True, 3)
        assert execution_judge_filter([s1, f, s2]) == [s1, s2]
        assert execution_judge_filter([f, f]) == []
        assert execution_judge_filter([s1, s2]) == [s1, s2]

    def test_worked_example(self):
        c1, c2, c3 = cand(True, 3.0, "OWL"), cand(True, 3.5, "JoyAgent"), cand(False, 1.0, "Co-Sight")
        pairs = build_preference_pairs([c1, c2, c3], delta=0.2)
        got = [(p.winner, p.loser) for p in pairs]
        assert got == [(c1.config, c2.config), (c1.config, c3.config), (c2.config, c3.config)]
        assert pairs[0].loser_impedance - pairs[0].winner_impedance == 0.5

    def test_small_gap(self):
        assert build_preference_pairs([cand(True, 3.0), cand(True, 3.1)], delta=0.2) == []

    def test_two_failures(self):
        assert build_preference_pairs([cand(False, 1.0), cand(False, 9.0)], delta=0.0) == []

    def test_unjudged(self):
        with pytest.raises(StateError):
            build_preference_pairs([cand(None, 1.0), cand(True, 2.0)])

    def test_relative_default_delta(self):
        # default threshold is a tenth of the winner's impedance
        assert build_preference_pairs([cand(True, 10.0), cand(True, 11.0)]) == []
        (p,) = build_preference_pairs([cand(True, 10.0), cand(True, 11.5)])
        assert p.delta == pytest.approx(1.0) and p.winner_impedance == 10.0

    @pytest.mark.parametrize("ra,rb,gap", list(rule_cases()))
    def test_rule_table(self, ra, rb, gap):
        delta = 0.1
        a, b = cand(bool(ra), 2.0, "OWL"), cand(bool(rb), 2.0 + gap, "Co-Sight")
        pairs = build_preference_pairs([a, b], delta)
        want = preference_rule(ra, rb, 2.0, 2.0 + gap, delta)
        if want is None:
            assert pairs == []
        else:
            (p,) = pairs
            winner = a if want == "a" else b
            assert p.winner == winner.config
            assert validate_preference(p) == []

    @given(st.lists(st.tuples(st.booleans(), st.floats(0, 100)), min_size=2, max_size=6), st.floats(0, 5))
    def test_every_pair_valid(self, raw, delta):
        cands = [cand(s, i, NAMES[j % 7]) for j, (s, i) in enumerate(raw)]
        pairs = build_preference_pairs(cands, delta)
        expected = sum(
            preference_rule(a[0], b[0], a[1], b[1], delta) is not None
            for k, a in enumerate(raw) for b in raw[k + 1:]
        )
        assert len(pairs) == expected
        assert all(validate_preference(p) == [] for p in pairs)


class TestCorpora:
    def test_empty(self, tmp_path):
        path = tmp_path / "sft.jsonl"
        assert emit_corpora([], path) == 0 and path.read_text() == ""

    def test_sft_roundtrip(self, tmp_path):
        recs = [SftRecord(build_context("q", seed=i), REGISTRY[NAMES[i]].config, f"plan {i}") for i in range(5)]
        path = tmp_path / "sft.jsonl"
        assert emit_corpora(recs, path) == 5
        assert len(path.read_text().splitlines()) == 5
        assert read_corpus(path) == recs

    def test_preference_roundtrip(self, tmp_path):
        pairs = build_preference_pairs([cand(True, 3.0), cand(True, 3.5, "JoyAgent"), cand(False, 1.0)], 0.2)
        path = tmp_path / "igpo.jsonl"
        emit_corpora(pairs, path)
        assert read_corpus(path) == pairs

    def test_mixed_types(self, tmp_path):
        sft = SftRecord(CTX, REGISTRY["OWL"].config, "")
        (pair,) = build_preference_pairs([cand(True, 1.0), cand(False, 1.0)])
        with pytest.raises(TypeError):
            emit_corpora([sft, pair], tmp_path / "x.jsonl")

    def test_invalid_record_rejected(self, tmp_path):
        bad = PreferenceRecord(CTX, REGISTRY["OWL"].config, REGISTRY["OWL"].config, 3.0, 3.1, True, True, 0.5)
        with pytest.raises(DataError):
            emit_corpora([bad], tmp_path / "x.jsonl")

    def test_malformed_file(self, tmp_path):
        path = tmp_path / "x.jsonl"
        path.write_text('{"type": "sft"}\n')
        with pytest.raises(SchemaError):
            read_corpus(path)


class TestPipeline:
    def _run(self, world, sum_recipe, jobs):
        from planweave.agents import ScriptedExecutor
        from planweave.planners import TaskPlanner

        tasks = [TaskSpec("t1", "q", "295"), TaskSpec("t2", "lookup(capital, France)", "Paris")]
        factory = lambda: Backend(ScriptedExecutor(world), TaskPlanner({"q": sum_recipe}))
        return run_pipeline(tasks, factory, ScriptedMetaPlanner(), k=4, seed=3, jobs=jobs)

    def test_deterministic_and_consistent(self, world, sum_recipe, tmp_path):
        a, b = self._run(world, sum_recipe, 4), self._run(world, sum_recipe, 1)
        assert a.summary() == b.summary()
        assert a.summary()["n_candidates"] == 8
        for r, name in ((a, "a"), (b, "b")):
            emit_corpora(r.sft, tmp_path / f"{name}_sft.jsonl")
            emit_corpora(r.pairs, tmp_path / f"{name}_igpo.jsonl")
        for kind in ("sft", "igpo"):
            assert (tmp_path / f"a_{kind}.jsonl").read_bytes() == (tmp_path / f"b_{kind}.jsonl").read_bytes()
        assert len(a.sft) == sum(c.success for c in a.candidates)

    def test_failed_config_becomes_failed_candidate(self, world):
        from dataclasses import replace

        from planweave.agents import ScriptedExecutor
        from planweave.core import StrategySpec
        from planweave.planners import TaskPlanner

        bad = replace(REGISTRY["OWL"].config, init_strategy=StrategySpec("Telepathy"))
        c = run_candidate(CTX, SynthesizedConfig(bad), "x", Backend(ScriptedExecutor(world), TaskPlanner()), 0)
        assert c.success is False and c.impedance.impedance == 0.0
