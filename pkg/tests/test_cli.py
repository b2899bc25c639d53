import json
import subprocess
import sys

import httpx
import pytest

from planweave import cli
from planweave.core import NodeStatus, PlanGraph, PlanNode, TopologyKind, encode
from planweave.llm import ChatClient
from planweave.suite import bundled_tasks

FIVE = [t for t in bundled_tasks()][:5]


@pytest.fixture
def five_tasks(tmp_path):
    path = tmp_path / "tasks.jsonl"
    rows = [{"id": t.id, "query": t.query, "gold": t.gold, "recipe": t.recipe.to_list()} for t in FIVE]
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))
    return str(path)


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


class TestRun:
    def test_five_tasks(self, tmp_path, five_tasks, capsys):
        out_dir = tmp_path / "out"
        code, out, _ = run(["run", "--paradigm", "Flash-Searcher", "--tasks", five_tasks, "--out", str(out_dir)], capsys)
        assert code == 0
        summary = json.loads(out)
        assert summary["n_tasks"] == 5 and summary["accuracy"] == 100.0
        assert sorted(p.name for p in (out_dir / "trajectories").iterdir()) == [f"{t.id}.jsonl" for t in FIVE]
        assert json.loads((out_dir / "summary.json").read_text()) == summary

    def test_missing_task_file(self, capsys):
        code, _, err = run(["run", "--paradigm", "OWL", "--tasks", "/nonexistent.jsonl"], capsys)
        assert code == 1 and "not found" in err

    def test_unknown_paradigm(self, capsys):
        assert run(["run", "--paradigm", "Nope"], capsys)[0] == 1

    def test_dry_run_writes_nothing(self, tmp_path, capsys):
        out_dir = tmp_path / "out"
        code, out, _ = run(["run", "--paradigm", "Co-Sight", "--dry-run", "--out", str(out_dir)], capsys)
        assert code == 0 and json.loads(out)["topology_kind"] == "CrossCheckNet"
        assert not out_dir.exists()

    def test_config_file(self, tmp_path, five_tasks, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"paradigm": "OAgents", "budgets": {"max_steps": 1}, "impedance": {"lambda3": 0.0}}))
        code, out, _ = run(["run", "--config", str(cfg), "--tasks", five_tasks], capsys)
        assert code == 0 and json.loads(out)["mean_steps"] <= 1

    @pytest.mark.parametrize("content", ["not json", '{"colour": 1}', '{"impedance": {"lambda1": -1}}', "[1]"])
    def test_bad_config(self, tmp_path, content, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(content)
        assert run(["run", "--config", str(cfg), "--paradigm", "OWL"], capsys)[0] == 1

    def test_backend_failure_exit_2(self, five_tasks, monkeypatch, capsys):
        def failing(**kw):
            return ChatClient("http://x", "k", transport=httpx.MockTransport(lambda r: httpx.Response(503)), sleep=lambda s: None)

        monkeypatch.setattr(ChatClient, "from_env", staticmethod(failing))
        code, _, err = run(["run", "--paradigm", "OWL", "--tasks", five_tasks, "--backend", "llm", "--model", "m"], capsys)
        assert code == 2 and "backend failure" in err

    def test_llm_without_endpoint(self, five_tasks, monkeypatch, capsys):
        monkeypatch.delenv("PF_BASE_URL", raising=False)
        assert run(["run", "--paradigm", "OWL", "--tasks", five_tasks, "--backend", "llm", "--model", "m"], capsys)[0] == 1

    def test_llm_needs_model(self, five_tasks, capsys):
        assert run(["run", "--paradigm", "OWL", "--tasks", five_tasks, "--backend", "llm"], capsys)[0] == 1

    def test_llm_backend_end_to_end(self, five_tasks, monkeypatch, capsys):
        # a fake model that plans one node and answers with a single lookup
        def handler(request):
            body = json.loads(request.content)
            system = body["messages"][0]["content"]
            if system.startswith("mode:"):
                query = body["messages"][1]["content"].splitlines()[0]
                text = '```plan\n{"nodes": [{"id": "A", "instruction": "%s"}]}\n```' % query.replace('"', "")
            elif body["messages"][-1]["role"] == "user" and body["messages"][-1]["content"].startswith("Observation:"):
                text = "FINAL: " + body["messages"][-1]["content"].split(": ", 1)[1]
            else:
                text = "CALL lookup(capital, Avaria)"
            return httpx.Response(200, json={"choices": [{"message": {"content": text}}], "usage": {"prompt_tokens": 3, "completion_tokens": 1}})

        monkeypatch.setattr(ChatClient, "from_env", staticmethod(lambda **kw: ChatClient("http://x", "k", transport=httpx.MockTransport(handler))))
        code, out, _ = run(["run", "--paradigm", "OWL", "--tasks", five_tasks, "--backend", "llm", "--model", "m", "--jobs", "1"], capsys)
        summary = json.loads(out)
        assert code == 0 and summary["accuracy"] == 20.0 and summary["mean_tokens"] > 0


class TestBench:
    def test_all_seven(self, five_tasks, capsys):
        code, out, _ = run(["bench", "--tasks", five_tasks], capsys)
        assert code == 0 and len(out.strip().splitlines()) == 2 + 7

    def test_single_matches_run(self, tmp_path, five_tasks, capsys):
        run(["bench", "--tasks", five_tasks, "--paradigm", "JoyAgent", "--out", str(tmp_path / "b")], capsys)
        _, out, _ = run(["run", "--tasks", five_tasks, "--paradigm", "JoyAgent"], capsys)
        (row,) = json.loads((tmp_path / "b" / "bench.json").read_text())
        assert row == json.loads(out)

    def test_deterministic_bytes(self, tmp_path, five_tasks, capsys):
        for name in ("a", "b"):
            run(["bench", "--tasks", five_tasks, "--seed", "5", "--out", str(tmp_path / name)], capsys)
        for f in ("bench.txt", "bench.json"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_unknown_name(self, capsys):
        assert run(["bench", "--paradigm", "OWL,Nope"], capsys)[0] == 1


class TestDataset:
    def test_accounting(self, tmp_path, five_tasks, capsys):
        tasks = tmp_path / "three.jsonl"
        tasks.write_text("".join(open(five_tasks).read().splitlines(True)[:3]))
        out_dir = tmp_path / "ds"
        code, out, _ = run(["dataset", "--tasks", str(tasks), "--k", "4", "--out", str(out_dir)], capsys)
        summary = json.loads(out)
        assert code == 0 and summary["n_candidates"] <= 12
        sft = (out_dir / "sft.jsonl").read_text().splitlines()
        assert len(sft) == summary["n_sft"]
        assert len((out_dir / "igpo.jsonl").read_text().splitlines()) == summary["n_pairs"]

    def test_igpo_needs_two(self, capsys):
        assert run(["dataset", "--mode", "igpo", "--k", "1"], capsys)[0] == 1

    def test_sft_mode_only(self, tmp_path, five_tasks, capsys):
        code, _, _ = run(["dataset", "--tasks", five_tasks, "--mode", "sft", "--k", "1", "--out", str(tmp_path)], capsys)
        assert code == 0 and (tmp_path / "sft.jsonl").exists() and not (tmp_path / "igpo.jsonl").exists()

    def test_no_successes(self, tmp_path, capsys):
        tasks = tmp_path / "t.jsonl"
        tasks.write_text('{"id": "x", "query": "lookup(capital, Atlantis)", "gold": "y"}\n')
        code, out, _ = run(["dataset", "--tasks", str(tasks), "--k", "2", "--out", str(tmp_path / "o")], capsys)
        assert code == 0 and json.loads(out)["n_sft"] == 0
        assert (tmp_path / "o" / "sft.jsonl").read_text() == ""

    def test_negative_delta(self, capsys):
        assert run(["dataset", "--delta", "-1"], capsys)[0] == 1


class TestExportDot:
    def _write(self, tmp_path, graph):
        p = tmp_path / "g.json"
        p.write_text(encode(graph))
        return str(p)

    def test_diamond(self, tmp_path, capsys):
        g = PlanGraph.build([PlanNode(i, i) for i in "ABCD"], [("A", "B"), ("A", "C"), ("B", "D"), ("C", "D")], TopologyKind.DAG)
        code, out, _ = run(["export-dot", self._write(tmp_path, g)], capsys)
        assert code == 0 and out.count("shape=box") == 4 and out.count(" -> ") == 4

    def test_empty(self, tmp_path, capsys):
        code, out, _ = run(["export-dot", self._write(tmp_path, PlanGraph.build([], []))], capsys)
        assert code == 0 and out.strip().splitlines()[1:-1] == []

    def test_pruned_dashed(self, tmp_path, capsys):
        from planweave.topology import prune_completed

        S = NodeStatus.SUCCEEDED
        nodes = [PlanNode("U", status=S), PlanNode("M", status=S, result="m"), PlanNode("Q", status=NodeStatus.DISPATCHED), PlanNode("C")]
        g = prune_completed(PlanGraph.build(nodes, [("U", "M"), ("U", "Q"), ("M", "C")]))
        code, out, _ = run(["export-dot", self._write(tmp_path, g)], capsys)
        assert '"U" -> "C" [style="dashed"]' in out

    def test_from_trajectory_log(self, tmp_path, five_tasks, capsys):
        run(["run", "--paradigm", "Flash-Searcher", "--tasks", five_tasks, "--out", str(tmp_path)], capsys)
        log = tmp_path / "trajectories" / f"{FIVE[-1].id}.jsonl"
        code, out, _ = run(["export-dot", str(log), "--out", str(tmp_path / "g.dot")], capsys)
        assert code == 0 and (tmp_path / "g.dot").read_text().startswith("digraph")

    @pytest.mark.parametrize("content", ["garbage", '{"type": "graph"}', '{"type": "config"}'])
    def test_undecodable(self, tmp_path, content, capsys):
        p = tmp_path / "x"
        p.write_text(content)
        assert run(["export-dot", str(p)], capsys)[0] == 1

    def test_missing(self, capsys):
        assert run(["export-dot", "/nope"], capsys)[0] == 1


def test_impedance_command(tmp_path, five_tasks, capsys):
    run(["run", "--paradigm", "OWL", "--tasks", five_tasks, "--out", str(tmp_path)], capsys)
    log = str(tmp_path / "trajectories" / f"{FIVE[0].id}.jsonl")
    code, out, _ = run(["impedance", log], capsys)
    report = json.loads(out)
    assert code == 0 and report[log]["impedance"] >= report[log]["c_tot"]
    assert run(["impedance", str(tmp_path / "summary.json")], capsys)[0] == 1


def test_registry_command(capsys):
    code, out, _ = run(["registry"], capsys)
    assert code == 0 and len(json.loads(out)) == 7
    code, out, _ = run(["registry", "--docs"], capsys)
    assert "Flash-Searcher" in out


def test_verify_math(capsys):
    code, out, _ = run(["verify-math"], capsys)
    assert code == 0 and out.count("PASS") == 6


def test_console_script_entry():
    proc = subprocess.run([sys.executable, "-m", "planweave.cli", "registry"], capture_output=True, text=True)
    assert proc.returncode == 0 and "OWL" in proc.stdout
