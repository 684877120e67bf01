import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from hlftune import loop
from hlftune.bench import ExecutorSpec, ExternalSpec, make_synthetic
from hlftune.config import config_from_dict
from hlftune.errors import ReplayMismatch
from hlftune.loop import (MethodSpec, TrialSettings, canonical_methods, read_log, resume_trial, run_experiment,
                          run_trial)

SMALL = TrialSettings(budget=40, n_init=12, K=5, design_seed=0)
FAKE = str(Path(__file__).with_name("fake_bench.py"))


@pytest.fixture(scope="module")
def methods():
    return {m.name: m for m in canonical_methods(experiment_seed=0, m=6)}


def test_canonical_grid():
    ms = canonical_methods(0)
    assert len(ms) == 17 and sum(m.kind == "bo" for m in ms) == 16
    assert len({m.name for m in ms}) == 17 and len({m.seed for m in ms}) == 17
    assert {(m.acq.kind, m.dr.kind) for m in ms if m.kind == "bo"} == {
        (a, d) for a in loop.AF_ORDER for d in loop.DR_ORDER}


def test_method_spec_validation_and_roundtrip(methods):
    with pytest.raises(ValueError):
        MethodSpec("x", "bo")
    with pytest.raises(ValueError):
        MethodSpec("x", "grid")
    for m in methods.values():
        assert MethodSpec.from_dict(json.loads(json.dumps(m.to_dict()))) == m


def test_settings_validation():
    with pytest.raises(ValueError):
        TrialSettings(budget=10, n_init=10)


@pytest.mark.parametrize("name", ["EI-PCA", "MPI-REMBO", "UCB-SA", "DYCORS-SHAP", "random"])
def test_protocol_invariants(name, methods, fabric_space, fabric_templates, fabric_executor, tmp_path):
    state = run_trial(methods[name], fabric_space, fabric_templates, fabric_executor, SMALL, tmp_path / "t.jsonl")
    assert state.completed and len(state.history) == SMALL.budget
    assert [r.iteration for r in state.history] == list(range(SMALL.budget))
    trace = [v for v in state.incumbent_trace if v is not None]
    assert all(b >= a for a, b in zip(trace, trace[1:]))
    ok = state.ok_records()
    assert state.incumbent[1] == max(r.obs.tps_norm for r in ok)
    for r in ok:
        assert abs(r.obs.tps_norm * state.ref_stats.ref_mean - r.obs.tps_raw) <= 1e-9 * r.obs.tps_raw
    X, y = state.training_set()
    assert len(X) == len(ok)
    parsed = read_log(tmp_path / "t.jsonl")
    assert len(parsed["evals"]) == SMALL.budget
    assert parsed["footer"]["completed"] and parsed["reference"]["ref_mean"] == state.ref_stats.ref_mean
    assert parsed["header"]["param_names"] == fabric_space.names
    assert all(len(e["config"]) == fabric_space.d for e in parsed["evals"])


def test_reference_is_first_ok_point(methods, fabric_space, fabric_templates, fabric_executor):
    state = run_trial(methods["random"], fabric_space, fabric_templates, fabric_executor, SMALL)
    first_ok = state.ok_records()[0]
    assert np.array_equal(state.ref_stats.ref_point, first_ok.x)
    assert len(state.ref_stats.runs) == SMALL.K and state.ref_stats.runs[0] == first_ok.obs.tps_raw
    assert state.ref_stats.ref_mean / state.ref_stats.ref_mean == 1.0


def test_failures_excluded_from_training(methods, fabric_space, fabric_templates):
    ex = ExecutorSpec("synthetic", synthetic=make_synthetic(fabric_space, seed=1, n_failure_rules=6,
                                                            failure_threshold=0.7))
    state = run_trial(methods["EI-SA"], fabric_space, fabric_templates, ex, SMALL)
    failed = [r for r in state.history if not r.obs.ok]
    assert failed, "expected some failed evaluations"
    X, y = state.training_set()
    assert len(X) == SMALL.budget - len(failed)
    assert all(r.obs.tps_norm is None for r in failed)
    Xi, yi = state.training_set(impute_failures=True)
    assert len(Xi) == SMALL.budget and np.all(yi[len(X):] == y.min())


def test_infeasible_proposals_still_consume_budget(methods, fabric_space, fabric_templates, fabric_executor, monkeypatch):
    i = fabric_space.index_of("channel/Orderer.BatchSize.PreferredMaxBytes")
    j = fabric_space.index_of("channel/Orderer.BatchSize.AbsoluteMaxBytes")

    def bad(state, t, settings, space):
        x = np.full(space.d, 0.5)
        x[i], x[j] = 1.0, 0.0
        return x, {"refit": False, "active_dim": space.d}

    monkeypatch.setattr(loop, "propose", bad)
    state = run_trial(methods["EI-PCA"], fabric_space, fabric_templates, fabric_executor, SMALL)
    assert len(state.history) == SMALL.budget
    assert all(r.obs.status == "infeasible" for r in state.history[SMALL.n_init:])
    assert state.incumbent[1] == max(r.obs.tps_norm for r in state.history[:SMALL.n_init] if r.obs.ok)


def test_identical_seeds_give_identical_histories(methods, fabric_space, fabric_templates, fabric_executor):
    a = run_trial(methods["DYCORS-PCA"], fabric_space, fabric_templates, fabric_executor, SMALL)
    b = run_trial(methods["DYCORS-PCA"], fabric_space, fabric_templates, fabric_executor, SMALL)
    assert all(np.array_equal(r.x, s.x) and r.obs.tps_raw == s.obs.tps_raw for r, s in zip(a.history, b.history))


def _experiment(tmp_path, names, **extra):
    doc = {"seed": 0, "budget": SMALL.budget, "n_init": SMALL.n_init, "K": SMALL.K,
           "executor": {"kind": "synthetic", "generate": {}}, "reduction": {"m": 6},
           "methods": [{"kind": "random"} if n == "random" else dict(zip(("af", "dr"), n.split("-"))) for n in names],
           "out": str(tmp_path)}
    doc.update(extra)
    return config_from_dict(doc)


@pytest.mark.parametrize("name,cut", [("EI-SA", 25), ("UCB-PCA", 12), ("DYCORS-SHAP", 31), ("MPI-REMBO", 20),
                                      ("random", 17)])
def test_resume_reproduces_next_proposal(name, cut, tmp_path):
    cfg = _experiment(tmp_path / "full", [name])
    run_experiment(cfg, parallelism=1)
    full = tmp_path / "full" / loop.trial_log_name(name)
    lines = full.read_text().splitlines()
    # header, reference, then evaluations
    head = [ln for ln in lines if json.loads(ln)["type"] in ("trial", "reference")]
    evals = [ln for ln in lines if json.loads(ln)["type"] == "eval"]
    (tmp_path / "cut.jsonl").write_text("\n".join(head + evals[:cut]) + "\n")
    state = resume_trial(tmp_path / "cut.jsonl", out_path=tmp_path / "resumed.jsonl")
    original = read_log(full)["evals"]
    resumed = read_log(tmp_path / "resumed.jsonl")["evals"]
    assert state.completed
    assert resumed[cut]["x"] == original[cut]["x"]
    assert [e["x"] for e in resumed] == [e["x"] for e in original]


def test_resume_detects_tampered_log(tmp_path):
    cfg = _experiment(tmp_path, ["EI-PCA"])
    run_experiment(cfg, parallelism=1)
    path = tmp_path / loop.trial_log_name("EI-PCA")
    docs = [json.loads(ln) for ln in path.read_text().splitlines()]
    evals = [d for d in docs if d["type"] == "eval"]
    evals[SMALL.n_init + 2]["x"][0] = 0.123456
    path.write_text("\n".join(json.dumps(d) for d in docs) + "\n")
    with pytest.raises(ReplayMismatch):
        resume_trial(path, out_path=tmp_path / "r.jsonl")


def test_parallel_and_serial_runs_match(tmp_path):
    names = ["EI-PCA", "DYCORS-SA", "random"]
    serial = run_experiment(_experiment(tmp_path / "a", names), parallelism=1)
    parallel = run_experiment(_experiment(tmp_path / "b", names), parallelism=3)
    for s, p in zip(serial, parallel):
        assert s.method == p.method
        assert all(np.array_equal(r.x, q.x) and r.obs == replace(q.obs, wall_clock_s=r.obs.wall_clock_s)
                   for r, q in zip(s.history, p.history))
    manifest = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert [t["name"] for t in manifest["trials"]] == names and manifest["parallelism"] == 3


def test_failing_trial_is_isolated(tmp_path):
    cfg = _experiment(tmp_path, ["EI-PCA", "random"])
    broken = ExecutorSpec("external", external=ExternalSpec([sys.executable, FAKE, "exit1"], str(tmp_path / "w")))
    states = run_experiment(cfg, parallelism=2, executors={"random": broken})
    by = {s.method.name: s for s in states}
    assert by["EI-PCA"].completed
    assert by["random"].aborted and "ReferenceFailed" in by["random"].diagnosis
    footer = read_log(tmp_path / loop.trial_log_name("random"))["footer"]
    assert footer["aborted"] and footer["budget_used"] == SMALL.n_init


def test_random_incumbent_beats_reference_usually(fabric_space, fabric_templates, fabric_executor):
    settings = TrialSettings(budget=50, n_init=10, K=10)
    hits = 0
    for s in range(20):
        m = MethodSpec("random", "random", seed=loop.method_seed(s, "random"))
        state = run_trial(m, fabric_space, fabric_templates, fabric_executor, replace(settings, design_seed=s))
        assert len(state.history) == 50
        hits += state.incumbent[1] >= 1.0
    assert hits >= 18
