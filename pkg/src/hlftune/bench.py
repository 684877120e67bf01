"""Benchmark executors, report parsing and reference normalization.

:func:`evaluate` turns a full-space point into an :class:`Observation`.  It
decodes and checks the configuration, materializes the templates, runs
either the built-in synthetic throughput simulator or an external command,
and converts every failure into an observation status instead of raising.

Report documents are JSON::

    {"rounds": [{"label": "open", "succ": 9000, "fail": 0,
                 "send_rate": 151.2, "tps": 150.0,
                 "latency": {"min": 12.0, "max": 840.0, "avg": 95.1}}]}

A bare round object (no ``rounds`` key) is accepted as a one-round report.
"""

from __future__ import annotations

import json
import logging
import math
import os
import shlex
import subprocess
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from . import seeding
from .errors import MalformedReport, ReferenceFailed
from .space import ConfigSpace, bundle_hash, check_feasible, decode, encode, materialize

logger = logging.getLogger(__name__)

OK = "ok"
DEPLOY_FAILED = "deploy_failed"
BENCH_FAILED = "bench_failed"
INFEASIBLE = "infeasible"
STATUSES = (OK, DEPLOY_FAILED, BENCH_FAILED, INFEASIBLE)


@dataclass(frozen=True)
class Observation:
    status: str
    tps_raw: float | None = None
    tps_norm: float | None = None
    send_rate: float | None = None
    latency_ms: dict | None = None
    tx_success: int | None = None
    tx_fail: int | None = None
    wall_clock_s: float = 0.0
    config_hash: str = ""
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status == OK

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc) -> "Observation":
        return cls(**{k: doc.get(k) for k in cls.__dataclass_fields__ if k in doc})


def normalize(obs: Observation, ref_mean: float) -> Observation:
    if not obs.ok:
        return obs
    return replace(obs, tps_norm=obs.tps_raw / ref_mean)


# -- reports -----------------------------------------------------------------


@dataclass(frozen=True)
class ReportMetrics:
    tps: float
    send_rate: float | None
    succ: int
    fail: int
    latency: dict | None
    n_rounds: int = 1

    @property
    def success_rate(self) -> float:
        total = self.succ + self.fail
        return self.succ / total if total else 0.0


def _number(rnd, key, i, required=True, integer=False):
    if key not in rnd or rnd[key] is None:
        if required:
            raise MalformedReport(key, f"round {i} is missing it")
        return None
    v = rnd[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v) or v < 0:
        raise MalformedReport(key, f"round {i} has {v!r}")
    if integer and float(v) != int(v):
        raise MalformedReport(key, f"round {i} has non-integer {v!r}")
    return int(v) if integer else float(v)


def metrics_from_doc(doc) -> ReportMetrics:
    if isinstance(doc, dict) and "rounds" in doc:
        rounds = doc["rounds"]
    else:
        rounds = [doc]
    if not isinstance(rounds, list) or not rounds:
        raise MalformedReport("rounds", "expected a non-empty list")
    tps, send, succ, fail, lat = [], [], [], [], []
    for i, rnd in enumerate(rounds):
        if not isinstance(rnd, dict):
            raise MalformedReport("rounds", f"round {i} is not an object")
        succ.append(_number(rnd, "succ", i, integer=True))
        fail.append(_number(rnd, "fail", i, integer=True))
        tps.append(_number(rnd, "tps", i))
        send.append(_number(rnd, "send_rate", i, required=False))
        L = rnd.get("latency")
        if L is not None:
            if not isinstance(L, dict):
                raise MalformedReport("latency", f"round {i} is not an object")
            L = {k: _number(L, k, i) for k in ("min", "max", "avg")}
        lat.append(L)
    w = np.array(succ, dtype=float) + np.array(fail, dtype=float)
    if w.sum() <= 0:
        raise MalformedReport("succ", "report contains no transactions")
    tps_w = float(np.dot(w, tps) / w.sum())
    send_w = float(np.dot(w, send) / w.sum()) if all(s is not None for s in send) else None
    latency = None
    if all(L is not None for L in lat):
        latency = {
            "min": min(L["min"] for L in lat),
            "max": max(L["max"] for L in lat),
            "avg": float(np.dot(w, [L["avg"] for L in lat]) / w.sum()),
        }
    return ReportMetrics(tps_w, send_w, int(sum(succ)), int(sum(fail)), latency, len(rounds))


def parse_report(report_file) -> ReportMetrics:
    """Read a report file; transaction-weighted aggregation over rounds."""
    path = Path(report_file)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise MalformedReport("<document>", str(exc)) from None
    return metrics_from_doc(doc)


def write_report(rounds: list[dict], report_file):
    """Write rounds (dicts with the report field names) as a report document."""
    Path(report_file).write_text(json.dumps({"rounds": rounds}, indent=1, sort_keys=True) + "\n")


# -- executors ---------------------------------------------------------------


@dataclass(frozen=True)
class FailureRule:
    """Deploy failure when ``x[dim] op threshold``, with probability ``prob``."""

    dim: int
    op: str
    threshold: float
    prob: float = 1.0

    def triggered(self, x) -> bool:
        v = x[self.dim]
        return v > self.threshold if self.op == ">" else v < self.threshold


@dataclass(frozen=True)
class SyntheticSpec:
    effective_dims: tuple[int, ...]
    peaks: tuple[float, ...]
    widths: tuple[float, ...]
    noise_cv: float = 0.02
    t0: float = 300.0
    failure_rules: tuple[FailureRule, ...] = ()
    send_rate: float = 330.0
    duration_s: float = 60.0


@dataclass(frozen=True)
class ExternalSpec:
    command: Any
    workdir: str = "runs"
    timeout_s: float = 1800.0
    report_path: str = "report.json"

    def __post_init__(self):
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")


@dataclass(frozen=True)
class ExecutorSpec:
    kind: str
    synthetic: SyntheticSpec | None = None
    external: ExternalSpec | None = None

    def __post_init__(self):
        if self.kind == "synthetic" and (self.synthetic is None or self.external is not None):
            raise ValueError("synthetic executor needs exactly the synthetic variant")
        if self.kind == "external" and (self.external is None or self.synthetic is not None):
            raise ValueError("external executor needs exactly the external variant")
        if self.kind not in ("synthetic", "external"):
            raise ValueError(f"unknown executor kind {self.kind!r}")


def _fine_grained(p) -> bool:
    # integer grids must be fine enough that decoding barely moves a peak
    if p.kind == "numeric-float":
        return True
    if p.kind != "numeric-int":
        return False
    return p.lo >= 50 if p.scale == "log" else p.hi - p.lo >= 50


def make_synthetic(space: ConfigSpace | int, n_effective=8, noise_cv=0.02, seed=0, t0=300.0,
                   n_failure_rules=2, failure_threshold=0.97) -> SyntheticSpec:
    """Seeded simulator with ``n_effective`` relevant coordinates.

    Relevant coordinates are drawn among numeric parameters when a space is
    given.  Bump peaks sit away from the centre (in [0.1, 0.3] or
    [0.7, 0.9]) with widths in [0.15, 0.3].  Failure rules make the top
    ``1 - failure_threshold`` slice of some irrelevant coordinates fail to
    deploy.
    """
    g = seeding.rng(seed, seeding.STREAM_EXECUTOR)
    if isinstance(space, ConfigSpace):
        d = space.d
        pool = [i for i, p in enumerate(space.params) if _fine_grained(p)]
    else:
        d = int(space)
        pool = list(range(d))
    dims = tuple(sorted(int(i) for i in g.choice(pool, size=n_effective, replace=False)))
    side = g.random(n_effective) < 0.5
    peaks = tuple(float(p) for p in np.where(side, 0.1 + 0.2 * g.random(n_effective), 0.7 + 0.2 * g.random(n_effective)))
    widths = tuple(float(w) for w in 0.15 + 0.15 * g.random(n_effective))
    others = [i for i in range(d) if i not in dims]
    fdims = g.choice(others, size=min(n_failure_rules, len(others)), replace=False) if n_failure_rules else []
    rules = tuple(FailureRule(int(j), ">", failure_threshold, 1.0) for j in sorted(fdims))
    return SyntheticSpec(dims, peaks, widths, noise_cv, t0, rules, send_rate=1.1 * t0)


def synthetic_base(x, spec: SyntheticSpec) -> float:
    """Noise-free throughput ``t0 * prod_j (0.5 + 0.5 exp(-((x_j - u_j)/w_j)^2))``."""
    x = np.asarray(x, dtype=float)
    v = x[list(spec.effective_dims)]
    u = np.asarray(spec.peaks)
    w = np.asarray(spec.widths)
    return float(spec.t0 * np.prod(0.5 + 0.5 * np.exp(-(((v - u) / w) ** 2))))


def _truncated_normal(g, sd):
    if sd == 0:
        return 0.0
    while True:
        e = g.normal(0.0, sd)
        if abs(e) <= 3.0 * sd:
            return e


def synthetic_objective(x, spec: SyntheticSpec, rng: np.random.Generator | None = None) -> float:
    """Observed throughput: the base value times ``1 + eps`` with eps ~ N(0, cv^2) cut at 3 sd."""
    base = synthetic_base(x, spec)
    if spec.noise_cv == 0 or rng is None:
        return base
    return base * (1.0 + _truncated_normal(rng, spec.noise_cv))


def synthetic_round(tps, spec: SyntheticSpec) -> dict:
    submitted = int(round(spec.send_rate * spec.duration_s))
    succ = min(submitted, int(round(tps * spec.duration_s)))
    load = min(1.0, spec.send_rate / max(tps, 1e-9))
    avg = 40.0 + 400.0 * (load - 1.0 / 1.1) if load > 1.0 / 1.1 else 40.0
    return {
        "label": "synthetic",
        "succ": succ,
        "fail": submitted - succ,
        "send_rate": spec.send_rate,
        "tps": tps,
        "latency": {"min": 0.25 * avg, "max": 6.0 * avg, "avg": avg},
    }


def _run_synthetic(x, spec: SyntheticSpec, rng) -> tuple[str, ReportMetrics | None, str]:
    draw = rng.random(len(spec.failure_rules)) if spec.failure_rules else ()
    for rule, u in zip(spec.failure_rules, draw):
        if rule.triggered(x) and u < rule.prob:
            return DEPLOY_FAILED, None, f"failure rule on coordinate {rule.dim}"
    tps = synthetic_objective(x, spec, rng)
    return OK, metrics_from_doc({"rounds": [synthetic_round(tps, spec)]}), ""


def _run_external(bundle, spec: ExternalSpec, tag) -> tuple[str, ReportMetrics | None, str]:
    wd = Path(spec.workdir) / tag
    wd.mkdir(parents=True, exist_ok=True)
    for name, text in bundle.items():
        (wd / name).write_text(text)
    report = wd / spec.report_path
    if report.exists():
        report.unlink()
    cmd = shlex.split(spec.command) if isinstance(spec.command, str) else list(spec.command)
    env = dict(os.environ, HLFTUNE_WORKDIR=str(wd.resolve()), HLFTUNE_REPORT=str(report.resolve()))
    try:
        proc = subprocess.run(cmd, cwd=wd, env=env, capture_output=True, text=True, timeout=spec.timeout_s)
    except subprocess.TimeoutExpired:
        return BENCH_FAILED, None, f"timed out after {spec.timeout_s}s"
    except OSError as exc:
        return DEPLOY_FAILED, None, f"could not start command: {exc}"
    (wd / "executor.log").write_text(proc.stdout + proc.stderr)
    if proc.returncode != 0:
        return DEPLOY_FAILED, None, f"exit code {proc.returncode}"
    if not report.exists():
        return BENCH_FAILED, None, "no report written"
    try:
        return OK, parse_report(report), ""
    except MalformedReport as exc:
        return BENCH_FAILED, None, str(exc)


def evaluate(x, space: ConfigSpace, templates, executor: ExecutorSpec, rng=None, tag="eval") -> Observation:
    """Run one benchmark evaluation; failures come back as statuses."""
    t_start = time.perf_counter()
    cfg = decode(x, space)
    bundle = materialize(cfg, templates, space)
    digest = bundle_hash(bundle)
    violated = check_feasible(cfg, space)
    if violated:
        return Observation(INFEASIBLE, wall_clock_s=time.perf_counter() - t_start, config_hash=digest,
                           detail="; ".join(c.describe() for c in violated))
    try:
        if executor.kind == "synthetic":
            status, metrics, detail = _run_synthetic(encode(cfg, space), executor.synthetic, rng)
        else:
            status, metrics, detail = _run_external(bundle, executor.external, tag)
    except Exception as exc:  # an executor bug must not kill the trial
        logger.exception("executor raised")
        status, metrics, detail = DEPLOY_FAILED, None, f"executor error: {exc}"
    elapsed = time.perf_counter() - t_start
    if status != OK:
        return Observation(status, wall_clock_s=elapsed, config_hash=digest, detail=detail)
    return Observation(
        OK,
        tps_raw=metrics.tps,
        send_rate=metrics.send_rate,
        latency_ms=metrics.latency,
        tx_success=metrics.succ,
        tx_fail=metrics.fail,
        wall_clock_s=elapsed,
        config_hash=digest,
    )


# -- reference ---------------------------------------------------------------


@dataclass(frozen=True)
class ReferenceStats:
    ref_point: np.ndarray
    runs: tuple[float, ...]
    ref_mean: float = field(init=False)
    noise_score: float = field(init=False)

    def __post_init__(self):
        runs = tuple(float(r) for r in self.runs)
        if not runs:
            raise ValueError("need at least one reference run")
        object.__setattr__(self, "runs", runs)
        mean = float(np.mean(runs))
        object.__setattr__(self, "ref_mean", mean)
        sd = float(np.std(runs, ddof=1)) if len(runs) > 1 else 0.0
        object.__setattr__(self, "noise_score", sd / mean if mean > 0 else float("inf"))

    def to_dict(self) -> dict:
        return {"ref_point": list(map(float, self.ref_point)), "runs": list(self.runs),
                "ref_mean": self.ref_mean, "noise_score": self.noise_score}


def compute_reference(x_ref, K, space, templates, executor, seed, first: Observation | None = None,
                      tag="ref") -> ReferenceStats:
    """Evaluate ``x_ref`` until ``K`` runs exist (reusing ``first`` when given).

    Any non-ok repeat raises ReferenceFailed.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    runs = []
    if first is not None:
        if not first.ok:
            raise ReferenceFailed(f"reference run 0: {first.status} {first.detail}")
        runs.append(first.tps_raw)
    for k in range(len(runs), K):
        obs = evaluate(x_ref, space, templates, executor, seeding.rng(seed, seeding.STREAM_REFERENCE, k), f"{tag}-{k:02d}")
        if not obs.ok:
            raise ReferenceFailed(f"reference run {k}: {obs.status} {obs.detail}")
        runs.append(obs.tps_raw)
    return ReferenceStats(np.asarray(x_ref, dtype=float), tuple(runs))
