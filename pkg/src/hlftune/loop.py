"""Trial orchestration: design, reference bootstrap, propose-evaluate-update.

A trial is one method's sequential run under a fixed budget ``B``.  The
Latin Hypercube points count toward ``B``; the first successfully evaluated
point becomes the reference and is re-run ``K - 1`` extra times outside the
budget.  Afterwards each iteration refits the embedding on schedule, fits
the GP on successful observations in the active space, proposes, maps back
to the full space and evaluates.

All randomness at iteration ``t`` is drawn from streams keyed by
``(method seed, t)``, so a logged prefix can be replayed and continued
exactly (:func:`resume_trial`).
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import acquisition as acq_mod
from . import reduce as dr
from . import seeding, surrogate
from .acquisition import AcqSpec, DycorsState
from .bench import ExecutorSpec, Observation, ReferenceStats, compute_reference, evaluate, normalize
from .design import DesignSpec, lhs, uniform_propose
from .errors import ReferenceFailed, ReplayMismatch, SingularKernel, TooFewObservations
from .reduce import DrSpec, Embedding
from .space import ConfigSpace, decode

logger = logging.getLogger(__name__)

AF_ORDER = ("EI", "MPI", "UCB", "DYCORS")
DR_ORDER = ("PCA", "REMBO", "SA", "SHAP")
IMPROVEMENT_RTOL = 1e-3


@dataclass(frozen=True)
class MethodSpec:
    name: str
    kind: str
    acq: AcqSpec | None = None
    dr: DrSpec | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("bo", "random"):
            raise ValueError(f"unknown method kind {self.kind!r}")
        if self.kind == "bo" and (self.acq is None or self.dr is None):
            raise ValueError("bo methods need both an acquisition and a DR spec")

    def to_dict(self) -> dict:
        out = {"name": self.name, "kind": self.kind, "seed": self.seed}
        if self.kind == "bo":
            out["af"] = self.acq.kind
            out["xi"] = self.acq.xi
            out["kappa"] = self.acq.kappa
            out["dycors"] = {k: v for k, v in vars(self.acq.dycors).items()}
            out["dr"] = self.dr.kind
            out["m"] = self.dr.m
            out["refresh_every"] = self.dr.refresh_every
        return out

    @classmethod
    def from_dict(cls, doc) -> "MethodSpec":
        if doc["kind"] == "random":
            return cls(doc["name"], "random", seed=int(doc["seed"]))
        acq = AcqSpec(doc["af"], doc.get("xi", 0.01), doc.get("kappa", 2.0),
                      acq_mod.DycorsParams(**doc.get("dycors", {})))
        seed = int(doc["seed"])
        return cls(doc["name"], "bo", acq, DrSpec(doc["dr"], doc.get("m", 20), doc.get("refresh_every", 10), seed), seed)


def method_seed(experiment_seed, name) -> int:
    return int(np.random.SeedSequence([int(experiment_seed), seeding.name_seed(name)]).generate_state(1)[0])


def canonical_methods(experiment_seed=0, m=20, refresh_every=10, xi=0.01, kappa=2.0, dycors=None) -> list[MethodSpec]:
    """The 4 x 4 acquisition/DR grid plus the random baseline."""
    dycors = dycors or acq_mod.DycorsParams()
    out = []
    for af in AF_ORDER:
        for red in DR_ORDER:
            name = f"{af}-{red}"
            s = method_seed(experiment_seed, name)
            out.append(MethodSpec(name, "bo", AcqSpec(af, xi, kappa, dycors), DrSpec(red, m, refresh_every, s), s))
    out.append(MethodSpec("random", "random", seed=method_seed(experiment_seed, "random")))
    return out


@dataclass(frozen=True)
class TrialSettings:
    budget: int = 300
    n_init: int = 30
    K: int = 10
    design_seed: int = 0
    gp_restarts: int = 3
    gp_maxiter: int = 60
    attribution_restarts: int = 1
    attribution_maxiter: int = 40
    attribution_perms: int = 10
    impute_failures: bool = False

    def __post_init__(self):
        if self.budget < self.n_init + 1:
            raise ValueError(f"budget {self.budget} must exceed n_init {self.n_init}")
        if self.n_init < 1 or self.K < 1:
            raise ValueError("n_init and K must be >= 1")


@dataclass
class Record:
    iteration: int
    x: np.ndarray
    obs: Observation
    phase: str
    refit: bool = False
    active_dim: int | None = None
    extra: dict = field(default_factory=dict)


@dataclass
class TrialState:
    method: MethodSpec
    budget_total: int
    history: list[Record] = field(default_factory=list)
    ref_stats: ReferenceStats | None = None
    incumbent: tuple[np.ndarray, float] | None = None
    embedding: Embedding | None = None
    dycors: DycorsState | None = None
    gp_hyper: surrogate.GpHyperparams | None = None
    attr_hyper: surrogate.GpHyperparams | None = None
    aborted: bool = False
    diagnosis: str = ""
    log_path: str | None = None
    runtime_s: float = 0.0
    incumbent_trace: list = field(default_factory=list)

    @property
    def budget_used(self) -> int:
        return len(self.history)

    @property
    def completed(self) -> bool:
        return not self.aborted and self.budget_used == self.budget_total

    def ok_records(self) -> list[Record]:
        return [r for r in self.history if r.obs.ok]

    def training_set(self, impute_failures=False):
        """Full-space inputs and normalized targets used to fit the surrogate."""
        ok = self.ok_records()
        X = [r.x for r in ok]
        y = [r.obs.tps_norm for r in ok]
        if impute_failures and ok:
            penalty = min(y)
            for r in self.history:
                if not r.obs.ok:
                    X.append(r.x)
                    y.append(penalty)
        return np.array(X), np.array(y, dtype=float)


# -- run log -----------------------------------------------------------------


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


class RunLog:
    """Append-only JSON-lines writer; one file per trial."""

    def __init__(self, path):
        self.path = Path(path) if path else None
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = self.path.open("w")

    def write(self, doc):
        if self.path:
            self._fh.write(json.dumps(doc, sort_keys=True) + "\n")
            self._fh.flush()

    def close(self):
        if self.path:
            self._fh.close()


def read_log(path) -> dict:
    """Split a trial log into header, reference, eval records and footer."""
    out = {"header": None, "reference": None, "evals": [], "footer": None}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            kind = doc.get("type")
            if kind == "trial":
                out["header"] = doc
            elif kind == "reference":
                out["reference"] = doc
            elif kind == "eval":
                out["evals"].append(doc)
            elif kind == "end":
                out["footer"] = doc
    return out


def _eval_record(state, rec: Record, space, t0, t1) -> dict:
    doc = {
        "type": "eval",
        "trial": state.method.name,
        "iteration": rec.iteration,
        "phase": rec.phase,
        "x": [float(v) for v in rec.x],
        "config": [_jsonable(v) for v in decode(rec.x, space).values()],
        "refit": rec.refit,
        "active_dim": rec.active_dim,
        "seed": state.method.seed,
        "t_start": t0,
        "t_end": t1,
    }
    doc.update(rec.obs.to_dict())
    doc.update(rec.extra)
    return doc


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


# -- proposal ----------------------------------------------------------------


def _refit_embedding(state: TrialState, settings: TrialSettings, d, X, y, g):
    spec = state.method.dr
    m = min(spec.m, d)
    try:
        if spec.kind == "PCA":
            return dr.fit_pca(X, m, spec.seed)
        if spec.kind == "SA":
            return dr.subset_embedding("SA", d, dr.rank_sensitivity(X, y, m), state.incumbent[0])
        if spec.kind == "SHAP":
            idx, _, model = dr.rank_attribution(
                X, y, m, spec.seed, n_perm=settings.attribution_perms,
                gp_restarts=settings.attribution_restarts, init=state.attr_hyper,
                maxiter=settings.attribution_maxiter, return_model=True)
            state.attr_hyper = None if model.degenerate else model.hyper
            return dr.subset_embedding("SHAP", d, idx, state.incumbent[0])
    except TooFewObservations as exc:
        # not enough successful data yet: search a random coordinate subset
        logger.info("%s: %s; using a random subset", state.method.name, exc)
        subset = sorted(int(i) for i in g.choice(d, size=m, replace=False))
        return dr.subset_embedding("SA" if spec.kind != "SHAP" else "SHAP", d, subset, state.incumbent[0])
    return dr.identity_embedding(d)


def propose(state: TrialState, t: int, settings: TrialSettings, space: ConfigSpace):
    """Next full-space point; a pure function of (method seed, history[:t]).

    Returns ``(x, info)`` where ``info`` carries the refit flag and active
    dimension for the run log.
    """
    method = state.method
    d = space.d
    g = seeding.rng(method.seed, seeding.STREAM_PROPOSE, t)
    if method.kind == "random":
        return uniform_propose(g, d), {"refit": False, "active_dim": d}

    spec = method.dr
    since = t - settings.n_init
    X_ok, y_ok = state.training_set(settings.impute_failures)
    refit = False
    if spec.kind == "REMBO":
        if state.embedding is None:
            state.embedding = dr.make_rembo(d, min(spec.m, d), spec.seed)
            refit = True
    elif state.embedding is None or since % spec.refresh_every == 0:
        state.embedding = _refit_embedding(state, settings, d, X_ok, y_ok, g)
        refit = True
    emb = state.embedding
    if emb.anchor is not None:
        emb = state.embedding = emb.with_anchor(state.incumbent[0])

    U_ok = np.clip(dr.to_unit(emb, dr.to_active(emb, X_ok)), 0.0, 1.0)
    hyper_due = refit or state.gp_hyper is None or since % spec.refresh_every == 0
    if hyper_due or state.gp_hyper.lengthscales.size != emb.m:
        init = state.gp_hyper if state.gp_hyper is not None and state.gp_hyper.lengthscales.size == emb.m else None
        model = surrogate.fit(U_ok, y_ok, seed=seeding.rng(method.seed, seeding.STREAM_SURROGATE, t).integers(2**63),
                              n_restarts=settings.gp_restarts, init=init, maxiter=settings.gp_maxiter)
        state.gp_hyper = None if model.degenerate else model.hyper
    else:
        try:
            model = surrogate.build(U_ok, y_ok, replace(state.gp_hyper, mean_const=float(np.mean(y_ok))))
        except SingularKernel:
            model = surrogate.fit(U_ok, y_ok, seed=method.seed, n_restarts=settings.gp_restarts,
                                  maxiter=settings.gp_maxiter)
            state.gp_hyper = None if model.degenerate else model.hyper

    inc_u = np.clip(dr.to_unit(emb, dr.to_active(emb, state.incumbent[0]))[0], 0.0, 1.0)
    lo, hi = np.zeros(emb.m), np.ones(emb.m)
    if method.acq.kind == "DYCORS":
        params = method.acq.dycors.resolved(emb.m)
        if state.dycors is None:
            state.dycors = DycorsState.start(params)
        X_all = np.array([r.x for r in state.history])
        U_all = np.clip(dr.to_unit(emb, dr.to_active(emb, X_all)), 0.0, 1.0)
        u, state.dycors = acq_mod.propose_dycors(model, U_all, inc_u, params, state.dycors, g,
                                                 since, settings.budget - settings.n_init, lo, hi)
    else:
        u = acq_mod.propose_surrogate(model, method.acq, lo, hi, g, inc_u)
    x = dr.to_full(emb, dr.from_unit(emb, u))
    return x, {"refit": refit, "active_dim": emb.m}


def _update_incumbent(state: TrialState, rec: Record, settings: TrialSettings):
    improved = False
    if rec.obs.ok:
        best = state.incumbent[1] if state.incumbent else -np.inf
        if rec.obs.tps_norm > best:
            improved = state.incumbent is None or rec.obs.tps_norm > best + IMPROVEMENT_RTOL * abs(best)
            state.incumbent = (rec.x.copy(), rec.obs.tps_norm)
    if state.dycors is not None and rec.phase == "search":
        state.dycors = acq_mod.update_dycors(state.dycors, improved, state.method.acq.dycors.resolved(state.embedding.m))
    state.incumbent_trace.append(state.incumbent[1] if state.incumbent else None)


def handle_failure(state: TrialState, rec: Record, settings: TrialSettings) -> TrialState:
    """Book a non-ok evaluation: budget consumed, no surrogate data, no incumbent change."""
    state.history.append(rec)
    _update_incumbent(state, rec, settings)
    return state


def _accept(state, rec, settings):
    if not rec.obs.ok:
        return handle_failure(state, rec, settings)
    state.history.append(rec)
    _update_incumbent(state, rec, settings)
    return state


# -- trial -------------------------------------------------------------------


def run_trial(method: MethodSpec, space: ConfigSpace, templates, executor: ExecutorSpec,
              settings: TrialSettings = TrialSettings(), log_path=None, replay=None, header_extra=None) -> TrialState:
    """Run one trial to budget.

    ``replay`` is a parsed log (see :func:`read_log`).  Its records stand in
    for evaluations, in order, after checking that each re-computed proposal
    matches the logged point bit for bit.
    """
    started = time.perf_counter()
    state = TrialState(method, settings.budget, log_path=str(log_path) if log_path else None)
    log = RunLog(log_path)
    header = {
        "type": "trial", "trial": method.name, "method": method.to_dict(),
        "settings": vars(settings), "param_names": space.names, "d": space.d, "created": _now(),
    }
    if header_extra:
        header.update(header_extra)
    log.write(header)
    replay_evals = list(replay["evals"]) if replay else []
    replay_ref = replay["reference"] if replay else None
    tag_base = method.name

    def run_one(t, x, phase, info):
        """Evaluate (or replay) iteration ``t`` and write its log record."""
        t0 = _now()
        if t < len(replay_evals):
            doc = replay_evals[t]
            logged = np.array(doc["x"], dtype=float)
            if doc["iteration"] != t or not np.array_equal(logged, x):
                raise ReplayMismatch(f"{method.name}: proposal at iteration {t} differs from the log")
            obs = Observation.from_dict(doc)
            if state.ref_stats is None and obs.ok:
                if replay_ref is None:
                    raise ReplayMismatch(f"{method.name}: log has evaluations but no reference record")
                state.ref_stats = ReferenceStats(np.array(replay_ref["ref_point"]), tuple(replay_ref["runs"]))
                log.write(replay_ref)
            log.write(doc)
            return Record(t, x, obs, phase, info.get("refit", False), info.get("active_dim"))
        g = seeding.rng(method.seed, seeding.STREAM_NOISE, t)
        obs = evaluate(x, space, templates, executor, g, f"{tag_base}-{t:04d}")
        if state.ref_stats is None and obs.ok:
            state.ref_stats = compute_reference(x, settings.K, space, templates, executor,
                                                method.seed, first=obs, tag=f"{tag_base}-ref")
            log.write({"type": "reference", "trial": method.name, "iteration": t, **state.ref_stats.to_dict()})
        if state.ref_stats is not None:
            obs = normalize(obs, state.ref_stats.ref_mean)
        rec = Record(t, x, obs, phase, info.get("refit", False), info.get("active_dim"))
        log.write(_eval_record(state, rec, space, t0, _now()))
        return rec

    try:
        design = lhs(DesignSpec(settings.n_init, space.d, settings.design_seed))
        for t in range(settings.n_init):
            _accept(state, run_one(t, design[t], "init", {"active_dim": space.d}), settings)
        if state.ref_stats is None:
            raise ReferenceFailed("no successful evaluation in the initial design")

        for t in range(settings.n_init, settings.budget):
            x, info = propose(state, t, settings, space)
            _accept(state, run_one(t, x, "search", info), settings)
    except ReferenceFailed as exc:
        state.aborted = True
        state.diagnosis = f"ReferenceFailed: {exc}"
        logger.error("%s aborted: %s", method.name, exc)
    finally:
        state.runtime_s = time.perf_counter() - started
        log.write({"type": "end", "trial": method.name, "completed": state.completed, "aborted": state.aborted,
                   "diagnosis": state.diagnosis, "budget_used": state.budget_used, "runtime_s": state.runtime_s})
        log.close()
    return state


# -- experiments -------------------------------------------------------------


def _trial_job(args):
    method, space, templates, executor, settings, log_path, header_extra = args
    try:
        return run_trial(method, space, templates, executor, settings, log_path, header_extra=header_extra)
    except Exception as exc:  # isolate: one broken trial must not sink the others
        logger.exception("trial %s crashed", method.name)
        state = TrialState(method, settings.budget, aborted=True, log_path=str(log_path) if log_path else None)
        state.diagnosis = f"{type(exc).__name__}: {exc}"
        return state


def trial_log_name(method_name) -> str:
    return f"trial-{method_name}.jsonl"


def run_experiment(config, parallelism=None, out_dir=None, methods=None, executors=None) -> list[TrialState]:
    """Run every method's trial, up to ``parallelism`` at a time.

    ``config`` is an :class:`hlftune.config.ExperimentConfig`.  ``executors``
    optionally maps method names to an executor overriding the config's.
    Trials share nothing mutable, so results do not depend on scheduling.
    A manifest summarizing all trials is written once all have finished.
    """
    methods = list(methods if methods is not None else config.methods)
    if not methods:
        raise ValueError("no methods to run")
    names = [m.name for m in methods]
    if len(set(names)) != len(names):
        raise ValueError("method names must be unique")
    out = Path(out_dir if out_dir is not None else config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    space, templates = config.load_space(), config.load_templates()
    executors = executors or {}
    jobs = []
    for m in methods:
        ex = executors.get(m.name, config.executor)
        extra = {"experiment": config.to_dict(executor=ex), "space": space.to_dict(), "templates": templates}
        jobs.append((m, space, templates, ex, config.settings, out / trial_log_name(m.name), extra))
    workers = max(1, min(parallelism or config.parallelism or len(jobs), len(jobs)))
    started = time.perf_counter()
    if workers == 1:
        states = [_trial_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            states = list(pool.map(_trial_job, jobs))
    write_manifest(states, out, config, time.perf_counter() - started, workers)
    return states


def write_manifest(states, out_dir, config, wall_s, workers):
    trials = []
    for s in states:
        ok = s.ok_records()
        trials.append({
            "name": s.method.name,
            "method": s.method.to_dict(),
            "log": trial_log_name(s.method.name),
            "completed": s.completed,
            "aborted": s.aborted,
            "diagnosis": s.diagnosis,
            "budget_used": s.budget_used,
            "n_failures": sum(1 for r in s.history if not r.obs.ok),
            "ref_mean": s.ref_stats.ref_mean if s.ref_stats else None,
            "noise_score": s.ref_stats.noise_score if s.ref_stats else None,
            "improvement_factor": max(r.obs.tps_norm for r in ok) if ok and s.ref_stats else None,
            "best_tps": max(r.obs.tps_raw for r in ok) if ok else None,
            "runtime_s": s.runtime_s,
        })
    doc = {"experiment": config.to_dict(), "parallelism": workers, "wall_clock_s": wall_s, "trials": trials}
    (Path(out_dir) / "manifest.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def resume_trial(log_path, out_path=None) -> TrialState:
    """Replay a (possibly truncated) trial log and continue to the budget.

    The log header carries the space, templates, executor and settings, so
    the log alone is enough.  The budget cannot change on resume: the DYCORS
    schedule depends on it, so the replayed proposals would differ.
    """
    from .config import executor_from_dict
    from .space import space_from_dict

    parsed = read_log(log_path)
    head = parsed["header"]
    if head is None:
        raise ValueError(f"{log_path}: no trial header")
    space = space_from_dict(head["space"])
    templates = head["templates"]
    executor = executor_from_dict(head["experiment"]["executor"])
    settings = TrialSettings(**head["settings"])
    method = MethodSpec.from_dict(head["method"])
    extra = {k: head[k] for k in ("experiment", "space", "templates")}
    extra["resumed_from"] = len(parsed["evals"])
    return run_trial(method, space, templates, executor, settings, out_path or log_path, replay=parsed,
                     header_extra=extra)
