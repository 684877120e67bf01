"""Experiment configuration files (YAML or JSON) and executor serialization.

A minimal config::

    seed: 0
    budget: 300
    executor:
      kind: synthetic
      generate: {n_effective: 8, noise_cv: 0.02}
    out: runs/exp0

Omitted ``schema`` and ``templates`` fall back to the bundled Fabric schema
and templates.  ``methods`` is ``canonical`` (the 16 BO variants plus the
random baseline) or a list of ``{af, dr}`` / ``{kind: random}`` entries.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .acquisition import AcqSpec, DycorsParams
from .bench import ExecutorSpec, ExternalSpec, FailureRule, SyntheticSpec, make_synthetic
from .loop import MethodSpec, TrialSettings, canonical_methods, method_seed
from .reduce import DrSpec
from .space import ConfigSpace, default_schema_path, default_templates_dir, load_space, load_templates


def executor_to_dict(ex: ExecutorSpec) -> dict:
    if ex.kind == "synthetic":
        s = ex.synthetic
        return {
            "kind": "synthetic",
            "effective_dims": list(s.effective_dims),
            "peaks": list(s.peaks),
            "widths": list(s.widths),
            "noise_cv": s.noise_cv,
            "t0": s.t0,
            "failure_rules": [vars(r).copy() for r in s.failure_rules],
            "send_rate": s.send_rate,
            "duration_s": s.duration_s,
        }
    e = ex.external
    return {"kind": "external", "command": e.command, "workdir": e.workdir,
            "timeout_s": e.timeout_s, "report_path": e.report_path}


def executor_from_dict(doc, space: ConfigSpace | None = None, seed=0) -> ExecutorSpec:
    """Build an executor; ``generate`` entries need ``space`` to place the effective dims."""
    kind = doc.get("kind", "synthetic")
    if kind == "external":
        if "command" not in doc:
            raise ValueError("external executor needs a command")
        known = {f.name for f in fields(ExternalSpec)}
        return ExecutorSpec("external", external=ExternalSpec(**{k: v for k, v in doc.items() if k in known}))
    if kind != "synthetic":
        raise ValueError(f"unknown executor kind {kind!r}")
    if "generate" in doc:
        if space is None:
            raise ValueError("generated synthetic executor needs the space")
        gen = dict(doc["generate"])
        gen.setdefault("seed", seed)
        return ExecutorSpec("synthetic", synthetic=make_synthetic(space, **gen))
    rules = tuple(FailureRule(**r) for r in doc.get("failure_rules", ()))
    spec = SyntheticSpec(
        tuple(int(i) for i in doc["effective_dims"]),
        tuple(float(p) for p in doc["peaks"]),
        tuple(float(w) for w in doc["widths"]),
        float(doc.get("noise_cv", 0.02)),
        float(doc.get("t0", 300.0)),
        rules,
        float(doc.get("send_rate", 330.0)),
        float(doc.get("duration_s", 60.0)),
    )
    if not (len(spec.effective_dims) == len(spec.peaks) == len(spec.widths)):
        raise ValueError("effective_dims, peaks and widths must have equal length")
    return ExecutorSpec("synthetic", synthetic=spec)


def _methods_from_doc(doc, seed, acq_doc, red_doc) -> list[MethodSpec]:
    xi = float(acq_doc.get("xi", 0.01))
    kappa = float(acq_doc.get("kappa", 2.0))
    dycors = DycorsParams(**acq_doc.get("dycors", {}))
    m = int(red_doc.get("m", 20))
    refresh = int(red_doc.get("refresh_every", 10))
    spec = doc.get("methods", "canonical")
    if spec == "canonical":
        return canonical_methods(seed, m, refresh, xi, kappa, dycors)
    out = []
    for entry in spec:
        if entry.get("kind") == "random" or entry.get("af") is None:
            name = entry.get("name", "random")
            out.append(MethodSpec(name, "random", seed=method_seed(seed, name)))
            continue
        name = entry.get("name", f"{entry['af']}-{entry['dr']}")
        s = method_seed(seed, name)
        out.append(MethodSpec(name, "bo", AcqSpec(entry["af"], xi, kappa, dycors),
                              DrSpec(entry["dr"], int(entry.get("m", m)), refresh, s), s))
    return out


@dataclass
class ExperimentConfig:
    executor: ExecutorSpec
    methods: list[MethodSpec]
    settings: TrialSettings = field(default_factory=TrialSettings)
    seed: int = 0
    schema: str | None = None
    templates: str | None = None
    parallelism: int | None = None
    out_dir: str = "runs"

    def load_space(self) -> ConfigSpace:
        return load_space(self.schema or default_schema_path())

    def load_templates(self) -> dict[str, str]:
        return load_templates(self.templates or default_templates_dir())

    def to_dict(self, executor: ExecutorSpec | None = None) -> dict:
        return {
            "seed": self.seed,
            "schema": self.schema,
            "templates": self.templates,
            "executor": executor_to_dict(executor or self.executor),
            "settings": vars(self.settings).copy(),
            "methods": [m.to_dict() for m in self.methods],
            "parallelism": self.parallelism,
            "out": self.out_dir,
        }


def config_from_dict(doc, base_dir=".") -> ExperimentConfig:
    """Parse a config document; relative paths resolve against ``base_dir``."""
    base = Path(base_dir)

    def _path(key):
        v = doc.get(key)
        return None if v is None else str((base / v) if not Path(v).is_absolute() else Path(v))

    seed = int(doc.get("seed", 0))
    schema, templates = _path("schema"), _path("templates")
    space = load_space(schema or default_schema_path())
    surr = doc.get("surrogate", {})
    settings = TrialSettings(
        budget=int(doc.get("budget", 300)),
        n_init=int(doc.get("n_init", 30)),
        K=int(doc.get("K", 10)),
        design_seed=int(doc.get("design_seed", seed)),
        gp_restarts=int(surr.get("restarts", 3)),
        gp_maxiter=int(surr.get("maxiter", 60)),
        attribution_restarts=int(surr.get("attribution_restarts", 1)),
        attribution_maxiter=int(surr.get("attribution_maxiter", 40)),
        attribution_perms=int(surr.get("attribution_perms", 10)),
        impute_failures=bool(doc.get("impute_failures", False)),
    )
    executor = executor_from_dict(doc.get("executor", {"generate": {}}), space, seed)
    methods = _methods_from_doc(doc, seed, doc.get("acquisition", {}), doc.get("reduction", {}))
    par = doc.get("parallelism")
    return ExperimentConfig(executor, methods, settings, seed, schema, templates,
                            None if par is None else int(par), str(_path("out") or "runs"))


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    text = path.read_text()
    doc = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: config must be a mapping")
    return config_from_dict(doc, path.parent)
