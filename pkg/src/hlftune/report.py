"""Post-hoc analysis of trial logs: tables as CSV, charts as SVG.

Outputs written by :func:`emit`:

``heatmap.csv``
    ``af,dr,method,improvement_factor`` for the 4 x 4 grid plus the random
    baseline; missing trials have an empty value.
``best_values.csv``
    ``method,af,dr,improvement_factor,best_tps,noise_score,n_failures``
``noise.csv``
    ``method,af,dr,noise_score,ref_mean``
``normdiffs.csv``
    ``method,tag,batch,mean_step_norm``; ``tag`` is ``embedded`` for REMBO and
    random trials, which the default chart leaves out.

Each SVG is drawn from the corresponding CSV rows only.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DuplicateMethod, NoValidObservations
from .loop import AF_ORDER, DR_ORDER, read_log

BASELINE = "random"
BEST_HEADER = ("method", "af", "dr", "improvement_factor", "best_tps", "noise_score", "n_failures")


@dataclass
class TrialSummary:
    method: str
    af: str | None
    dr: str | None
    improvement_factor: float | None
    best_tps_raw: float | None
    noise_score: float | None
    ref_mean: float | None
    n_failures: int
    norm_diff_trace: list = field(default_factory=list)

    @property
    def embedded(self) -> bool:
        return self.dr == "REMBO" or self.af is None


def improvement_factor(evals, ref_mean=None) -> float:
    """Largest ``tps_norm`` over ok records.

    With ``ref_mean`` given the factor is recomputed as best raw TPS over
    the reference mean instead of trusting the logged normalization.
    """
    ok = [e for e in evals if e.get("status") == "ok"]
    if not ok:
        raise NoValidObservations("trial has no successful evaluation")
    if ref_mean is not None:
        return max(float(e["tps_raw"]) for e in ok) / float(ref_mean)
    vals = [e.get("tps_norm") for e in ok]
    if any(v is None for v in vals):
        raise NoValidObservations("trial has no reference normalization")
    return max(float(v) for v in vals)


def norm_diff_trace(points, batch=10) -> list[float]:
    """Euclidean step norms between successive points, averaged per batch.

    The last batch may be shorter and is averaged over its own length.
    """
    if batch < 1:
        raise ValueError("batch must be >= 1")
    P = np.asarray(points, dtype=float)
    if P.ndim != 2 or len(P) < 2:
        return []
    steps = np.linalg.norm(np.diff(P, axis=0), axis=1)
    return [float(np.mean(steps[i:i + batch])) for i in range(0, len(steps), batch)]


def summarize_log(path, batch=10) -> TrialSummary:
    parsed = read_log(path)
    head = parsed["header"] or {}
    method = head.get("method", {})
    name = head.get("trial") or method.get("name") or Path(path).stem
    evals = parsed["evals"]
    ref = parsed["reference"]
    ref_mean = ref["ref_mean"] if ref else None
    ok = [e for e in evals if e.get("status") == "ok"]
    try:
        factor = improvement_factor(evals)
    except NoValidObservations:
        factor = None
    return TrialSummary(
        method=name,
        af=method.get("af"),
        dr=method.get("dr"),
        improvement_factor=factor,
        best_tps_raw=max(float(e["tps_raw"]) for e in ok) if ok else None,
        noise_score=ref["noise_score"] if ref else None,
        ref_mean=ref_mean,
        n_failures=sum(1 for e in evals if e.get("status") != "ok"),
        norm_diff_trace=norm_diff_trace([e["x"] for e in evals], batch),
    )


def load_summaries(logs_dir, batch=10) -> list[TrialSummary]:
    paths = sorted(Path(logs_dir).glob("trial-*.jsonl"))
    return [summarize_log(p, batch) for p in paths]


def build_heatmap(summaries) -> dict:
    """AF x DR grid of improvement factors plus the baseline entry.

    Returns ``{"grid": {(af, dr): value or None}, "baseline": value or None}``.
    Cells without a trial, or whose trial has no valid observation, are
    ``None`` rather than zero.
    """
    seen = set()
    grid = {(af, dr): None for af in AF_ORDER for dr in DR_ORDER}
    baseline = None
    for s in summaries:
        key = (s.af, s.dr) if s.af is not None else BASELINE
        if key in seen:
            raise DuplicateMethod(f"more than one trial for {s.method}")
        seen.add(key)
        if key == BASELINE:
            baseline = s.improvement_factor
        elif key in grid:
            grid[key] = s.improvement_factor
    return {"grid": grid, "baseline": baseline}


def _fmt(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _ordered(summaries):
    rank = {f"{af}-{dr}": i for i, (af, dr) in enumerate((a, d) for a in AF_ORDER for d in DR_ORDER)}
    return sorted(summaries, key=lambda s: (rank.get(f"{s.af}-{s.dr}", len(rank)), s.method))


def tables(summaries, include_embedded=False) -> dict[str, str]:
    """CSV text for every output table, keyed by file name."""
    summaries = _ordered(summaries)
    hm = build_heatmap(summaries)
    names = {(s.af, s.dr): s.method for s in summaries if s.af is not None}
    heat_rows = [(af, dr, names.get((af, dr), f"{af}-{dr}"), hm["grid"][(af, dr)])
                 for af in AF_ORDER for dr in DR_ORDER]
    if summaries:
        heat_rows.append(("", "", BASELINE, hm["baseline"]))
    best_rows = [(s.method, s.af or "", s.dr or "", s.improvement_factor, s.best_tps_raw, s.noise_score, s.n_failures)
                 for s in summaries]
    noise_rows = [(s.method, s.af or "", s.dr or "", s.noise_score, s.ref_mean) for s in summaries]
    nd_rows = []
    for s in summaries:
        tag = "embedded" if s.embedded else "direct"
        for i, v in enumerate(s.norm_diff_trace):
            nd_rows.append((s.method, tag, i, v))
    return {
        "heatmap.csv": _csv_text(("af", "dr", "method", "improvement_factor"), heat_rows),
        "best_values.csv": _csv_text(BEST_HEADER, best_rows),
        "noise.csv": _csv_text(("method", "af", "dr", "noise_score", "ref_mean"), noise_rows),
        "normdiffs.csv": _csv_text(("method", "tag", "batch", "mean_step_norm"), nd_rows),
    }


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def _num(v):
    return float(v) if v not in ("", None) else float("nan")


def _svg(fig) -> str:
    import matplotlib.pyplot as plt

    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def charts(csvs: dict[str, str], include_embedded=False) -> dict[str, str]:
    """Render each table as an SVG from its CSV text alone."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = {}
    with matplotlib.rc_context({"svg.hashsalt": "hlftune", "svg.fonttype": "none"}):
        heat = _rows(csvs["heatmap.csv"])
        grid = np.full((len(AF_ORDER), len(DR_ORDER)), np.nan)
        base = float("nan")
        for r in heat:
            if r["method"] == BASELINE and not r["af"]:
                base = _num(r["improvement_factor"])
            elif r["af"] in AF_ORDER and r["dr"] in DR_ORDER:
                grid[AF_ORDER.index(r["af"]), DR_ORDER.index(r["dr"])] = _num(r["improvement_factor"])
        fig, ax = plt.subplots(figsize=(5.5, 4.5))
        im = ax.imshow(np.ma.masked_invalid(grid), cmap="viridis")
        ax.set_xticks(range(len(DR_ORDER)), DR_ORDER)
        ax.set_yticks(range(len(AF_ORDER)), AF_ORDER)
        for (i, j), v in np.ndenumerate(grid):
            ax.text(j, i, "n/a" if np.isnan(v) else f"{v:.2f}", ha="center", va="center", color="w")
        ax.set_title("Improvement factor" + ("" if np.isnan(base) else f" (random: {base:.2f})"))
        fig.colorbar(im, ax=ax)
        out["heatmap.svg"] = _svg(fig)

        best = _rows(csvs["best_values.csv"])
        fig, ax = plt.subplots(figsize=(8, 4))
        ax.bar(range(len(best)), [_num(r["best_tps"]) for r in best])
        ax.set_xticks(range(len(best)), [r["method"] for r in best], rotation=60, ha="right")
        ax.set_ylabel("best TPS")
        fig.tight_layout()
        out["best_values.svg"] = _svg(fig)

        noise = _rows(csvs["noise.csv"])
        fig, ax = plt.subplots(figsize=(8, 4))
        ax.bar(range(len(noise)), [_num(r["noise_score"]) for r in noise])
        ax.set_xticks(range(len(noise)), [r["method"] for r in noise], rotation=60, ha="right")
        ax.set_ylabel("noise score (CV)")
        fig.tight_layout()
        out["noise.svg"] = _svg(fig)

        fig, ax = plt.subplots(figsize=(7, 4))
        traces = {}
        for r in _rows(csvs["normdiffs.csv"]):
            if r["tag"] == "embedded" and not include_embedded:
                continue
            traces.setdefault(r["method"], []).append((int(r["batch"]), _num(r["mean_step_norm"])))
        for name, pts in traces.items():
            ax.plot([p[0] for p in pts], [p[1] for p in pts], label=name, lw=1)
        ax.set_xlabel("batch")
        ax.set_ylabel("mean step norm")
        if traces:
            ax.legend(fontsize=6, ncol=2)
        fig.tight_layout()
        out["normdiffs.svg"] = _svg(fig)
    return out


def emit(summaries, out_dir, include_embedded=False) -> list[Path]:
    """Write the CSV tables and their SVG renderings; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csvs = tables(summaries)
    files = dict(csvs)
    files.update(charts(csvs, include_embedded))
    written = []
    for name in sorted(files):
        p = out / name
        p.write_text(files[name])
        written.append(p)
    return written
