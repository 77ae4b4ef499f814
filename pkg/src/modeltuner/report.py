"""Report rendering: optimal-configuration table, Win/Tie/Loss tables, score quartiles."""

import csv
import io
import json
import os
import statistics
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

from .errors import EmptyStore
from .hpspace import GENE_ORDER
from .stats import METRICS, WTLTable, compare_all, metric_score, tabulate
from .store import GenerationRecord

FORMATS = ("markdown", "csv", "json")


@dataclass
class Quartiles:
    strategy: str
    config_id: str
    metric: str
    n: int
    min: float
    q1: float
    median: float
    q3: float
    max: float


@dataclass
class ReportBundle:
    by_solution: WTLTable
    by_domain: WTLTable
    distributions: List[Quartiles]
    front: Optional[List[dict]] = None


def _quartiles(values: Sequence[float]):
    vals = sorted(values)
    if len(vals) == 1:
        v = vals[0]
        return v, v, v
    q1, med, q3 = statistics.quantiles(vals, n=4, method="inclusive")
    return q1, med, q3


def distributions(records: Sequence[GenerationRecord]) -> List[Quartiles]:
    groups: Dict[tuple, List[float]] = {}
    for r in records:
        for m in METRICS:
            groups.setdefault((r.strategy, r.config_id, m), []).append(metric_score(r, m))
    out = []
    for (strategy, cid, metric), vals in groups.items():
        q1, med, q3 = _quartiles(vals)
        out.append(Quartiles(strategy, cid, metric, len(vals), min(vals), q1, med, q3, max(vals)))
    return out


def build_bundle(records: Sequence[GenerationRecord], baseline_id: str, front: Optional[List[dict]] = None,
                 paired: bool = True) -> ReportBundle:
    if not records:
        raise EmptyStore("record store is empty")
    ids = list(dict.fromkeys(r.config_id for r in records))
    if baseline_id not in ids:
        raise EmptyStore(f"no records for baseline {baseline_id!r}; configurations present: {ids}")
    if ids == [baseline_id]:
        raise EmptyStore(f"store holds only baseline {baseline_id!r} records; no candidate solutions to compare")
    comparisons = compare_all(records, baseline_id, paired)
    return ReportBundle(
        by_solution=tabulate(records, baseline_id, "solution", paired, comparisons),
        by_domain=tabulate(records, baseline_id, "domain", paired, comparisons),
        distributions=distributions(records),
        front=front,
    )


def _fmt(x: float) -> str:
    return f"{x:.4f}"


def front_markdown(front: List[dict]) -> str:
    lines = ["| Id | " + " | ".join(GENE_ORDER) + " | syntactic | semantic |"]
    lines.append("|" + "---|" * (len(GENE_ORDER) + 3))
    for row in front:
        cfg = row["config"]
        vals = ["default" if cfg.get(g) is None else str(cfg[g]) for g in GENE_ORDER]
        fit = row.get("fitness") or {}
        scores = [_fmt(fit[k]) if k in fit else "" for k in ("syntactic", "semantic")]
        lines.append("| " + " | ".join([row["id"]] + vals + scores) + " |")
    return "\n".join(lines) + "\n"


def distributions_markdown(dists: List[Quartiles]) -> str:
    lines = ["| Strategy | Config | Metric | n | min | Q1 | median | Q3 | max |", "|---|---|---|---|---|---|---|---|---|"]
    for q in dists:
        lines.append(
            f"| {q.strategy} | {q.config_id} | {q.metric} | {q.n} | "
            + " | ".join(_fmt(v) for v in (q.min, q.q1, q.median, q.q3, q.max))
            + " |"
        )
    return "\n".join(lines) + "\n"


def distributions_csv(dists: List[Quartiles]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["strategy", "config_id", "metric", "n", "min", "q1", "median", "q3", "max"])
    for q in dists:
        w.writerow([q.strategy, q.config_id, q.metric, q.n, repr(q.min), repr(q.q1), repr(q.median), repr(q.q3), repr(q.max)])
    return buf.getvalue()


def score_data_csv(records: Sequence[GenerationRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["domain_id", "strategy", "config_id", "rep_index", "status", "cosine", "semantic"])
    for r in records:
        w.writerow([r.domain_id, r.strategy, r.config_id, r.rep_index, r.status,
                    repr(metric_score(r, "cosine")), repr(metric_score(r, "semantic"))])
    return buf.getvalue()


def bundle_markdown(bundle: ReportBundle) -> str:
    parts = []
    if bundle.front:
        parts += ["## Optimal configurations\n", front_markdown(bundle.front)]
    parts += [
        f"## Win / Tie / Loss against baseline `{bundle.by_solution.baseline_id}`, per solution\n",
        bundle.by_solution.to_markdown(with_effects=True),
        "## Win / Tie / Loss per domain\n",
        bundle.by_domain.to_markdown(with_effects=False),
        "## Score distributions\n",
        distributions_markdown(bundle.distributions),
    ]
    return "# Evaluation report\n\n" + "\n".join(parts)


def bundle_json(bundle: ReportBundle) -> dict:
    return {
        "front": bundle.front,
        "by_solution": bundle.by_solution.to_json(),
        "by_domain": bundle.by_domain.to_json(),
        "distributions": [q.__dict__ for q in bundle.distributions],
    }


def render_report(records: Sequence[GenerationRecord], baseline_id: str, out_dir, formats: Sequence[str] = FORMATS,
                  front: Optional[List[dict]] = None, paired: bool = True, dist_data: bool = False) -> List[str]:
    """Write the report files for ``formats`` into ``out_dir``; returns their paths."""
    unknown = set(formats) - set(FORMATS)
    if unknown:
        raise ValueError(f"unknown report formats: {sorted(unknown)}")
    bundle = build_bundle(records, baseline_id, front, paired)
    os.makedirs(out_dir, exist_ok=True)
    files: Dict[str, str] = {"comparisons.jsonl": bundle.by_solution.comparisons_jsonl()}
    if "markdown" in formats:
        files["report.md"] = bundle_markdown(bundle)
    if "csv" in formats:
        files["wtl_by_solution.csv"] = bundle.by_solution.to_csv()
        files["wtl_by_solution_effects.csv"] = bundle.by_solution.effects_to_csv()
        files["wtl_by_domain.csv"] = bundle.by_domain.to_csv()
        files["distributions.csv"] = distributions_csv(bundle.distributions)
    if "json" in formats:
        files["report.json"] = json.dumps(bundle_json(bundle), indent=2) + "\n"
    if dist_data:
        files["scores.csv"] = score_data_csv(records)
    paths = []
    for name, text in files.items():
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        paths.append(path)
    return paths
