"""One-sided Wilcoxon tests, Vargha-Delaney A12 and Win/Tie/Loss tabulation."""

import bisect
import csv
import io
import json
import math
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .errors import EmptySample, LengthMismatch, MissingCell
from .prompts import Strategy
from .store import STATUS_OK, GenerationRecord

EXACT_SIGNED_RANK_MAX_N = 20
EXACT_RANK_SUM_MAX_N = 10

WIN, TIE, LOSS = "win", "tie", "loss"
LARGE, MEDIUM, SMALL = "large", "medium", "small"

METRICS = ("cosine", "semantic")
_SCORE_FIELD = {"cosine": "syntactic", "semantic": "semantic"}
# Failed generations score as the search's worst-case fitness.
_FAILED_SCORE = {"cosine": 0.0, "semantic": -1.0}


def midranks(values: Sequence[float]) -> List[float]:
    """1-based ranks with ties sharing their average rank."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def _tie_sizes(values: Sequence[float]) -> List[int]:
    counts: Dict[float, int] = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    return [t for t in counts.values() if t > 1]


def _upper_tail(p: float) -> float:
    return min(1.0, max(0.0, p))


def _normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def signed_rank_statistic(x: Sequence[float], y: Sequence[float]):
    """Return (nonzero |differences|, their midranks, W+)."""
    d = [a - b for a, b in zip(x, y)]
    d = [v for v in d if v != 0]
    absd = [abs(v) for v in d]
    ranks = midranks(absd)
    w_plus = sum(r for r, v in zip(ranks, d) if v > 0)
    return absd, ranks, w_plus


def _subset_sum_counts(weights: Sequence[int]) -> List[int]:
    """counts[s] = number of subsets of ``weights`` summing to s."""
    counts = [1] + [0] * sum(weights)
    top = 0
    for w in weights:
        for s in range(top, -1, -1):
            if counts[s]:
                counts[s + w] += counts[s]
        top += w
    return counts


def _wilcoxon_paired(x: Sequence[float], y: Sequence[float]) -> float:
    absd, ranks, w_plus = signed_rank_statistic(x, y)
    n = len(absd)
    if n == 0:
        return 1.0
    if n <= EXACT_SIGNED_RANK_MAX_N:
        # Midranks are multiples of 1/2, so doubled ranks are exact integers.
        doubled = [int(round(2 * r)) for r in ranks]
        counts = _subset_sum_counts(doubled)
        observed = int(round(2 * w_plus))
        return _upper_tail(sum(counts[observed:]) / 2.0**n)
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - sum(t**3 - t for t in _tie_sizes(absd)) / 48.0
    if var <= 0:
        return 1.0
    z = (w_plus - mean - 0.5) / math.sqrt(var)
    return _upper_tail(_normal_sf(z))


def _rank_sum_subset_counts(doubled: Sequence[int], size: int) -> List[List[int]]:
    """table[k][s] = number of k-subsets of ``doubled`` summing to s."""
    total = sum(doubled)
    table = [[0] * (total + 1) for _ in range(size + 1)]
    table[0][0] = 1
    for w in doubled:
        for k in range(size, 0, -1):
            row, prev = table[k], table[k - 1]
            for s in range(total - w, -1, -1):
                if prev[s]:
                    row[s + w] += prev[s]
    return table


def _wilcoxon_unpaired(x: Sequence[float], y: Sequence[float]) -> float:
    m, n = len(x), len(y)
    pooled = list(x) + list(y)
    ranks = midranks(pooled)
    r_x = sum(ranks[:m])
    if min(m, n) <= EXACT_RANK_SUM_MAX_N:
        doubled = [int(round(2 * r)) for r in ranks]
        total = sum(doubled)
        obs = int(round(2 * r_x))
        if m <= n:
            counts = _rank_sum_subset_counts(doubled, m)[m]
            hits = sum(counts[obs:])
        else:
            counts = _rank_sum_subset_counts(doubled, n)[n]
            hits = sum(counts[: total - obs + 1])
        return _upper_tail(hits / math.comb(m + n, m))
    big_n = m + n
    u = r_x - m * (m + 1) / 2.0
    mean = m * n / 2.0
    ties = sum(t**3 - t for t in _tie_sizes(pooled))
    var = m * n / 12.0 * ((big_n + 1) - ties / (big_n * (big_n - 1)))
    if var <= 0:
        return 1.0
    z = (u - mean - 0.5) / math.sqrt(var)
    return _upper_tail(_normal_sf(z))


def wilcoxon_one_sided(x: Sequence[float], y: Sequence[float], paired: bool = True) -> float:
    """P-value for the alternative that ``x`` tends to exceed ``y``.

    Paired: signed-rank test, exact for up to 20 nonzero differences.
    Unpaired: rank-sum test, exact when the smaller sample has <= 10 values.
    Larger samples use the tie- and continuity-corrected normal approximation.
    """
    if len(x) == 0 or len(y) == 0:
        raise EmptySample("both samples must be nonempty")
    if paired:
        if len(x) != len(y):
            raise LengthMismatch(f"paired samples differ in length: {len(x)} vs {len(y)}")
        return _wilcoxon_paired(x, y)
    return _wilcoxon_unpaired(x, y)


def vargha_delaney_a12(x: Sequence[float], y: Sequence[float]) -> float:
    """Probability that a draw from ``x`` beats one from ``y``, ties counting half."""
    if len(x) == 0 or len(y) == 0:
        raise EmptySample("both samples must be nonempty")
    ys = sorted(y)
    twice = 0
    for v in x:
        lo = bisect.bisect_left(ys, v)
        hi = bisect.bisect_right(ys, v)
        twice += 2 * lo + (hi - lo)
    return twice / (2 * len(x) * len(ys))


def classify_effect(a12: float) -> str:
    if a12 >= 0.72:
        return LARGE
    if a12 > 0.64:
        return MEDIUM
    return SMALL


def classify_wtl(p_value: float) -> str:
    if p_value < 0.05:
        return WIN
    if p_value > 0.99:
        return LOSS
    return TIE


@dataclass
class ComparisonResult:
    metric: str
    p_value: float
    wtl: str
    a12: Optional[float] = None
    effect: Optional[str] = None


def compare(candidate: Sequence[float], baseline: Sequence[float], metric: str, paired: bool = True) -> ComparisonResult:
    p = wilcoxon_one_sided(candidate, baseline, paired)
    wtl = classify_wtl(p)
    # No difference at all carries no evidence either way; p = 1 here is not a Loss.
    if paired and all(a == b for a, b in zip(candidate, baseline)):
        wtl = TIE
    elif not paired and len(set(candidate) | set(baseline)) == 1:
        wtl = TIE
    if wtl != WIN:
        return ComparisonResult(metric, p, wtl)
    a12 = vargha_delaney_a12(candidate, baseline)
    return ComparisonResult(metric, p, wtl, a12, classify_effect(a12))


@dataclass
class Cell:
    win: int = 0
    tie: int = 0
    loss: int = 0
    large: int = 0
    medium: int = 0
    small: int = 0

    @property
    def total(self) -> int:
        return self.win + self.tie + self.loss

    def add(self, res: ComparisonResult) -> None:
        setattr(self, res.wtl, getattr(self, res.wtl) + 1)
        if res.effect is not None:
            setattr(self, res.effect, getattr(self, res.effect) + 1)

    def wtl_text(self) -> str:
        return f"{self.win} / {self.tie} / {self.loss}"

    def effect_text(self) -> str:
        return f"{self.large} / {self.medium} / {self.small}"


Column = Tuple[str, str]


@dataclass
class WTLTable:
    group_by: str
    baseline_id: str
    rows: List[str]
    columns: List[Column]
    cells: Dict[Tuple[str, Column], Cell]
    comparisons: List[dict] = field(default_factory=list)

    def cell(self, row: str, strategy: str, metric: str) -> Cell:
        return self.cells[(row, (strategy, metric))]

    def effect_totals(self) -> Dict[Column, Cell]:
        totals = {}
        for col in self.columns:
            tot = Cell()
            for row in self.rows:
                c = self.cells[(row, col)]
                tot.large += c.large
                tot.medium += c.medium
                tot.small += c.small
            totals[col] = tot
        return totals

    def header(self) -> List[str]:
        return [f"{s} {m}" for s, m in self.columns]

    def to_markdown(self, with_effects: bool = True) -> str:
        first = "Solution" if self.group_by == "solution" else "Domain"
        lines = ["| " + " | ".join([first] + self.header()) + " |"]
        lines.append("|" + "---|" * (len(self.columns) + 1))
        for row in self.rows:
            cells = [self.cells[(row, col)].wtl_text() for col in self.columns]
            lines.append("| " + " | ".join([row] + cells) + " |")
        if with_effects:
            totals = self.effect_totals()
            lines.append("| " + " | ".join(["A12 (L / M / S)"] + [totals[c].effect_text() for c in self.columns]) + " |")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = ["row"]
        for s, m in self.columns:
            head += [f"{s}/{m}/win", f"{s}/{m}/tie", f"{s}/{m}/loss"]
        w.writerow(head)
        for row in self.rows:
            out = [row]
            for col in self.columns:
                c = self.cells[(row, col)]
                out += [c.win, c.tie, c.loss]
            w.writerow(out)
        return buf.getvalue()

    def effects_to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["strategy", "metric", "large", "medium", "small"])
        for col, tot in self.effect_totals().items():
            w.writerow([col[0], col[1], tot.large, tot.medium, tot.small])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "group_by": self.group_by,
            "baseline": self.baseline_id,
            "rows": self.rows,
            "columns": [list(c) for c in self.columns],
            "cells": [
                {"row": row, "strategy": col[0], "metric": col[1], **asdict(self.cells[(row, col)])}
                for row in self.rows
                for col in self.columns
            ],
            "effect_totals": [
                {"strategy": col[0], "metric": col[1], **asdict(tot)} for col, tot in self.effect_totals().items()
            ],
        }

    def comparisons_jsonl(self) -> str:
        return "".join(json.dumps(c) + "\n" for c in self.comparisons)


def metric_score(rec: GenerationRecord, metric: str) -> float:
    if rec.status != STATUS_OK:
        return _FAILED_SCORE[metric]
    return float(rec.scores[_SCORE_FIELD[metric]])


def _strategy_order(names: Iterable[str]) -> List[str]:
    canon = [s.value for s in Strategy]
    present = list(OrderedDict.fromkeys(names))
    return sorted(present, key=lambda s: (canon.index(s) if s in canon else len(canon), present.index(s)))


def compare_all(records: Sequence[GenerationRecord], baseline_id: str, paired: bool = True) -> List[dict]:
    """Every (domain, strategy, candidate, metric) comparison against the baseline."""
    cells: Dict[Tuple[str, str, str], Dict[int, GenerationRecord]] = {}
    domains, strategies, configs = [], [], []
    for r in records:
        cells.setdefault((r.domain_id, r.strategy, r.config_id), {})[r.rep_index] = r
        domains.append(r.domain_id)
        strategies.append(r.strategy)
        configs.append(r.config_id)
    domains = list(OrderedDict.fromkeys(domains))
    strategies = _strategy_order(strategies)
    candidates = [c for c in OrderedDict.fromkeys(configs) if c != baseline_id]
    out = []
    for domain in domains:
        for strategy in strategies:
            base = cells.get((domain, strategy, baseline_id))
            if not base:
                raise MissingCell(f"no baseline records for (domain={domain}, strategy={strategy}, config={baseline_id})")
            for cand in candidates:
                mine = cells.get((domain, strategy, cand))
                if not mine:
                    raise MissingCell(f"no records for (domain={domain}, strategy={strategy}, config={cand})")
                if paired:
                    reps = sorted(set(mine) & set(base))
                    if not reps:
                        raise MissingCell(f"no shared repetitions for (domain={domain}, strategy={strategy}, config={cand})")
                    mine_recs = [mine[i] for i in reps]
                    base_recs = [base[i] for i in reps]
                else:
                    mine_recs = [mine[i] for i in sorted(mine)]
                    base_recs = [base[i] for i in sorted(base)]
                for metric in METRICS:
                    res = compare([metric_score(r, metric) for r in mine_recs], [metric_score(r, metric) for r in base_recs],
                                  metric, paired)
                    out.append({"domain": domain, "strategy": strategy, "solution": cand, **asdict(res)})
    return out


def tabulate(records: Sequence[GenerationRecord], baseline_id: str, group_by: str = "solution",
             paired: bool = True, comparisons: Optional[List[dict]] = None) -> WTLTable:
    """Win/Tie/Loss counts against the baseline.

    ``group_by="solution"`` gives one row per candidate configuration counted
    over domains; ``group_by="domain"`` one row per domain counted over
    candidates.
    """
    if group_by not in ("solution", "domain"):
        raise ValueError(f"group_by must be 'solution' or 'domain', got {group_by!r}")
    if comparisons is None:
        comparisons = compare_all(records, baseline_id, paired)
    row_field = "solution" if group_by == "solution" else "domain"
    rows = list(OrderedDict.fromkeys(c[row_field] for c in comparisons))
    strategies = _strategy_order(c["strategy"] for c in comparisons)
    columns = [(s, m) for s in strategies for m in METRICS]
    cells = {(r, col): Cell() for r in rows for col in columns}
    for c in comparisons:
        res = ComparisonResult(c["metric"], c["p_value"], c["wtl"], c["a12"], c["effect"])
        cells[(c[row_field], (c["strategy"], c["metric"]))].add(res)
    return WTLTable(group_by, baseline_id, rows, columns, cells, comparisons)
