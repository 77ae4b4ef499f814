import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sps

from modeltuner.errors import EmptySample, LengthMismatch, MissingCell
from modeltuner.stats import (
    classify_effect,
    classify_wtl,
    midranks,
    tabulate,
    vargha_delaney_a12,
    wilcoxon_one_sided,
)
from modeltuner.store import GenerationRecord

from oracles import a12_pairs, rank_sum_p_enumeration, signed_rank_p_enumeration


def test_worked_signed_rank_examples():
    assert wilcoxon_one_sided([1, 2, 3], [0, 0, 0]) == 0.125
    assert wilcoxon_one_sided([4, 5, 6], [4, 5, 6]) == 1.0
    assert wilcoxon_one_sided([5, 6, 7, 8], [1, 2, 3, 4]) == 0.0625


def test_midranks():
    assert midranks([10, 20, 20, 30]) == [1.0, 2.5, 2.5, 4.0]
    assert midranks([]) == []


def random_pair(rng, n, levels):
    x = [rng.randint(0, levels) for _ in range(n)]
    y = [rng.randint(0, levels) for _ in range(n)]
    return x, y


def test_signed_rank_matches_enumeration():
    rng = random.Random(2024)
    for _ in range(500):
        n = rng.randint(1, 12)
        x, y = random_pair(rng, n, rng.choice([3, 6, 50]))
        assert math.isclose(wilcoxon_one_sided(x, y), signed_rank_p_enumeration(x, y), abs_tol=1e-12)


def test_rank_sum_matches_enumeration():
    rng = random.Random(7)
    for _ in range(150):
        m, n = rng.randint(1, 6), rng.randint(1, 6)
        x = [rng.randint(0, 5) for _ in range(m)]
        y = [rng.randint(0, 5) for _ in range(n)]
        assert math.isclose(wilcoxon_one_sided(x, y, paired=False), rank_sum_p_enumeration(x, y), abs_tol=1e-12)


def test_signed_rank_agrees_with_scipy_exact():
    rng = np.random.default_rng(3)
    for _ in range(50):
        x, y = rng.normal(size=15), rng.normal(size=15)
        ref = sps.wilcoxon(x, y, alternative="greater", method="exact").pvalue
        assert math.isclose(wilcoxon_one_sided(x, y), ref, abs_tol=1e-12)


def test_large_samples_agree_with_scipy_normal():
    rng = np.random.default_rng(5)
    for _ in range(20):
        x, y = rng.normal(0.2, 1, size=40), rng.normal(size=40)
        ref = sps.wilcoxon(x, y, alternative="greater", method="approx", correction=True).pvalue
        assert math.isclose(wilcoxon_one_sided(x, y), ref, rel_tol=1e-9)
        x2, y2 = rng.normal(0.2, 1, size=25), rng.normal(size=30)
        ref2 = sps.mannwhitneyu(x2, y2, alternative="greater", method="asymptotic", use_continuity=True).pvalue
        assert math.isclose(wilcoxon_one_sided(x2, y2, paired=False), ref2, rel_tol=1e-9)


def test_wilcoxon_errors():
    with pytest.raises(EmptySample):
        wilcoxon_one_sided([], [1])
    with pytest.raises(LengthMismatch):
        wilcoxon_one_sided([1, 2], [1])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(-5, 5), min_size=1, max_size=14))
def test_p_value_in_unit_interval_and_sign_flip(d):
    x, y = d, [0] * len(d)
    p = wilcoxon_one_sided(x, y)
    q = wilcoxon_one_sided(y, x)
    assert 0.0 <= p <= 1.0
    # P(W+ >= w) + P(W+ <= w) = 1 + P(W+ = w), so the pair can never sum below 1.
    assert p + q >= 1.0 - 1e-12


def test_a12_examples():
    assert vargha_delaney_a12([1, 2, 3], [3, 1, 2]) == 0.5
    assert vargha_delaney_a12([5, 6], [1, 2, 3]) == 1.0
    assert vargha_delaney_a12([1, 2], [1, 3]) == 0.375
    with pytest.raises(EmptySample):
        vargha_delaney_a12([], [1])


def test_a12_matches_brute_force():
    rng = random.Random(11)
    for _ in range(500):
        x = [rng.randint(0, 9) for _ in range(rng.randint(1, 15))]
        y = [rng.randint(0, 9) for _ in range(rng.randint(1, 15))]
        assert vargha_delaney_a12(x, y) == a12_pairs(x, y)
        assert vargha_delaney_a12(x, y) + vargha_delaney_a12(y, x) == 1.0


def test_thresholds():
    assert [classify_effect(a) for a in (0.72, 0.68, 0.64, 0.9, 0.5)] == ["large", "medium", "small", "large", "small"]
    assert [classify_wtl(p) for p in (0.01, 0.05, 0.5, 0.99, 0.995)] == ["win", "tie", "tie", "tie", "loss"]


def make_records(domains, candidates, strategies=("zero-shot",), reps=20):
    """``candidates`` maps config id to a function (domain index, rep) -> score."""
    out = []
    for d in range(domains):
        for s in strategies:
            for cid, fn in candidates.items():
                for r in range(reps):
                    v = fn(d, r)
                    out.append(GenerationRecord("p", f"D{d}", s, cid, r, 0, "x", "m",
                                                {"syntactic": v, "semantic": v}, "ok"))
    return out


def base(d, r):
    return 0.4 + 0.01 * r


def test_tabulate_all_wins():
    recs = make_records(10, {"default": base, "S0": lambda d, r: base(d, r) + 0.1})
    table = tabulate(recs, "default")
    cell = table.cell("S0", "zero-shot", "cosine")
    assert (cell.win, cell.tie, cell.loss) == (10, 0, 0)
    assert cell.large == 10
    by_domain = tabulate(recs, "default", group_by="domain")
    assert len(by_domain.rows) == 10
    assert all(by_domain.cell(f"D{d}", "zero-shot", "semantic").win == 1 for d in range(10))


def test_tabulate_identical_scores_tie():
    recs = make_records(10, {"default": base, "S0": base})
    cell = tabulate(recs, "default").cell("S0", "zero-shot", "semantic")
    assert (cell.win, cell.tie, cell.loss) == (0, 10, 0)


def test_rendered_mixed_cell():
    def s0(d, r):
        return base(d, r) + (0.1 if d < 4 else -0.1)

    recs = make_records(10, {"default": base, "S0": s0, "S1": base})
    table = tabulate(recs, "default")
    assert table.cell("S0", "zero-shot", "cosine").wtl_text() == "4 / 0 / 6"
    md = table.to_markdown()
    assert "| S0 | 4 / 0 / 6 | 4 / 0 / 6 |" in md
    assert "| A12 (L / M / S) | 4 / 0 / 0 | 4 / 0 / 0 |" in md
    for row in table.rows:
        for col in table.columns:
            assert table.cells[(row, col)].total == 10


def test_row_sums_by_domain():
    recs = make_records(3, {"default": base, "S0": base, "S1": lambda d, r: 1.0, "S2": lambda d, r: 0.0},
                        strategies=("zero-shot", "few-shot"))
    table = tabulate(recs, "default", group_by="domain")
    assert table.columns[0] == ("zero-shot", "cosine")
    for row in table.rows:
        for col in table.columns:
            c = table.cells[(row, col)]
            assert (c.win, c.tie, c.loss) == (1, 1, 1)


def test_failed_records_score_as_sentinel():
    recs = make_records(1, {"default": base})
    recs += [GenerationRecord("p", "D0", "zero-shot", "S0", r, 0, None, None, None, "backend_error") for r in range(20)]
    cell = tabulate(recs, "default").cell("S0", "zero-shot", "cosine")
    assert cell.loss == 1


def test_missing_cell():
    recs = make_records(2, {"default": base, "S0": base})
    recs = [r for r in recs if not (r.domain_id == "D1" and r.config_id == "S0")]
    with pytest.raises(MissingCell):
        tabulate(recs, "default")


def test_unpaired_option():
    recs = make_records(2, {"default": base, "S0": lambda d, r: base(d, r) + 0.5})
    assert tabulate(recs, "default", paired=False).cell("S0", "zero-shot", "cosine").win == 2
