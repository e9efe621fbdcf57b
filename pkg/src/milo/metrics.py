"""Statistics over annotation runs: classification quality against audit
labels, human-model agreement, rank correlation, paired t-tests, win ratios,
and judge-human agreement.

All functions are pure and operate on plain sequences/mappings; the service
and report layers own data extraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from scipy.stats import t as _student_t

from milo.errors import MiloError
from milo.model import QAFeedback
from milo.rubric import RubricMode

AGREEMENT_QUESTIONS = 8  # the binary-question agreement scale is 0..8


class MetricsError(MiloError):
    pass


class LengthMismatch(MetricsError):
    pass


class EmptyInput(MetricsError):
    pass


class DegenerateVariance(MetricsError):
    pass


class TooFewSamples(MetricsError):
    pass


class ZeroVariance(MetricsError):
    pass


class KeyMismatch(MetricsError):
    pass


class UnknownCategory(MetricsError):
    pass


class UnpairedFeedback(MetricsError):
    pass


class ModeMismatch(MetricsError):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise MetricsError("confusion counts must be >= 0")

    @classmethod
    def from_pairs(cls, predictions, golds) -> ConfusionCounts:
        tp = fp = tn = fn = 0
        for pred, gold in zip(predictions, golds):
            if pred and gold:
                tp += 1
            elif pred and not gold:
                fp += 1
            elif not pred and gold:
                fn += 1
            else:
                tn += 1
        return cls(tp, fp, tn, fn)


def confusion_metrics(predictions, golds) -> dict:
    """Accuracy/precision/recall for binary predictions against gold labels.

    Precision and recall use the 0-when-undefined convention: a denominator of
    zero yields 0.0 rather than an error.
    """
    predictions = list(predictions)
    golds = list(golds)
    if len(predictions) != len(golds):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(golds)} golds")
    if not predictions:
        raise EmptyInput("need at least one prediction/gold pair")
    c = ConfusionCounts.from_pairs(predictions, golds)
    n = len(predictions)
    precision = c.tp / (c.tp + c.fp) if (c.tp + c.fp) else 0.0
    recall = c.tp / (c.tp + c.fn) if (c.tp + c.fn) else 0.0
    return {
        "accuracy": (c.tp + c.tn) / n,
        "precision": precision,
        "recall": recall,
        "counts": c,
    }


def agreement_score(human_answers, llm_answers) -> int:
    """Matched positions on the fixed 8-binary-question scale (0..8)."""
    human_answers = list(human_answers)
    llm_answers = list(llm_answers)
    if len(human_answers) != AGREEMENT_QUESTIONS or len(llm_answers) != AGREEMENT_QUESTIONS:
        raise LengthMismatch(
            f"agreement is defined over {AGREEMENT_QUESTIONS} answers, "
            f"got {len(human_answers)} and {len(llm_answers)}"
        )
    return sum(1 for h, m in zip(human_answers, llm_answers) if h == m)


def midranks(values) -> list[float]:
    """Ranks 1..n with ties assigned the average of their positions."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1  # positions are 0-based; ranks 1-based
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def _pearson(x, y) -> float:
    n = len(x)
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    dx = [v - mx for v in x]
    dy = [v - my for v in y]
    sxx = math.fsum(a * a for a in dx)
    syy = math.fsum(b * b for b in dy)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateVariance("all values tied; correlation undefined")
    return math.fsum(a * b for a, b in zip(dx, dy)) / math.sqrt(sxx * syy)


def spearman_rho(x, y) -> dict:
    """Rank correlation with mid-rank ties; p from the large-sample t approximation."""
    x = list(x)
    y = list(y)
    if len(x) != len(y):
        raise LengthMismatch(f"{len(x)} vs {len(y)} values")
    if len(x) < 3:
        raise TooFewSamples("need at least 3 pairs")
    rho = _pearson(midranks(x), midranks(y))
    n = len(x)
    if abs(rho) >= 1.0:
        p = 0.0
    else:
        t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
        p = min(1.0, 2.0 * float(_student_t.sf(abs(t), n - 2)))
    return {"rho": rho, "p_two_sided": p}


def paired_t_test_one_sided(diffs) -> dict:
    """Upper-tail paired t-test on a vector of differences.

    Returns t = mean/(s/sqrt(n)), the one-sided p against H1: mean > 0, and
    the conventional two-sided 95% confidence interval for the mean.
    """
    diffs = [float(d) for d in diffs]
    n = len(diffs)
    if n < 2:
        raise TooFewSamples("need at least 2 differences")
    mean = math.fsum(diffs) / n
    ss = math.fsum((d - mean) ** 2 for d in diffs)
    if ss == 0.0:
        raise ZeroVariance("all differences equal; t undefined")
    s = math.sqrt(ss / (n - 1))
    se = s / math.sqrt(n)
    t = mean / se
    p = float(_student_t.sf(t, n - 1))
    half = float(_student_t.ppf(0.975, n - 1)) * se
    return {"mean": mean, "t": t, "p_one_sided": p, "ci95": (mean - half, mean + half)}


def weighted_average(values: dict, counts: dict) -> float:
    """Count-weighted mean over matching category keys."""
    if set(values) != set(counts):
        raise KeyMismatch(f"value keys {sorted(values)} != count keys {sorted(counts)}")
    if not values:
        raise EmptyInput("no categories")
    if any(c <= 0 for c in counts.values()):
        raise MetricsError("counts must be positive")
    total = sum(counts.values())
    return sum(counts[k] * values[k] for k in values) / total


class Winner(str, Enum):
    WITH_ASSIST = "with-assist"
    WITHOUT_ASSIST = "without-assist"
    TIE_GOOD = "tie-good"
    TIE_BAD = "tie-bad"


class Dimension(str, Enum):
    HELPFULNESS = "helpfulness"
    HONESTY = "honesty"


@dataclass(frozen=True)
class HeadToHeadRecord:
    category: str
    winner: Winner
    dimension: Dimension

    def to_dict(self) -> dict:
        return {
            "category": self.category,
            "winner": self.winner.value,
            "dimension": self.dimension.value,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> HeadToHeadRecord:
        return cls(raw["category"], Winner(raw["winner"]), Dimension(raw["dimension"]))


def win_ratio_report(records, category_counts: dict) -> dict:
    """Per-category win percentages plus count-weighted averages.

    Ties stay in the denominator but earn no wins, so the two win percentages
    of a category need not sum to 100. The increase column is with minus
    without, computed before any rounding.
    """
    records = list(records)
    for rec in records:
        if rec.category not in category_counts:
            raise UnknownCategory(rec.category)
        if category_counts[rec.category] <= 0:
            raise MetricsError(f"count for {rec.category!r} must be positive")

    per_category: dict[str, dict] = {}
    for dimension in Dimension:
        tallies: dict[str, dict] = {}
        for rec in records:
            if rec.dimension is not dimension:
                continue
            t = tallies.setdefault(rec.category, {"with": 0, "without": 0, "total": 0})
            t["total"] += 1
            if rec.winner is Winner.WITH_ASSIST:
                t["with"] += 1
            elif rec.winner is Winner.WITHOUT_ASSIST:
                t["without"] += 1
        for category, t in tallies.items():
            ratios = per_category.setdefault(category, {})
            win_with = 100.0 * t["with"] / t["total"]
            win_without = 100.0 * t["without"] / t["total"]
            ratios[dimension.value] = {
                "with": win_with,
                "without": win_without,
                "increase": win_with - win_without,
            }

    weighted: dict[str, dict] = {}
    for dimension in Dimension:
        cats = [c for c in per_category if dimension.value in per_category[c]]
        if not cats:
            continue
        counts = {c: category_counts[c] for c in cats}
        avg_with = weighted_average({c: per_category[c][dimension.value]["with"] for c in cats}, counts)
        avg_without = weighted_average(
            {c: per_category[c][dimension.value]["without"] for c in cats}, counts
        )
        weighted[dimension.value] = {
            "with": avg_with,
            "without": avg_without,
            "increase": avg_with - avg_without,
        }

    return {"per_category": per_category, "weighted_average": weighted}


def _grades_by_criterion(feedback: QAFeedback, criteria) -> dict:
    grades = {g.criterion: g.level for g in feedback.criterion_grades}
    missing = [c for c in criteria if c not in grades]
    if missing:
        raise ModeMismatch(f"feedback {feedback.id!r} missing grades for {missing}")
    return grades


def judge_human_agreement(judge_feedback, human_feedback, criteria) -> dict:
    """Exact-grade agreement between paired judge and human feedback.

    Pairs are matched on annotation id. The overall rate counts pairs where
    every criterion grade matches; per-criterion rates count matches on that
    criterion alone; the disagreement distribution is over disagreeing pairs,
    keyed by how many criteria still agree.
    """
    criteria = list(criteria)
    if not criteria:
        raise EmptyInput("no criteria")
    for fb in list(judge_feedback) + list(human_feedback):
        if fb.mode is not RubricMode.GRADING_SCALE:
            raise ModeMismatch(f"feedback {fb.id!r} is not grading-scale")

    def index(feedback_list, label: str) -> dict:
        by_annotation: dict[str, QAFeedback] = {}
        for fb in feedback_list:
            if fb.annotation_id in by_annotation:
                raise UnpairedFeedback(f"duplicate {label} feedback for {fb.annotation_id!r}")
            by_annotation[fb.annotation_id] = fb
        return by_annotation

    judge_by = index(judge_feedback, "judge")
    human_by = index(human_feedback, "human")
    if set(judge_by) != set(human_by):
        odd = set(judge_by) ^ set(human_by)
        raise UnpairedFeedback(f"unpaired annotation ids: {sorted(odd)[:5]}")
    if not judge_by:
        raise EmptyInput("no feedback pairs")

    n = len(judge_by)
    per_criterion = {c: 0 for c in criteria}
    all_agree = 0
    disagree_hist: dict[int, int] = {}
    for annotation_id, jfb in judge_by.items():
        jg = _grades_by_criterion(jfb, criteria)
        hg = _grades_by_criterion(human_by[annotation_id], criteria)
        agreeing = [c for c in criteria if jg[c] == hg[c]]
        for c in agreeing:
            per_criterion[c] += 1
        if len(agreeing) == len(criteria):
            all_agree += 1
        else:
            disagree_hist[len(agreeing)] = disagree_hist.get(len(agreeing), 0) + 1

    disagreeing = n - all_agree
    return {
        "overall_exact_rate": all_agree / n,
        "per_criterion": {c: per_criterion[c] / n for c in criteria},
        "disagreement_distribution": {
            k: v / disagreeing for k, v in sorted(disagree_hist.items())
        },
        "pairs": n,
    }
