"""Evaluation counts and the P/R/F/A report used for model comparison.

"Matching" is the positive class. Zero-denominator cases (e.g. a model
that never predicts matching) report 0.0 for the affected metric and
set the degenerate flag rather than raising.
"""

from dataclasses import dataclass

from .errors import ParameterError
from .siamese import LABEL_MATCHING, LABEL_NON_MATCHING

_VALID_LABELS = (LABEL_MATCHING, LABEL_NON_MATCHING)


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn


def confusion(predicted, actual):
    """Tally a Confusion from parallel label sequences."""
    if len(predicted) != len(actual):
        raise ParameterError(
            f"prediction/label length mismatch: {len(predicted)} vs {len(actual)}"
        )
    counts = {"tp": 0, "fp": 0, "fn": 0, "tn": 0}
    for pred, act in zip(predicted, actual):
        if pred not in _VALID_LABELS or act not in _VALID_LABELS:
            raise ParameterError(f"unknown label in ({pred!r}, {act!r})")
        if pred == LABEL_MATCHING:
            counts["tp" if act == LABEL_MATCHING else "fp"] += 1
        else:
            counts["fn" if act == LABEL_MATCHING else "tn"] += 1
    return Confusion(**counts)


def _ratio(num, den):
    return (num / den, False) if den else (0.0, True)


@dataclass(frozen=True)
class MetricsReport:
    counts: Confusion
    precision: float
    recall: float
    f_measure: float
    accuracy: float
    degenerate: bool

    def rounded(self):
        """Percentages rounded half-up to one decimal, for display."""
        return {
            "P": round_pct(self.precision),
            "R": round_pct(self.recall),
            "F": round_pct(self.f_measure),
            "A": round_pct(self.accuracy),
        }


def round_pct(fraction):
    """fraction in [0,1] -> percentage rounded half-up to 0.1."""
    return int(fraction * 1000.0 + 0.5) / 10.0


def f_from_pr(precision, recall):
    """Harmonic mean of precision and recall; 0.0 when both are zero."""
    return _ratio(2 * precision * recall, precision + recall)[0]


def metrics(counts):
    precision, p_deg = _ratio(counts.tp, counts.tp + counts.fp)
    recall, r_deg = _ratio(counts.tp, counts.tp + counts.fn)
    f_measure, f_deg = _ratio(2 * precision * recall, precision + recall)
    accuracy, a_deg = _ratio(counts.tp + counts.tn, counts.total)
    return MetricsReport(
        counts=counts,
        precision=precision,
        recall=recall,
        f_measure=f_measure,
        accuracy=accuracy,
        degenerate=p_deg or r_deg or f_deg or a_deg,
    )


@dataclass(frozen=True)
class ComparisonRow:
    model: str
    n: int
    lam: int
    report: MetricsReport

    def record(self):
        c = self.report.counts
        r = self.report.rounded()
        return {
            "model": self.model, "N": self.n, "lambda": self.lam,
            "tp": c.tp, "fp": c.fp, "fn": c.fn, "tn": c.tn,
            "P": r["P"], "R": r["R"], "F": r["F"], "A": r["A"],
        }


def compare(rows):
    """Fixed-width comparison table over ComparisonRow entries."""
    header = f"{'model':<22} {'N':>2} {'lam':>3} {'tp':>5} {'fp':>5} {'fn':>5} {'tn':>5}" \
             f" {'P':>6} {'R':>6} {'F':>6} {'A':>6}"
    lines = [header, "-" * len(header)]
    for row in rows:
        rec = row.record()
        flag = " *" if row.report.degenerate else ""
        lines.append(
            f"{rec['model']:<22} {rec['N']:>2} {rec['lambda']:>3}"
            f" {rec['tp']:>5} {rec['fp']:>5} {rec['fn']:>5} {rec['tn']:>5}"
            f" {rec['P']:>6.1f} {rec['R']:>6.1f} {rec['F']:>6.1f} {rec['A']:>6.1f}{flag}"
        )
    if any(row.report.degenerate for row in rows):
        lines.append("* zero-denominator metric reported as 0.0")
    return "\n".join(lines)
