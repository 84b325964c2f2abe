"""Classification metrics, ROC/AUC, confidence intervals and significance tests."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

CLASS_NAMES = ("healthy", "inner", "outer")


class InsufficientDataError(ValueError):
    pass


class UndefinedAUCError(ValueError):
    pass


class DegenerateTestError(ValueError):
    pass


def confusion_matrix(y_true, y_pred, n_classes: int = 3) -> np.ndarray:
    """Counts with rows = true class, columns = predicted class."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


@dataclass
class Metrics:
    accuracy: float
    precision: list
    recall: list
    f1: list
    macro_precision: float
    macro_recall: float
    macro_f1: float
    # (class, metric) pairs whose denominator was zero and were set to 0
    zero_division: list = field(default_factory=list)


def compute_metrics(cm) -> Metrics:
    """One-vs-rest per-class precision/recall/F1 and their unweighted means."""
    cm = np.asarray(cm, dtype=np.int64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1] or cm.sum() <= 0:
        raise InsufficientDataError("confusion matrix must be square with a positive total")
    tp = np.diag(cm).astype(float)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    flags = []

    def ratio(num, den, k, what):
        if den > 0:
            return float(num / den)
        flags.append((k, what))
        return 0.0

    prec, rec, f1 = [], [], []
    for k in range(cm.shape[0]):
        p = ratio(tp[k], tp[k] + fp[k], k, "precision")
        r = ratio(tp[k], tp[k] + fn[k], k, "recall")
        prec.append(p)
        rec.append(r)
        f1.append(ratio(2 * p * r, p + r, k, "f1"))
    return Metrics(
        float(tp.sum() / cm.sum()),
        prec,
        rec,
        f1,
        float(np.mean(prec)),
        float(np.mean(rec)),
        float(np.mean(f1)),
        flags,
    )


def binary_auc(scores, positives) -> float:
    """Area under the ROC curve by the rank-sum statistic with averaged ties.

    Equal to the trapezoidal area under the full-threshold ROC curve.
    """
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    n_pos = int(positives.sum())
    n_neg = positives.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUCError("AUC needs both positive and negative samples")
    ranks = stats.rankdata(scores)
    u = ranks[positives].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_curve(scores, positives):
    """(fpr, tpr) over every distinct threshold, from (0, 0) to (1, 1)."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    order = np.argsort(-scores, kind="mergesort")
    s, p = scores[order], positives[order]
    last = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tps = np.cumsum(p)[last]
    fps = np.cumsum(~p)[last]
    tpr = np.r_[0.0, tps / max(p.sum(), 1)]
    fpr = np.r_[0.0, fps / max((~p).sum(), 1)]
    return fpr, tpr


def roc_auc(scores, labels, n_classes: int = 3) -> list[float]:
    """One-vs-rest AUC per class; ``scores`` is (N, n_classes)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    return [binary_auc(scores[:, k], labels == k) for k in range(n_classes)]


def mean_ci(values, alpha: float = 0.05) -> tuple[float, float]:
    """Mean and Student-t confidence half-width."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        raise InsufficientDataError("need at least 2 values for a confidence interval")
    sd = v.std(ddof=1)
    t = stats.t.ppf(1 - alpha / 2, v.size - 1)
    return float(v.mean()), float(t * sd / math.sqrt(v.size))


@dataclass(frozen=True)
class TTestResult:
    t_statistic: float
    p_value: float
    df: float
    significant: bool


def independent_t_test(a, b, alpha: float = 0.01) -> TTestResult:
    """Two-sided Welch t-test of mean(a) vs mean(b)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise InsufficientDataError("each sample needs at least 2 values")
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    se2 = va + vb
    diff = a.mean() - b.mean()
    if se2 == 0:
        if diff == 0:
            return TTestResult(0.0, 1.0, float(a.size + b.size - 2), False)
        raise DegenerateTestError("both samples have zero variance")
    t = diff / math.sqrt(se2)
    df = se2**2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1)) if va or vb else float(a.size + b.size - 2)
    p = float(min(1.0, 2.0 * stats.t.sf(abs(t), df)))
    return TTestResult(float(t), p, float(df), p < alpha)


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------


@dataclass
class EvalReport:
    confusion: list
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    per_class: dict
    auc: list
    ci_halfwidth: float = 0.0
    n_runs: int = 1
    seeds: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_predictions(cls, y_true, probs, seeds=(), **extra) -> "EvalReport":
        y_true = np.asarray(y_true)
        probs = np.asarray(probs)
        if y_true.size == 0:
            raise InsufficientDataError("cannot evaluate an empty set")
        cm = confusion_matrix(y_true, probs.argmax(axis=1), probs.shape[1])
        m = compute_metrics(cm)
        aucs = []
        for k in range(probs.shape[1]):
            try:
                aucs.append(binary_auc(probs[:, k], y_true == k))
            except UndefinedAUCError:
                aucs.append(float("nan"))
        per_class = {
            name: {"precision": p, "recall": r, "f1": f}
            for name, p, r, f in zip(CLASS_NAMES, m.precision, m.recall, m.f1)
        }
        return cls(cm.tolist(), m.accuracy, m.macro_precision, m.macro_recall, m.macro_f1, per_class, aucs,
                   seeds=list(seeds), extra=dict(extra))

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=float)

    def to_text(self) -> str:
        lines = [
            f"accuracy         {self.accuracy:.4f}" + (f" ± {self.ci_halfwidth:.4f}" if self.n_runs > 1 else ""),
            f"macro precision  {self.macro_precision:.4f}",
            f"macro recall     {self.macro_recall:.4f}",
            f"macro F1         {self.macro_f1:.4f}",
            "AUC (one-vs-rest) " + "  ".join(f"{n}={a:.4f}" for n, a in zip(CLASS_NAMES, self.auc)),
            "confusion (rows=true, cols=pred; healthy/inner/outer):",
        ]
        lines += ["  " + " ".join(f"{c:6d}" for c in row) for row in self.confusion]
        for k, v in sorted(self.extra.items()):
            lines.append(f"{k}: {v}")
        return "\n".join(lines) + "\n"


def aggregate_reports(reports, alpha: float = 0.05) -> EvalReport:
    """Average several runs; the CI half-width refers to accuracy."""
    reports = list(reports)
    if not reports:
        raise InsufficientDataError("no reports to aggregate")
    accs = [r.accuracy for r in reports]
    cm = np.sum([np.asarray(r.confusion) for r in reports], axis=0)
    half = mean_ci(accs, alpha)[1] if len(reports) > 1 else 0.0
    seeds = [s for r in reports for s in r.seeds]
    per_class = {
        name: {k: float(np.mean([r.per_class[name][k] for r in reports])) for k in ("precision", "recall", "f1")}
        for name in CLASS_NAMES
    }
    return EvalReport(
        cm.tolist(),
        float(np.mean(accs)),
        float(np.mean([r.macro_precision for r in reports])),
        float(np.mean([r.macro_recall for r in reports])),
        float(np.mean([r.macro_f1 for r in reports])),
        per_class,
        [float(np.mean(col)) for col in zip(*[r.auc for r in reports])],
        half,
        len(reports),
        seeds,
        {"accuracies": accs},
    )
