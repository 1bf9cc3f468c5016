"""Patient-level aggregation and classification metrics (confusion, P/R/F1, ROC, AUC)."""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


@dataclass
class PatientPrediction:
    patient_id: str
    mean_prob_class1: float
    predicted: int
    label: int


def aggregate_patient(slice_probs, patient_id: str, label: int) -> PatientPrediction:
    p = np.asarray(list(slice_probs), dtype=np.float64)
    if p.size == 0:
        raise DataError(f"patient {patient_id}: no slice probabilities")
    m = float(np.mean(p))
    return PatientPrediction(patient_id, m, int(m > 0.5), int(label))


def aggregate(patient_ids, probs_class1, labels) -> list[PatientPrediction]:
    """Group slice-level class-1 probabilities by patient (first-seen order) and average."""
    groups: dict[str, list[float]] = {}
    lab: dict[str, int] = {}
    for pid, p, y in zip(patient_ids, probs_class1, labels):
        groups.setdefault(pid, []).append(float(p))
        if lab.setdefault(pid, int(y)) != int(y):
            raise DataError(f"patient {pid} has slices with conflicting labels")
    return [aggregate_patient(v, pid, lab[pid]) for pid, v in groups.items()]


@dataclass
class MetricsReport:
    confusion: np.ndarray  # rows truth, cols prediction
    accuracy: float
    precision: list[float]
    recall: list[float]
    f1: list[float]
    degenerate: list[str] = field(default_factory=list)
    roc_points: list[tuple[float, float, float]] = field(default_factory=list)  # (threshold, fpr, tpr)
    auc: float | None = None

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("metric,class,value\n")
        out.write(f"accuracy,all,{self.accuracy!r}\n")
        for c in (0, 1):
            out.write(f"precision,{c},{self.precision[c]!r}\n")
            out.write(f"recall,{c},{self.recall[c]!r}\n")
            out.write(f"f1,{c},{self.f1[c]!r}\n")
        if self.auc is not None:
            out.write(f"auc,1,{self.auc!r}\n")
        for t in range(2):
            for p in range(2):
                out.write(f"confusion_t{t}_p{p},all,{int(self.confusion[t, p])}\n")
        for flag in self.degenerate:
            out.write(f"degenerate,{flag},1\n")
        return out.getvalue()

    def roc_csv(self) -> str:
        out = io.StringIO()
        out.write("threshold,fpr,tpr\n")
        for thr, fpr, tpr in self.roc_points:
            out.write(f"{thr!r},{fpr!r},{tpr!r}\n")
        return out.getvalue()

    def confusion_table(self) -> str:
        c = self.confusion
        return (
            "            pred 0  pred 1\n"
            f"truth 0  {c[0, 0]:>7d} {c[0, 1]:>7d}\n"
            f"truth 1  {c[1, 0]:>7d} {c[1, 1]:>7d}\n"
        )


def _ratio(num: int, den: int, flag: str, flags: list[str]) -> float:
    if den == 0:
        flags.append(flag)
        return 0.0
    return float(num / den)


def confusion_and_rates(predictions) -> MetricsReport:
    preds = list(predictions)
    if not preds:
        raise DataError("no predictions to score")
    cm = np.zeros((2, 2), dtype=int)
    for p in preds:
        cm[p.label, p.predicted] += 1
    flags: list[str] = []
    precision, recall, f1 = [], [], []
    for c in (0, 1):
        tp = cm[c, c]
        fp = cm[1 - c, c]
        fn = cm[c, 1 - c]
        pr = _ratio(tp, tp + fp, f"precision_{c}", flags)
        rc = _ratio(tp, tp + fn, f"recall_{c}", flags)
        f = 0.0 if pr + rc == 0 else float(2 * pr * rc / (pr + rc))
        precision.append(pr)
        recall.append(rc)
        f1.append(f)
    acc = (cm[0, 0] + cm[1, 1]) / cm.sum()
    return MetricsReport(cm, float(acc), precision, recall, f1, flags)


def roc_auc(predictions) -> tuple[list[tuple[float, float, float]], float]:
    """ROC staircase over distinct scores (descending) and its trapezoidal area.

    Points are (threshold, fpr, tpr); the first point uses threshold +inf.
    """
    preds = list(predictions)
    scores = np.array([p.mean_prob_class1 for p in preds], dtype=np.float64)
    labels = np.array([p.label for p in preds], dtype=int)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("ROC/AUC needs both classes present")
    points = [(float("inf"), 0.0, 0.0)]
    tp = fp = 0
    for thr in np.unique(scores)[::-1]:
        at = scores == thr
        tp += int(labels[at].sum())
        fp += int((~labels[at].astype(bool)).sum())
        points.append((float(thr), fp / n_neg, tp / n_pos))
    fpr = np.array([p[1] for p in points])
    tpr = np.array([p[2] for p in points])
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return points, auc


def full_report(predictions) -> MetricsReport:
    preds = list(predictions)
    report = confusion_and_rates(preds)
    if len({p.label for p in preds}) == 2:
        report.roc_points, report.auc = roc_auc(preds)
    else:
        report.degenerate.append("auc_single_class")
    return report
