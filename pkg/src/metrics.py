"""Confusion matrix and the OA / AA / Kappa report"""
from typing import Optional, Sequence

import numpy as np

from .errors import DataError
from .log_config import LOGGER
from .schemas import MetricsReport


def confusion_matrix(truth: Sequence[int], predicted: Sequence[int], classes: int) -> np.ndarray:
    """K x K counts, rows = true class, cols = predicted class"""
    truth = np.asarray(truth, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if truth.shape != predicted.shape:
        raise DataError(f"{truth.size} targets against {predicted.size} predictions.")
    for name, values in (("target", truth), ("prediction", predicted)):
        if values.size and (values.min() < 0 or values.max() >= classes):
            raise DataError(f"A {name} lies outside [0, {classes}).")
    matrix = np.zeros((classes, classes), dtype=np.int64)
    np.add.at(matrix, (truth, predicted), 1)
    return matrix


def metrics_from_confusion(confusion, class_names: Optional[Sequence[str]] = None) -> MetricsReport:
    """
    OA = trace / N, AA = mean recall over classes present in the truth,
    Kappa = (p_o - p_e) / (1 - p_e) with p_e = sum_k row_k col_k / N^2.
    All three in percent.
    """
    matrix = np.asarray(confusion, dtype=np.int64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DataError(f"Confusion matrix must be square, got {matrix.shape}.")
    if np.any(matrix < 0):
        raise DataError("Confusion matrix entries must be nonnegative.")
    total = matrix.sum()
    if total == 0:
        raise DataError("Cannot score an empty confusion matrix.")

    rows = matrix.sum(axis=1)
    cols = matrix.sum(axis=0)
    observed = float(np.trace(matrix)) / float(total)
    expected = float(np.dot(rows, cols)) / float(total) ** 2
    kappa = 1.0 if expected == 1.0 else (observed - expected) / (1.0 - expected)

    per_class = []
    excluded = []
    for k, row_total in enumerate(rows):
        if row_total == 0:
            per_class.append(None)
            excluded.append(int(k))
        else:
            per_class.append(100.0 * float(matrix[k, k]) / float(row_total))
    if excluded:
        LOGGER.warning("Classes %s have no samples in the truth; excluded from AA.", excluded)
    recalls = [value for value in per_class if value is not None]

    return MetricsReport(
        confusion=matrix.tolist(),
        oa=100.0 * observed,
        aa=float(np.mean(recalls)),
        kappa=100.0 * kappa,
        per_class=per_class,
        class_names=list(class_names) if class_names is not None else [],
        excluded=excluded,
    )


def format_report(report: MetricsReport) -> str:
    """Per-class accuracy, OA, AA, Kappa and the confusion matrix as text"""
    names = report.class_names or [f"class_{k}" for k in range(len(report.confusion))]
    width = max(len(name) for name in names)
    lines = ["Per-class accuracy (%):"]
    for name, value in zip(names, report.per_class):
        lines.append(f"  {name:<{width}}  {'n/a' if value is None else f'{value:6.2f}'}")
    lines.append(f"OA(%)     {report.oa:6.2f}")
    lines.append(f"AA(%)     {report.aa:6.2f}")
    lines.append(f"Kappa(%)  {report.kappa:6.2f}")
    lines.append("Confusion matrix (rows = true, cols = predicted):")
    for row in report.confusion:
        lines.append("  " + " ".join(f"{count:6d}" for count in row))
    return "\n".join(lines)
