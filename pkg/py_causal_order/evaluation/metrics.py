from typing import Sequence, Union

import numpy as np
from scipy.stats import rankdata
from sklearn.metrics import f1_score

from py_causal_order.core.errors import DataError

ArrayLike = Union[Sequence[float], np.ndarray]


class MetricError(DataError): ...


def _validated(scores: ArrayLike, labels: Sequence[int] | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    score_array = np.asarray(scores, dtype=np.float64).reshape(-1)
    label_array = np.asarray(labels).reshape(-1)
    if score_array.shape != label_array.shape:
        raise MetricError(f"{score_array.size} scores for {label_array.size} labels")
    if not np.all(np.isin(label_array, (0, 1))):
        raise MetricError("Labels must be 0 (normal) or 1 (anomaly)")
    if label_array.sum() == 0 or label_array.sum() == label_array.size:
        raise MetricError("Both normal and anomalous samples are needed")
    return score_array, label_array.astype(np.int64)


def auc_roc(scores: ArrayLike, labels: Sequence[int] | np.ndarray) -> float:
    """
    Probability that a random anomaly outscores a random normal sample, ties counting one half.
    Computed from mid-ranks (Mann-Whitney U).
    """
    score_array, label_array = _validated(scores, labels)
    ranks = rankdata(score_array, method="average")
    n_anomalies = int(label_array.sum())
    n_normals = label_array.size - n_anomalies
    u_statistic = ranks[label_array == 1].sum() - n_anomalies * (n_anomalies + 1) / 2.0
    return float(u_statistic / (n_anomalies * n_normals))


def top_n_predictions(scores: ArrayLike, n: int) -> np.ndarray:
    """Flag the n highest scores as anomalies; equal scores keep their input order."""
    score_array = np.asarray(scores, dtype=np.float64).reshape(-1)
    predictions = np.zeros(score_array.size, dtype=np.int64)
    predictions[np.argsort(-score_array, kind="stable")[:n]] = 1
    return predictions


def f1_at_contamination(scores: ArrayLike, labels: Sequence[int] | np.ndarray) -> float:
    """F1 of flagging the top-n scores, n being the number of true anomalies."""
    score_array, label_array = _validated(scores, labels)
    predictions = top_n_predictions(score_array, int(label_array.sum()))
    return float(f1_score(label_array, predictions, zero_division=0.0))
