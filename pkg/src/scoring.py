"""
Causal scores from a fitted NAVAR model.

The score of a link i→j is the standard deviation over time of the
contribution series c_t^{i→j}: a backbone that ignores its input emits a
constant and scores exactly 0.
"""

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.stats import rankdata

from config import BackboneKind
from backbones import mlp_forward
from data import CSV_FLOAT_FORMAT, apply_normalization, load_csv, window
from errors import CsvParseError, DimensionError, UndefinedAurocError, UnsupportedAnalysisError
from model import contribution_history, predict, predict_excluding


@dataclass
class ContributionTensor:
    """Contribution history c_t^{i→j} in normalized space."""

    values: np.ndarray  # (S, N, N) indexed (t, i, j)
    predictions: np.ndarray  # (S, N)
    targets: np.ndarray  # (S, N)
    replicate: np.ndarray  # (S,)
    target_index: np.ndarray  # (S,), 0-based row
    K: int
    variable_names: list = None

    @property
    def N(self):
        return self.values.shape[1]

    @property
    def time_range(self):
        """First and last 1-based time step covered (over all replicates)."""
        return int(self.target_index.min()) + 1, int(self.target_index.max()) + 1


@dataclass
class ScoreMatrix:
    scores: np.ndarray  # N×N, entry (i, j) = score(i→j)
    variable_names: list = None
    self_links: bool = True

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.ndim != 2 or self.scores.shape[0] != self.scores.shape[1]:
            raise DimensionError(f"scores must be a square matrix, got shape {self.scores.shape}")
        if self.variable_names is None:
            self.variable_names = [f"x{i}" for i in range(self.N)]

    @property
    def N(self):
        return self.scores.shape[0]


@dataclass
class RocCurve:
    points: list = field(default_factory=list)  # (fpr, tpr, threshold), thresholds descending
    auroc: float = 0.5


@dataclass
class LagRecord:
    lag: int
    score: float
    mse: float
    delta_score: float


def _prepare(model, dataset):
    if dataset.N != model.N:
        raise DimensionError(f"model has N={model.N}, data has N={dataset.N}")
    if dataset.stats is None and model.stats is not None:
        return apply_normalization(dataset, model.stats)
    return dataset


def _population_std(values, axis=0):
    # exactly 0 for a constant series, whatever the rounding of the mean
    sigma = values.std(axis=axis)
    return np.where(np.ptp(values, axis=axis) == 0, 0.0, sigma)


def extract_contributions(model, dataset):
    """
    Full contribution history of ``model`` over every valid step of ``dataset``.

    Raw data is standardized with the model's stored statistics; a dataset that
    already carries statistics is used as is.

    Args:
        model (NavarModel): Fitted model.
        dataset (TimeSeriesDataset): Data with model.N variables.

    Returns:
        ContributionTensor
    """
    normalized = _prepare(model, dataset)
    history = contribution_history(model, normalized)
    return ContributionTensor(
        history.contributions,
        history.predictions,
        history.targets,
        history.replicate,
        history.target_index,
        model.config.K,
        list(model.variable_names),
    )


def score_links(contribs):
    """
    Population standard deviation of every contribution series.

    Returns:
        ScoreMatrix
    """
    values = contribs.values if isinstance(contribs, ContributionTensor) else np.asarray(contribs)
    if values.ndim != 3 or values.shape[1] != values.shape[2]:
        raise DimensionError(f"contributions must be (T, N, N), got shape {values.shape}")
    if values.shape[0] < 2:
        raise DimensionError(f"need at least 2 time steps to score, got {values.shape[0]}")
    names = contribs.variable_names if isinstance(contribs, ContributionTensor) else None
    return ScoreMatrix(_population_std(values), names)


def _score_array(scores):
    return scores.scores if isinstance(scores, ScoreMatrix) else np.asarray(scores, dtype=np.float64)


def auroc(scores, truth, ignore_self_links=True):
    """
    Area under the ROC curve of the scores against the true adjacency.

    The area is the Mann-Whitney statistic with average ranks, so a tied
    positive/negative pair counts one half.

    Args:
        scores (ScoreMatrix or np.ndarray): N×N scores.
        truth (GroundTruthGraph): True adjacency.
        ignore_self_links (bool): Leave the diagonal out of the evaluation.

    Returns:
        RocCurve
    """
    matrix = _score_array(scores)
    if matrix.shape != truth.adjacency.shape:
        raise DimensionError(f"scores {matrix.shape} vs truth {truth.adjacency.shape}")
    keep = ~np.eye(matrix.shape[0], dtype=bool) if ignore_self_links else np.ones(matrix.shape, dtype=bool)
    values = matrix[keep]
    labels = truth.adjacency[keep]
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAurocError(f"AUROC needs positive and negative links, got {n_pos} and {n_neg}")

    ranks = rankdata(values)
    area = (ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)

    points = [(0.0, 0.0, float("inf"))]
    for threshold in np.unique(values)[::-1]:
        predicted = values >= threshold
        tpr = np.count_nonzero(predicted & labels) / n_pos
        fpr = np.count_nonzero(predicted & ~labels) / n_neg
        points.append((float(fpr), float(tpr), float(threshold)))
    return RocCurve(points, float(area))


def rank_links(scores, include_self_links=True):
    """Links as (i, j, score), highest score first, ties by (i, j)."""
    matrix = _score_array(scores)
    links = [
        (i, j, float(matrix[i, j]))
        for i in range(matrix.shape[0])
        for j in range(matrix.shape[1])
        if include_self_links or i != j
    ]
    return sorted(links, key=lambda link: (-link[2], link[0], link[1]))


def lag_mask_analysis(model, dataset, pair):
    """
    Attribute the score of one link to lag ranges by masking the fitted model.

    For every cutoff k the inputs of the source backbone at lags greater than
    k are set to 0 (the normalized mean) and the link is scored again.
    ``mse`` compares the masked contribution with the residual the link would
    have to explain for an exact prediction.

    Args:
        model (NavarModel): Fitted model with an MLP backbone.
        dataset (TimeSeriesDataset): Data with model.N variables.
        pair (tuple): (source i, target j), 0-based.

    Returns:
        list[LagRecord]: One record per k = 1..K.
    """
    if model.kind is not BackboneKind.MLP:
        raise UnsupportedAnalysisError("lag masking needs explicit lag inputs (MLP backbone)")
    source, target = pair
    if not (0 <= source < model.N and 0 <= target < model.N):
        raise DimensionError(f"pair {pair} out of range for N={model.N}")

    normalized = _prepare(model, dataset)
    windows = window(normalized, model.config.K)
    history = contribution_history(model, normalized)

    residual = windows.targets[:, target] - model.beta[target]
    for other in range(model.N):
        if other != source:
            residual = residual - history.contributions[:, other, target]

    backbone = model.backbones[source]
    # every input masked: one constant output
    previous = 0.0
    records = []
    for k in range(1, model.config.K + 1):
        masked = mlp_forward(backbone, windows.inputs[:, source, :], mask_from_lag=k).value[:, target]
        score = float(_population_std(masked))
        mse = float(np.mean((masked - residual) ** 2))
        records.append(LagRecord(k, score, mse, score - previous))
        previous = score
    return records


def ablation_mse(model, dataset):
    """
    Increase in per-target MSE when c^{i→j} is replaced by its mean.

    Returns:
        np.ndarray: N×N matrix, entry (i, j) for removing source i from target j.
    """
    if model.kind is not BackboneKind.MLP:
        raise UnsupportedAnalysisError("ablation works on lag windows (MLP backbone)")
    windows = window(_prepare(model, dataset), model.config.K)
    baseline = np.mean((predict(model, windows.inputs) - windows.targets) ** 2, axis=0)
    increase = np.zeros((model.N, model.N))
    for source in range(model.N):
        ablated = predict_excluding(model, windows.inputs, source)
        increase[source] = np.mean((ablated - windows.targets) ** 2, axis=0) - baseline
    return increase


def save_scores_csv(scores, path):
    frame = pd.DataFrame(scores.scores, columns=scores.variable_names)
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)


def load_scores_csv(path):
    """Read an N×N score matrix whose header holds the variable names."""
    table = load_csv(path)
    matrix = table.replicates[0]
    if matrix.shape[0] != matrix.shape[1]:
        raise CsvParseError(f"score matrix in {path} is {matrix.shape[0]}×{matrix.shape[1]}", 1)
    return ScoreMatrix(matrix, table.variable_names)


def save_roc_csv(curve, path):
    frame = pd.DataFrame(curve.points, columns=["fpr", "tpr", "threshold"])
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)


def save_contributions_csv(contribs, path):
    """Long format: replicate,t,source,target,contribution with 1-based t."""
    S, N, _ = contribs.values.shape
    names = np.asarray(contribs.variable_names or [f"x{i}" for i in range(N)], dtype=object)
    steps = np.repeat(np.arange(S), N * N)
    sources = np.tile(np.repeat(np.arange(N), N), S)
    targets = np.tile(np.arange(N), S * N)
    frame = pd.DataFrame(
        {
            "replicate": contribs.replicate[steps],
            "t": contribs.target_index[steps] + 1,
            "source": names[sources],
            "target": names[targets],
            "contribution": contribs.values.reshape(-1),
        }
    )
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)


def save_lag_records_csv(records, path):
    frame = pd.DataFrame(
        [(r.lag, r.score, r.mse, r.delta_score) for r in records],
        columns=["lag", "score", "mse", "delta_score"],
    )
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
