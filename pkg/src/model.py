"""
The NAVAR predictor: N per-variable backbones whose outputs are summed per
target variable on top of a bias vector, the penalized loss, the training
loop and the checkpoint format.
"""

import itertools
import json
import os
import struct
import time
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

import config
from backbones import (
    LstmBackbone,
    MlpBackbone,
    init_backbone,
    lstm_forward_sequence,
    mlp_forward,
)
from config import BackboneKind, NavarConfig, apply_overrides
from data import (
    NormalizationStats,
    TimeSeriesDataset,
    apply_normalization,
    normalize,
    sequences,
    split_index,
    window,
)
from errors import (
    CheckpointParseError,
    CheckpointVersionError,
    ConfigError,
    DatasetTooShortError,
    DimensionError,
    DivergenceError,
)
from logger import Color, RunLogger
from numerics import AdamState, Graph, Tensor, abs_val, adam_step, add, add_bias, mul, square, sub, sum_all

CHECKPOINT_MAGIC = b"NAVARCKP"
CHECKPOINT_VERSION = 1
SHUFFLE_STREAM = 7919
INFERENCE_CHUNK = 4096


class NavarModel:
    """N backbones θ_1..θ_N plus the bias vector β."""

    def __init__(self, backbones, beta, navar_config, stats=None, variable_names=None, trained=False):
        if len(backbones) != beta.shape[0]:
            raise DimensionError(f"{len(backbones)} backbones for a bias of length {beta.shape[0]}")
        self.backbones = backbones
        self.beta = beta
        self.config = navar_config
        self.stats = stats
        self.variable_names = variable_names or [f"x{i}" for i in range(len(backbones))]
        self.trained = trained

    @property
    def N(self):
        return len(self.backbones)

    @property
    def kind(self):
        return self.config.backbone_kind

    def parameters(self):
        """β followed by every backbone's parameters, backbone order ascending."""
        params = [self.beta]
        for backbone in self.backbones:
            params.extend(backbone.parameters())
        return params


@dataclass
class ForwardPass:
    """Recorded contributions and predictions for one batch."""

    contributions: list  # N tensors of shape B×N, entry [b, j] = c^{i→j}
    prediction: Tensor  # B×N

    def contribution_array(self):
        """B×N×N array indexed (sample, source i, target j)."""
        return np.stack([c.value for c in self.contributions], axis=1)


@dataclass
class History:
    """Contributions, predictions and targets over a set of time steps."""

    contributions: np.ndarray  # (S, N, N)
    predictions: np.ndarray  # (S, N)
    targets: np.ndarray  # (S, N)
    replicate: np.ndarray  # (S,)
    target_index: np.ndarray  # (S,)


@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)
    val_mse: list = field(default_factory=list)
    epochs: int = 0
    seconds: float = 0.0


@dataclass
class GridResult:
    overrides: dict
    config: NavarConfig
    val_mse: float


def build_model(navar_config, N, variable_names=None):
    """Untrained model with seeded backbones and β = 0."""
    navar_config.validate()
    backbones = [
        init_backbone(
            navar_config.backbone_kind,
            navar_config.K,
            N,
            navar_config.hidden_units,
            navar_config.hidden_layers,
            np.random.SeedSequence([navar_config.seed, i]),
        )
        for i in range(N)
    ]
    return NavarModel(backbones, np.zeros(N), navar_config, variable_names=variable_names)


def _sum_contributions(beta, contributions):
    # β^j + c^{1→j} + ... + c^{N→j}, summed left to right
    prediction = add_bias(contributions[0], beta)
    for contribution in contributions[1:]:
        prediction = add(prediction, contribution)
    return prediction


def _sum_contribution_arrays(beta, contributions):
    prediction = contributions[:, 0, :] + beta
    for i in range(1, contributions.shape[1]):
        prediction = prediction + contributions[:, i, :]
    return prediction


def forward_contributions(model, windows, graph=None, mask_from_lag=None):
    """
    Contributions and additive predictions for a batch of MLP lag windows.

    Args:
        model (NavarModel): Model with an MLP backbone.
        windows (np.ndarray): B×N×K windows, oldest lag first.
        graph (Graph, optional): Graph to record on.
        mask_from_lag (int, optional): Zero every input at lags greater than this.

    Returns:
        ForwardPass
    """
    windows = np.asarray(windows, dtype=np.float64)
    if windows.ndim != 3 or windows.shape[1:] != (model.N, model.config.K):
        raise DimensionError(
            f"expected windows of shape (B, {model.N}, {model.config.K}), got {windows.shape}"
        )
    if model.kind is not BackboneKind.MLP:
        raise DimensionError("lag windows feed MLP backbones; use sequences for the LSTM")
    graph = graph or Graph()
    beta = graph.parameter(model.beta, "beta")
    contributions = [
        mlp_forward(backbone, windows[:, i, :], graph, mask_from_lag)
        for i, backbone in enumerate(model.backbones)
    ]
    return ForwardPass(contributions, _sum_contributions(beta, contributions))


def forward_sequences(model, chunks, graph=None):
    """
    Per-step contributions and predictions for a batch of equal-length chunks.

    The output of step s predicts row s + 1; the first ``warmup_steps``
    rows are input only.

    Args:
        model (NavarModel): Model with an LSTM backbone.
        chunks (np.ndarray): B×L×N observations.
        graph (Graph, optional): Graph to record on.

    Returns:
        list[ForwardPass]: One entry per predicted row.
    """
    chunks = np.asarray(chunks, dtype=np.float64)
    if chunks.ndim != 3 or chunks.shape[2] != model.N:
        raise DimensionError(f"expected chunks of shape (B, L, {model.N}), got {chunks.shape}")
    graph = graph or Graph()
    beta = graph.parameter(model.beta, "beta")
    per_backbone = [
        lstm_forward_sequence(backbone, chunks[:, :-1, i], graph)
        for i, backbone in enumerate(model.backbones)
    ]
    passes = []
    for step in range(model.config.warmup_steps - 1, chunks.shape[1] - 1):
        contributions = [outputs[step] for outputs in per_backbone]
        passes.append(ForwardPass(contributions, _sum_contributions(beta, contributions)))
    return passes


def navar_loss(passes, targets, penalty):
    """
    Mean squared error plus the contribution penalty, both averaged over samples.

    Args:
        passes (list[ForwardPass]): Forward passes sharing one graph.
        targets (list[np.ndarray]): B×N targets per pass.
        penalty (float): Contribution penalty λ.

    Returns:
        Tensor: Scalar loss node.
    """
    n_samples = sum(t.shape[0] for t in targets)
    N = targets[0].shape[1]
    squared = [sum_all(square(sub(p.prediction, Tensor(t)))) for p, t in zip(passes, targets)]
    loss = mul(_total(squared), 1.0 / (n_samples * N))
    if penalty:
        absolute = [sum_all(abs_val(c)) for p in passes for c in p.contributions]
        loss = add(loss, mul(_total(absolute), penalty / (n_samples * N)))
    return loss


def _total(terms):
    total = terms[0]
    for term in terms[1:]:
        total = add(total, term)
    return total


def _group_by_length(chunks):
    groups = {}
    for chunk in chunks:
        groups.setdefault(chunk.shape[0], []).append(chunk)
    return [np.stack(group) for _, group in sorted(groups.items())]


def compute_loss(model, batch, graph):
    """
    Penalized loss of one mini-batch.

    Args:
        model (NavarModel): The model.
        batch: B×N×K windows and B×N targets as a tuple for the MLP, or a list of
            L_c×N chunks for the LSTM.
        graph (Graph): Graph to record on.

    Returns:
        Tensor: Scalar loss node.
    """
    if model.kind is BackboneKind.MLP:
        windows, targets = batch
        if len(targets) == 0:
            raise DimensionError("empty batch")
        return navar_loss([forward_contributions(model, windows, graph)], [targets], model.config.penalty)

    if len(batch) == 0:
        raise DimensionError("empty batch")
    warmup = model.config.warmup_steps
    passes, targets = [], []
    for stacked in _group_by_length(batch):
        passes.extend(forward_sequences(model, stacked, graph))
        targets.extend(stacked[:, step, :] for step in range(warmup, stacked.shape[1]))
    return navar_loss(passes, targets, model.config.penalty)


def _history_windows(model, windows, mask_from_lag=None):
    parts = []
    for start in range(0, len(windows), INFERENCE_CHUNK):
        chunk = windows.inputs[start : start + INFERENCE_CHUNK]
        parts.append(forward_contributions(model, chunk, mask_from_lag=mask_from_lag).contribution_array())
    contributions = np.concatenate(parts)
    return History(
        contributions,
        _sum_contribution_arrays(model.beta, contributions),
        windows.targets,
        windows.replicate,
        windows.target_index,
    )


def _history_sequences(model, seqs):
    contributions, targets, replicate, target_index = [], [], [], []
    for c, chunk in enumerate(seqs.chunks):
        passes = forward_sequences(model, chunk[None, :, :])
        contributions.append(np.concatenate([p.contribution_array() for p in passes]))
        targets.append(chunk[seqs.warmup :])
        replicate.append(np.full(len(passes), seqs.replicate[c]))
        target_index.append(seqs.target_indices(c))
    contributions = np.concatenate(contributions)
    return History(
        contributions,
        _sum_contribution_arrays(model.beta, contributions),
        np.concatenate(targets),
        np.concatenate(replicate),
        np.concatenate(target_index),
    )


def contribution_history(model, dataset, mask_from_lag=None):
    """
    Contributions for every valid time step of an already normalized dataset.

    Args:
        model (NavarModel): The model.
        dataset (TimeSeriesDataset): Normalized data with model.N variables.
        mask_from_lag (int, optional): MLP only; zero inputs at lags beyond this.

    Returns:
        History
    """
    if dataset.N != model.N:
        raise DimensionError(f"model has N={model.N}, data has N={dataset.N}")
    if model.kind is BackboneKind.MLP:
        return _history_windows(model, window(dataset, model.config.K), mask_from_lag)
    return _history_sequences(model, sequences(dataset, model.config.K, model.config.warmup_steps))


def predict(model, windows):
    """Predictions for B×N×K MLP windows, without recording a graph."""
    return forward_contributions(model, windows).prediction.value


def predict_excluding(model, windows, source):
    """
    Predictions with c^{source→j} replaced by its mean over the batch, i.e.
    the prediction that ignores the past of ``source`` without refitting.

    Returns:
        np.ndarray: B×N predictions.
    """
    if not 0 <= source < model.N:
        raise DimensionError(f"source variable {source} out of range for N={model.N}")
    contributions = forward_contributions(model, windows).contribution_array()
    contributions[:, source, :] = contributions[:, source, :].mean(axis=0)
    return _sum_contribution_arrays(model.beta, contributions)


def validation_mse(model, part):
    history = _history_windows(model, part) if model.kind is BackboneKind.MLP else _history_sequences(model, part)
    return float(np.mean((history.predictions - history.targets) ** 2))


def _split_mlp(normalized, splits, K):
    windows = window(normalized, K)
    boundary = np.asarray(splits)[windows.replicate]
    train_idx = np.nonzero(windows.target_index < boundary)[0]
    val_idx = np.nonzero(windows.target_index >= boundary)[0]
    return windows.subset(train_idx), windows.subset(val_idx) if len(val_idx) else None


def _split_lstm(normalized, splits, length, warmup):
    if any(s <= warmup for s in splits):
        raise DatasetTooShortError(f"training portion of some replicate is not longer than the warm-up ({warmup})")
    train_part = sequences(normalized.head(splits), length, warmup)
    tails = [r[s - warmup :] for r, s in zip(normalized.replicates, splits) if r.shape[0] > s]
    if not tails:
        return train_part, None
    val_data = TimeSeriesDataset(tails, normalized.variable_names)
    return train_part, sequences(val_data, length, warmup)


def train(dataset, navar_config, logger=None):
    """
    Fit a NAVAR model with mini-batch Adam.

    Statistics for normalization come from the training portion (the first
    1 − val_fraction of every replicate); validation MSE is measured on the
    remaining steps in normalized space.

    Args:
        dataset (TimeSeriesDataset): Raw (unnormalized) data, N >= 2.
        navar_config (NavarConfig): Hyperparameters.
        logger (RunLogger, optional): Progress output; silent if omitted.

    Returns:
        tuple: (NavarModel, TrainReport)
    """
    navar_config.validate()
    logger = logger or RunLogger(log_to_file=False, verbose=False)
    if dataset.N < 2:
        raise DimensionError(f"NAVAR needs at least 2 variables, got {dataset.N}")
    if min(dataset.lengths) <= navar_config.K and navar_config.backbone_kind is BackboneKind.MLP:
        raise DatasetTooShortError(
            f"shortest replicate has T={min(dataset.lengths)} steps, need more than K={navar_config.K}"
        )

    splits = [
        split_index(T, navar_config.val_fraction) if navar_config.val_fraction > 0 else T
        for T in dataset.lengths
    ]
    stats = normalize(dataset.head(splits)).stats
    normalized = apply_normalization(dataset, stats)

    model = build_model(navar_config, dataset.N, list(dataset.variable_names))
    model.stats = stats

    if model.kind is BackboneKind.MLP:
        train_part, val_part = _split_mlp(normalized, splits, navar_config.K)
        n_units = len(train_part)
        n_samples = n_units
    else:
        train_part, val_part = _split_lstm(normalized, splits, navar_config.K, navar_config.warmup_steps)
        n_units = len(train_part)
        n_samples = train_part.n_targets
    if n_units == 0:
        raise DatasetTooShortError(f"no training samples left with K={navar_config.K}")

    n_val = 0 if val_part is None else (len(val_part) if model.kind is BackboneKind.MLP else val_part.n_targets)
    logger.run_start(navar_config, dataset.N, n_samples, n_val)

    params = model.parameters()
    state = AdamState.for_parameters(params)
    rng = np.random.default_rng([navar_config.seed, SHUFFLE_STREAM])
    report = TrainReport()
    start_time = time.time()

    for epoch in range(1, navar_config.epochs + 1):
        order = rng.permutation(n_units)
        weighted_loss = 0.0
        for start in range(0, n_units, navar_config.batch_size):
            indices = order[start : start + navar_config.batch_size]
            if model.kind is BackboneKind.MLP:
                batch = (train_part.inputs[indices], train_part.targets[indices])
                weight = len(indices)
            else:
                batch = [train_part.chunks[c] for c in indices]
                weight = sum(chunk.shape[0] - train_part.warmup for chunk in batch)

            graph = Graph()
            loss = compute_loss(model, batch, graph)
            value = loss.item()
            if not np.isfinite(value) or value > config.DIVERGENCE_LIMIT:
                raise DivergenceError(epoch, value)
            graph.backward(loss)
            adam_step(
                params,
                [graph.gradient(p) for p in params],
                state,
                navar_config.learning_rate,
                navar_config.weight_decay,
            )
            weighted_loss += value * weight

        report.train_loss.append(weighted_loss / n_samples)
        if val_part is not None:
            report.val_mse.append(validation_mse(model, val_part))
        report.epochs = epoch

        if epoch % navar_config.log_every == 0 or epoch in (1, navar_config.epochs):
            logger.epoch(
                epoch,
                navar_config.epochs,
                report.train_loss[-1],
                report.val_mse[-1] if report.val_mse else None,
            )

    report.seconds = time.time() - start_time
    model.trained = True
    logger.run_end(report)
    return model, report


def grid_search(dataset, base_config, grid, logger=None):
    """
    Train every combination of ``grid`` values and rank by final validation MSE.

    Args:
        dataset (TimeSeriesDataset): Raw data.
        base_config (NavarConfig): Values for fields not in the grid; val_fraction must be > 0.
        grid (dict): Field name (or alias) to list of candidate values.
        logger (RunLogger, optional): Progress output.

    Returns:
        list[GridResult]: Best (lowest validation MSE) first; diverged runs last with inf.
    """
    if base_config.val_fraction <= 0:
        raise ConfigError("grid search selects on validation MSE; val_fraction must be > 0")
    logger = logger or RunLogger(log_to_file=False, verbose=False)
    keys = list(grid)
    results = []
    for values in itertools.product(*(grid[key] for key in keys)):
        overrides = dict(zip(keys, values))
        candidate = apply_overrides(base_config, overrides)
        try:
            _, report = train(dataset, candidate)
            score = report.val_mse[-1]
        except DivergenceError as e:
            logger.warning(f"grid point {overrides} diverged: {e}")
            score = float("inf")
        logger.print(f"grid {overrides}: val_mse={score:.6f}", Color.BRIGHT_WHITE)
        results.append(GridResult(overrides, candidate, score))
    results.sort(key=lambda r: r.val_mse)
    return results


def write_report_csv(report, navar_config, path):
    """Write the config as '# key=value' lines followed by per-epoch losses."""
    with open(path, "w") as f:
        for key, value in navar_config.to_dict().items():
            f.write(f"# {key}={value}\n")
        f.write(f"# seconds={report.seconds:.3f}\n")
    val = report.val_mse if report.val_mse else [float("nan")] * len(report.train_loss)
    frame = pd.DataFrame(
        {
            "epoch": np.arange(1, len(report.train_loss) + 1),
            "train_loss": report.train_loss,
            "val_mse": val,
        }
    )
    frame.to_csv(path, mode="a", index=False, float_format="%.17g")


def save_checkpoint(model, path):
    """
    Write a self-describing binary checkpoint:
    magic | u32 version | u64 header length | JSON header | float64 payload.
    """
    tensors = [("beta", model.beta)]
    if model.stats is not None:
        tensors += [("stats.mean", model.stats.mean), ("stats.std", model.stats.std)]
    for i, backbone in enumerate(model.backbones):
        tensors += [(f"backbone{i}.{name}", array) for name, array in backbone.named_parameters().items()]

    directory, offset = [], 0
    for name, array in tensors:
        directory.append({"name": name, "shape": list(array.shape), "offset": offset})
        offset += array.size * 8
    header = json.dumps(
        {
            "config": model.config.to_dict(),
            "N": model.N,
            "variable_names": model.variable_names,
            "trained": model.trained,
            "tensors": directory,
        }
    ).encode("utf-8")

    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<IQ", CHECKPOINT_VERSION, len(header)))
        f.write(header)
        for _, array in tensors:
            f.write(np.ascontiguousarray(array, dtype="<f8").tobytes())


def load_checkpoint(path, expected_kind=None):
    """
    Read a checkpoint written by ``save_checkpoint``.

    Args:
        path (str): Checkpoint file.
        expected_kind (BackboneKind, optional): Reject checkpoints of another backbone kind.

    Returns:
        NavarModel
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"model file not found: {path}")
    with open(path, "rb") as f:
        blob = f.read()

    prefix = len(CHECKPOINT_MAGIC) + struct.calcsize("<IQ")
    if len(blob) < prefix:
        raise CheckpointParseError("checkpoint truncated inside the preamble", len(blob))
    if blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointParseError("not a NAVAR checkpoint (bad magic)", 0)
    version, header_length = struct.unpack_from("<IQ", blob, len(CHECKPOINT_MAGIC))
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(f"checkpoint format version {version}, expected {CHECKPOINT_VERSION}")
    payload_start = prefix + header_length
    if len(blob) < payload_start:
        raise CheckpointParseError("checkpoint truncated inside the header", len(blob))
    try:
        header = json.loads(blob[prefix:payload_start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointParseError(f"unreadable header: {e}", prefix) from None

    try:
        navar_config = apply_overrides(NavarConfig(), header["config"])
        N = int(header["N"])
        directory = header["tensors"]
    except (KeyError, TypeError, ConfigError) as e:
        raise CheckpointVersionError(f"checkpoint header does not describe a NAVAR model: {e}") from None
    if expected_kind is not None and navar_config.backbone_kind is not BackboneKind(expected_kind):
        raise CheckpointVersionError(
            f"checkpoint holds a {navar_config.backbone_kind.value} model, "
            f"expected {BackboneKind(expected_kind).value}"
        )

    try:
        arrays = _read_tensors(blob, payload_start, directory)
        if arrays["beta"].shape != (N,):
            raise DimensionError(f"beta has shape {arrays['beta'].shape}, expected ({N},)")
        backbones = []
        for i in range(N):
            prefix_name = f"backbone{i}."
            named = {k[len(prefix_name) :]: v for k, v in arrays.items() if k.startswith(prefix_name)}
            if navar_config.backbone_kind is BackboneKind.MLP:
                backbones.append(MlpBackbone.from_named_parameters(named, navar_config.K, N))
            else:
                backbones.append(LstmBackbone.from_named_parameters(named, N))
        stats = None
        if "stats.mean" in arrays:
            stats = NormalizationStats(arrays["stats.mean"], arrays["stats.std"])
        return NavarModel(
            backbones,
            arrays["beta"],
            navar_config,
            stats=stats,
            variable_names=header.get("variable_names"),
            trained=bool(header.get("trained", False)),
        )
    except CheckpointParseError:
        raise
    except (KeyError, TypeError, ValueError, IndexError, DimensionError) as e:
        raise CheckpointParseError(f"damaged tensor directory: {type(e).__name__}: {e}", prefix) from None


def _read_tensors(blob, payload_start, directory):
    arrays = {}
    expected_end = payload_start
    for entry in directory:
        name, shape, offset = entry["name"], tuple(int(d) for d in entry["shape"]), int(entry["offset"])
        if offset < 0 or any(d < 0 for d in shape):
            raise ValueError(f"tensor '{name}' has a negative offset or dimension")
        start = payload_start + offset
        count = int(np.prod(shape, dtype=np.int64))
        end = start + 8 * count
        if end > len(blob):
            raise CheckpointParseError(f"tensor '{name}' truncated", len(blob))
        arrays[name] = np.frombuffer(blob, dtype="<f8", count=count, offset=start).reshape(shape).astype(np.float64)
        expected_end += 8 * count
    if expected_end != len(blob):
        raise CheckpointParseError("unexpected trailing bytes", expected_end)
    return arrays
