"""
Time-series datasets: synthetic generators with known causal graphs, CSV
ingestion, normalization and lag-window / sequence construction.

Variables are indexed from 0; an adjacency entry (i, j) means variable i
Granger-causes variable j.
"""

import math
import os
import re
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from errors import (
    ConfigError,
    ConstantVariableError,
    CsvParseError,
    DatasetTooShortError,
    DimensionError,
    GenerationError,
)

DEFAULT_T = 4000
BURN_IN = 100
MIN_T = 10
STATIONARY_RADIUS = 0.95
RESCALED_RADIUS = 0.9
MAX_GENERATION_DRAWS = 100
CSV_FLOAT_FORMAT = "%.17g"


@dataclass
class GroundTruthGraph:
    """Boolean N×N adjacency with optional per-link lag annotations."""

    adjacency: np.ndarray
    lags: dict = field(default_factory=dict)

    def __post_init__(self):
        self.adjacency = np.asarray(self.adjacency, dtype=bool)
        if self.adjacency.ndim != 2 or self.adjacency.shape[0] != self.adjacency.shape[1]:
            raise DimensionError(f"truth must be a square matrix, got shape {self.adjacency.shape}")

    @property
    def N(self):
        return self.adjacency.shape[0]

    def links(self, include_self=True):
        """True links as sorted (source, target) pairs."""
        return [
            (int(i), int(j))
            for i, j in zip(*np.nonzero(self.adjacency))
            if include_self or i != j
        ]


@dataclass
class NormalizationStats:
    mean: np.ndarray
    std: np.ndarray


@dataclass
class TimeSeriesDataset:
    """One or more T_r × N replicate series of the same system."""

    replicates: list
    variable_names: list = None
    truth: GroundTruthGraph = None
    stats: NormalizationStats = None

    def __post_init__(self):
        self.replicates = [np.asarray(r, dtype=np.float64) for r in self.replicates]
        if not self.replicates:
            raise DimensionError("a dataset needs at least one replicate")
        n_vars = {r.shape[1] if r.ndim == 2 else -1 for r in self.replicates}
        if len(n_vars) != 1 or -1 in n_vars:
            raise DimensionError("all replicates must be 2-D with the same number of variables")
        if self.variable_names is None:
            self.variable_names = [f"x{i}" for i in range(self.N)]
        if len(self.variable_names) != self.N:
            raise DimensionError(
                f"{len(self.variable_names)} variable names for {self.N} variables"
            )
        if self.truth is not None and self.truth.N != self.N:
            raise DimensionError(f"truth has N={self.truth.N}, dataset has N={self.N}")

    @property
    def N(self):
        return self.replicates[0].shape[1]

    @property
    def lengths(self):
        return [r.shape[0] for r in self.replicates]

    def head(self, stops):
        """Rows [0, stop) of every replicate."""
        return replace(self, replicates=[r[:stop] for r, stop in zip(self.replicates, stops)])

    def tail(self, starts):
        """Rows [start, T_r) of every replicate."""
        return replace(self, replicates=[r[start:] for r, start in zip(self.replicates, starts)])


@dataclass
class WindowedDataset:
    """Lag windows of depth K for every variable plus next-step targets."""

    inputs: np.ndarray  # (S, N, K), oldest lag first
    targets: np.ndarray  # (S, N)
    replicate: np.ndarray  # (S,)
    target_index: np.ndarray  # (S,), 0-based row of the target within its replicate
    K: int

    def __len__(self):
        return self.targets.shape[0]

    def subset(self, indices):
        return WindowedDataset(
            self.inputs[indices],
            self.targets[indices],
            self.replicate[indices],
            self.target_index[indices],
            self.K,
        )


@dataclass
class SequenceDataset:
    """Overlapping chunks of each replicate for recurrent backbones."""

    chunks: list  # (L_c, N) arrays
    replicate: list
    start: list  # 0-based row where each chunk starts
    length: int
    warmup: int

    def __len__(self):
        return len(self.chunks)

    def target_indices(self, c):
        """0-based rows predicted by chunk c."""
        return np.arange(self.start[c] + self.warmup, self.start[c] + self.chunks[c].shape[0])

    @property
    def n_targets(self):
        return sum(chunk.shape[0] - self.warmup for chunk in self.chunks)


def split_index(T, val_fraction):
    """Number of leading rows used for training under a temporal split."""
    return max(1, int(math.floor(T * (1.0 - val_fraction) + 1e-9)))


def _check_length(T):
    if T < MIN_T:
        raise ConfigError(f"generators need T >= {MIN_T}, got {T}")


def generate_toy3(T=DEFAULT_T, seed=0, noise_scale=1.0, burn_in=BURN_IN):
    """
    Three-variable nonlinear system with lag-1 links:

        X1_t = cos(X2_{t-1}) + tanh(X3_{t-1}) + e1
        X2_t = 0.35 X2_{t-1} + X3_{t-1} + e2
        X3_t = |0.5 X1_{t-1}| + sin(2 X2_{t-1}) + e3

    Args:
        T (int): Number of returned time steps.
        seed (int): Random seed.
        noise_scale (float): Standard deviation of the Gaussian noise.
        burn_in (int): Steps simulated and discarded before the returned window.

    Returns:
        TimeSeriesDataset: Data with its ground-truth graph.
    """
    _check_length(T)
    rng = np.random.default_rng(seed)
    total = burn_in + T
    x = np.zeros((total + 1, 3))
    x[0] = noise_scale * rng.standard_normal(3)
    noise = noise_scale * rng.standard_normal((total, 3))

    for t in range(1, total + 1):
        x1, x2, x3 = x[t - 1]
        x[t, 0] = np.cos(x2) + np.tanh(x3)
        x[t, 1] = 0.35 * x2 + x3
        x[t, 2] = np.abs(0.5 * x1) + np.sin(2.0 * x2)
        x[t] += noise[t - 1]

    links = [(1, 0), (2, 0), (1, 1), (2, 1), (0, 2), (1, 2)]
    adjacency = np.zeros((3, 3), dtype=bool)
    for i, j in links:
        adjacency[i, j] = True
    truth = GroundTruthGraph(adjacency, {link: (1,) for link in links})
    return TimeSeriesDataset([x[1 + burn_in :]], ["X1", "X2", "X3"], truth)


def generate_lag_scm(T=DEFAULT_T, seed=0, noise_scale=0.1, burn_in=BURN_IN):
    """
    Two-variable system with interactions spread across several lags:

        X_t = cos(Y_{t-3} + Y_{t-4} + Y_{t-5}) + e1
        Y_t = X_{t-2} * X_{t-4} + e2

    Args:
        T (int): Number of returned time steps.
        seed (int): Random seed.
        noise_scale (float): Standard deviation of the Gaussian noise.
        burn_in (int): Steps simulated and discarded before the returned window.

    Returns:
        TimeSeriesDataset: Data with its ground-truth graph and lag sets.
    """
    _check_length(T)
    max_lag = 5
    rng = np.random.default_rng(seed)
    total = burn_in + T
    x = np.zeros((max_lag + total, 2))
    x[:max_lag] = noise_scale * rng.standard_normal((max_lag, 2))
    noise = noise_scale * rng.standard_normal((total, 2))

    for t in range(max_lag, max_lag + total):
        x[t, 0] = np.cos(x[t - 3, 1] + x[t - 4, 1] + x[t - 5, 1])
        x[t, 1] = x[t - 2, 0] * x[t - 4, 0]
        x[t] += noise[t - max_lag]

    adjacency = np.array([[False, True], [True, False]])
    truth = GroundTruthGraph(adjacency, {(1, 0): (3, 4, 5), (0, 1): (2, 4)})
    return TimeSeriesDataset([x[max_lag + burn_in :]], ["X", "Y"], truth)


def companion_radius(coefficients):
    """
    Spectral radius of the VAR companion matrix.

    Args:
        coefficients (np.ndarray): K×N×N array, entry [k-1, i, j] is the weight
            of X^(i)_{t-k} in X^(j)_t.
    """
    K, N, _ = coefficients.shape
    companion = np.zeros((K * N, K * N))
    companion[:N, :] = np.concatenate([coefficients[k].T for k in range(K)], axis=1)
    companion[N:, : (K - 1) * N] = np.eye((K - 1) * N)
    return float(np.max(np.abs(np.linalg.eigvals(companion))))


def generate_linear_var(N, T, K, density, coeff_scale=0.5, seed=0, noise_scale=1.0, burn_in=BURN_IN):
    """
    Random sparse stationary VAR(K) process with unit Gaussian noise.

    Coefficients are drawn N(0, coeff_scale) on a Bernoulli(density) support;
    if the companion spectral radius reaches 0.95, lag k is scaled by s**k,
    which scales every companion eigenvalue by s.

    Returns:
        TimeSeriesDataset: Data whose truth marks (i, j) iff some lag weight is nonzero.
    """
    _check_length(T)
    if not 0 < density <= 1:
        raise ConfigError(f"density must be in (0, 1], got {density}")
    if N < 1 or K < 1:
        raise ConfigError(f"N and K must be >= 1, got N={N}, K={K}")
    rng = np.random.default_rng(seed)

    for _ in range(MAX_GENERATION_DRAWS):
        support = rng.random((K, N, N)) < density
        coefficients = rng.normal(0.0, coeff_scale, size=(K, N, N)) * support
        radius = companion_radius(coefficients)
        if not np.isfinite(radius):
            continue
        if radius >= STATIONARY_RADIUS:
            scale = RESCALED_RADIUS / radius
            coefficients *= scale ** np.arange(1, K + 1)[:, None, None]
            radius = companion_radius(coefficients)
        if radius < STATIONARY_RADIUS:
            break
    else:
        raise GenerationError(f"no stationary VAR found after {MAX_GENERATION_DRAWS} draws")

    total = burn_in + T
    x = np.zeros((K + total, N))
    x[:K] = noise_scale * rng.standard_normal((K, N))
    noise = noise_scale * rng.standard_normal((total, N))
    for t in range(K, K + total):
        x[t] = noise[t - K]
        for k in range(1, K + 1):
            x[t] += x[t - k] @ coefficients[k - 1]

    nonzero = coefficients != 0
    lags = {
        (int(i), int(j)): tuple(int(k) + 1 for k in np.nonzero(nonzero[:, i, j])[0])
        for i, j in zip(*np.nonzero(nonzero.any(axis=0)))
    }
    truth = GroundTruthGraph(nonzero.any(axis=0), lags)
    return TimeSeriesDataset([x[K + burn_in :]], [f"x{i}" for i in range(N)], truth)


SCM_NAMES = ("toy3", "lag2", "linear-var")


def generate(scm, T=DEFAULT_T, seed=0, N=5, K=2, density=0.3):
    """
    Generate data from one of the named systems.

    Args:
        scm (str): One of SCM_NAMES.
        T (int): Number of time steps.
        seed (int): Random seed.
        N, K, density: Size, order and link density (linear-var only).

    Returns:
        TimeSeriesDataset
    """
    if scm == "toy3":
        return generate_toy3(T, seed)
    if scm == "lag2":
        return generate_lag_scm(T, seed)
    if scm == "linear-var":
        return generate_linear_var(N, T, K, density, seed=seed)
    raise ConfigError(f"unknown system '{scm}' (available: {', '.join(SCM_NAMES)})")


def _read_table(path, has_header, delimiter):
    """
    Read a delimited file as strings. Blank lines are dropped; the index of
    every remaining row keeps its position in the file so errors can name
    the line. Rows with missing fields raise CsvParseError.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"data file not found: {path}")
    try:
        frame = pd.read_csv(
            path,
            sep=delimiter,
            header=0 if has_header else None,
            dtype=str,
            keep_default_na=False,
            na_values=[""],
            skip_blank_lines=False,
            skipinitialspace=True,
        )
    except pd.errors.EmptyDataError:
        raise CsvParseError(f"{path} is empty", 1) from None
    except pd.errors.ParserError as exc:
        match = re.search(r"line (\d+)", str(exc))
        line = int(match.group(1)) if match else 0
        raise CsvParseError(f"ragged row in {path}: {exc}", line) from None

    header_lines = 1 if has_header else 0
    frame = frame.dropna(how="all")
    ragged = frame.isna().any(axis=1).to_numpy()
    if ragged.any():
        row = frame.index[int(np.argmax(ragged))]
        raise CsvParseError(
            f"ragged row in {path}: expected {frame.shape[1]} fields",
            int(row) + 1 + header_lines,
        )
    return frame


def _numeric_frame(frame, path, header_lines):
    columns = []
    for col_number, column in enumerate(frame.columns, start=1):
        cells = frame[column].str.strip()
        try:
            values = cells.to_numpy().astype(np.float64)
        except ValueError:
            values = pd.to_numeric(cells, errors="coerce").to_numpy(dtype=np.float64)
        bad = ~np.isfinite(values)
        if bad.any():
            row = int(np.argmax(bad))
            raise CsvParseError(
                f"non-numeric cell {frame[column].iloc[row]!r} in {path}",
                int(frame.index[row]) + 1 + header_lines,
                col_number,
            )
        columns.append(values)
    return np.column_stack(columns) if columns else np.zeros((len(frame), 0))


def load_csv(path, has_header=True, delimiter=",", replicate_column=None):
    """
    Load one row per time step, one column per variable.

    Args:
        path (str or list[str]): A file, or one file per replicate.
        has_header (bool): Whether the first row holds variable names.
        delimiter (str): Field separator.
        replicate_column (str, optional): Column whose value identifies the
            replicate of each row (rows of one replicate stay in file order).

    Returns:
        TimeSeriesDataset
    """
    if isinstance(path, (list, tuple)):
        parts = [load_csv(p, has_header, delimiter, replicate_column) for p in path]
        names = parts[0].variable_names
        for p, part in zip(path, parts):
            if part.variable_names != names:
                raise DimensionError(f"{p} has variables {part.variable_names}, expected {names}")
        return TimeSeriesDataset([r for part in parts for r in part.replicates], names)

    frame = _read_table(path, has_header, delimiter)
    header_lines = 1 if has_header else 0
    names = [str(c).strip() for c in frame.columns] if has_header else [f"x{i}" for i in range(frame.shape[1])]

    if replicate_column is None:
        values = _numeric_frame(frame, path, header_lines)
        return TimeSeriesDataset([values], names)

    if replicate_column not in names:
        raise CsvParseError(f"replicate column '{replicate_column}' not found in {path}", 1)
    frame.columns = names
    ids = frame[replicate_column].str.strip()
    values = _numeric_frame(frame.drop(columns=[replicate_column]), path, header_lines)
    replicates = [values[(ids == rid).to_numpy()] for rid in pd.unique(ids)]
    return TimeSeriesDataset(replicates, [n for n in names if n != replicate_column])


def save_csv(dataset, path, delimiter=",", replicate_column="replicate"):
    """Write a dataset at 17 significant digits (replicate column only if R > 1)."""
    frames = []
    for r, values in enumerate(dataset.replicates):
        frame = pd.DataFrame(values, columns=dataset.variable_names)
        if len(dataset.replicates) > 1:
            frame.insert(0, replicate_column, r)
        frames.append(frame)
    pd.concat(frames, ignore_index=True).to_csv(
        path, sep=delimiter, index=False, float_format=CSV_FLOAT_FORMAT
    )


def load_truth_csv(path):
    """
    Load an N×N 0/1 matrix; a non-numeric first row is taken as a header.

    Returns:
        GroundTruthGraph
    """
    frame = _read_table(path, has_header=False, delimiter=",")
    first = pd.to_numeric(frame.iloc[0].str.strip(), errors="coerce") if len(frame) else None
    if first is not None and first.isna().any():
        frame = frame.iloc[1:]
    matrix = _numeric_frame(frame, path, 0)
    if matrix.shape[0] != matrix.shape[1]:
        raise CsvParseError(f"truth matrix in {path} is {matrix.shape[0]}×{matrix.shape[1]}", 1)
    if not np.isin(matrix, (0.0, 1.0)).all():
        raise CsvParseError(f"truth matrix in {path} must contain only 0 and 1", int(frame.index[0]) + 1)
    return GroundTruthGraph(matrix.astype(bool))


def save_truth_csv(truth, path, names=None):
    frame = pd.DataFrame(truth.adjacency.astype(int), columns=names)
    frame.to_csv(path, index=False, header=names is not None)


def normalize(dataset, fit_fraction=1.0):
    """
    Standardize every variable with mean/std fitted on the leading
    ``fit_fraction`` of each replicate, applied to all rows.

    Returns:
        TimeSeriesDataset: Normalized copy carrying its NormalizationStats.
    """
    if not 0 < fit_fraction <= 1:
        raise ConfigError(f"fit_fraction must be in (0, 1], got {fit_fraction}")
    fit_rows = np.concatenate(
        [r[: split_index(r.shape[0], 1.0 - fit_fraction)] for r in dataset.replicates]
    )
    mean = fit_rows.mean(axis=0)
    std = fit_rows.std(axis=0)
    for j, s in enumerate(std):
        if not s > 0:
            raise ConstantVariableError(dataset.variable_names[j])
    return apply_normalization(dataset, NormalizationStats(mean, std))


def apply_normalization(dataset, stats):
    """Standardize with previously fitted statistics."""
    if stats.mean.shape != (dataset.N,):
        raise DimensionError(f"stats cover {stats.mean.shape[0]} variables, dataset has {dataset.N}")
    return replace(
        dataset,
        replicates=[(r - stats.mean) / stats.std for r in dataset.replicates],
        stats=stats,
    )


def window(dataset, K):
    """
    All lag windows of depth K; windows never cross replicate boundaries.

    Returns:
        WindowedDataset: Σ_r (T_r − K) samples.
    """
    inputs, targets, replicate, target_index = [], [], [], []
    for r, values in enumerate(dataset.replicates):
        T = values.shape[0]
        if T <= K:
            raise DatasetTooShortError(f"replicate {r} has T={T} steps, need more than K={K}")
        inputs.append(sliding_window_view(values, K, axis=0)[:-1])
        targets.append(values[K:])
        replicate.append(np.full(T - K, r))
        target_index.append(np.arange(K, T))
    return WindowedDataset(
        np.concatenate(inputs),
        np.concatenate(targets),
        np.concatenate(replicate),
        np.concatenate(target_index),
        K,
    )


def sequences(dataset, length, warmup=1):
    """
    Cut every replicate into chunks of ``length`` rows overlapping by
    ``warmup`` rows, so each row after the first ``warmup`` is predicted
    exactly once.

    Returns:
        SequenceDataset
    """
    if length <= warmup:
        raise ConfigError(f"sequence length {length} must exceed the warm-up of {warmup}")
    chunks, replicate, start = [], [], []
    for r, values in enumerate(dataset.replicates):
        T = values.shape[0]
        if T <= warmup:
            raise DatasetTooShortError(f"replicate {r} has T={T} steps, need more than {warmup}")
        for s in range(0, T - warmup, length - warmup):
            chunks.append(values[s : min(s + length, T)])
            replicate.append(r)
            start.append(s)
    return SequenceDataset(chunks, replicate, start, length, warmup)
