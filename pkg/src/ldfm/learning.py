"""EM training from complete-data samples.

The structure of each sample is latent, so the E-step computes per-sample
edge posteriors (already normalized by the per-sample tree-weight total)
and accumulates them per <source key, target key> cell.  The M-step is the
closed-form ratio of those counts, optionally smoothed.  The objective is
the sum of per-sample log joint weights, which is the model log-likelihood
up to an assignment-independent constant.
"""

from __future__ import annotations

import enum
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from . import matrix_tree
from .model import (
    MISSING,
    WEIGHT_FLOOR,
    LdfmModel,
    Variant,
    VariableSchema,
    make_uniform_model,
)

logger = logging.getLogger(__name__)

# Fixed E-step chunk size: partial sums do not depend on the worker count,
# so results are reproducible for any --workers value.
CHUNK = 256


class Smoothing(enum.Enum):
    NONE = "none"
    ADDITIVE = "additive"
    SPARSITY = "sparsity"


@dataclass(frozen=True)
class TrainConfig:
    """EM knobs; defaults keep Laplacians nonsingular on held-out data."""

    max_iters: int = 100
    rel_tol: float = 1e-5
    smoothing: Smoothing = Smoothing.ADDITIVE
    eps: float = 0.1
    kappa: float = 0.5
    variant: Variant = Variant.PLAIN
    seed: int = 0  # reserved for restart strategies; EM itself is deterministic

    def __post_init__(self) -> None:
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.eps < 0 or self.kappa < 0:
            raise ValueError("smoothing hyperparameters must be nonnegative")


@dataclass
class SufficientStats:
    """Accumulated E-step statistics.

    ``edge[r, c]`` is the summed posterior mass of source row r generating
    target key c over all samples where both keys' values occur; ``occur[r]``
    counts samples containing the key (the root occurs in every sample).
    """

    edge: np.ndarray
    occur: np.ndarray
    sample_count: int = 0
    loglik: float = 0.0

    @classmethod
    def zeros(cls, schema: VariableSchema) -> "SufficientStats":
        k = schema.num_keys
        return cls(np.zeros((1 + k, k)), np.zeros(1 + k))

    def __add__(self, other: "SufficientStats") -> "SufficientStats":
        return SufficientStats(
            self.edge + other.edge,
            self.occur + other.occur,
            self.sample_count + other.sample_count,
            self.loglik + other.loglik,
        )


class TraceEntry(NamedTuple):
    """Per-iteration objective terms: data log-likelihood and log-prior."""

    loglik: float
    prior: float

    @property
    def objective(self) -> float:
        return self.loglik + self.prior


def _as_sample_matrix(data, schema: VariableSchema) -> np.ndarray:
    xs = np.asarray(data, dtype=np.int64)
    if xs.ndim == 1:
        xs = xs[None, :]
    if xs.ndim != 2 or xs.shape[1] != schema.n:
        raise ValueError(f"data must be (B, {schema.n}) value indices, got {xs.shape}")
    if xs.shape[0] == 0:
        raise ValueError("data must contain at least one sample")
    if np.any(xs == MISSING):
        raise ValueError("training samples must be complete")
    if np.any(xs < 0) or np.any(xs >= schema.cards[None, :]):
        raise ValueError("sample value index out of schema range")
    return xs


def _chunk_stats(model: LdfmModel, xs: np.ndarray, start: int) -> SufficientStats:
    schema = model.schema
    b, n = xs.shape
    k = schema.num_keys
    weights = matrix_tree.assignment_matrices(model, xs)
    try:
        logz, post = matrix_tree.partition_and_posteriors_many(weights)
    except matrix_tree.SingularLaplacianError as exc:
        # recompute per sample to report the global index
        ok = np.isfinite(matrix_tree.log_partition_many(weights, on_singular="neginf"))
        bad = int(np.nonzero(~ok)[0][0]) + start
        raise matrix_tree.SingularLaplacianError(
            f"sample {bad} has no positive-weight spanning tree"
        ) from exc

    rows = np.concatenate(
        [np.zeros((b, 1), dtype=np.int64), 1 + schema.offsets[None, :] + xs], axis=1
    )
    cols = schema.offsets[None, :] + xs
    flat = (rows[:, :, None] * k + cols[:, None, :]).ravel()
    edge = np.bincount(flat, weights=post[:, :, 1:].ravel(), minlength=(1 + k) * k)
    occur = np.bincount(rows.ravel(), minlength=1 + k).astype(np.float64)
    ll = float(logz.sum())
    if model.variant is Variant.STOP_AUGMENTED:
        ll += float(matrix_tree.stop_log_weight(model, xs).sum())
    return SufficientStats(edge.reshape(1 + k, k), occur, b, ll)


def e_step(model: LdfmModel, data, workers: int | None = None) -> SufficientStats:
    """Edge-posterior statistics and log-likelihood over complete samples.

    The reduction runs over fixed-size chunks in sample order, so the result
    is identical for any worker count.
    """
    xs = _as_sample_matrix(data, model.schema)
    starts = range(0, xs.shape[0], CHUNK)
    jobs = [(xs[s : s + CHUNK], s) for s in starts]
    if workers is not None and workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: _chunk_stats(model, *job), jobs))
    else:
        parts = [_chunk_stats(model, chunk, s) for chunk, s in jobs]
    total = parts[0]
    for part in parts[1:]:
        total = total + part
    return total


def _uniform_rows(schema: VariableSchema, variant: Variant) -> tuple[np.ndarray, np.ndarray]:
    uniform = make_uniform_model(schema, variant)
    stop = uniform.stop if variant is Variant.STOP_AUGMENTED else None
    return uniform.dep, stop


def m_step(stats: SufficientStats, config: TrainConfig, schema: VariableSchema) -> LdfmModel:
    """Closed-form weight update from accumulated statistics.

    Plain: each source row is its outgoing posterior mass renormalized.
    Stop-augmented: the stop outcome competes with the outgoing mass, with
    an expected stop count of one per sample in which the key occurs.
    Unobserved source keys fall back to the uniform row; all weights are
    floored at a tiny positive value and renormalized so later Laplacians
    stay nonsingular.
    """
    if stats.sample_count < 1:
        raise ValueError("stats must cover at least one sample")
    mask = schema.source_mask
    counts = schema.target_counts
    variant = config.variant

    edge = np.where(mask, stats.edge, 0.0)
    occur = stats.occur.copy()
    if config.smoothing is Smoothing.ADDITIVE and config.eps > 0:
        edge = edge + np.where(mask, config.eps, 0.0)
        occur = occur + config.eps
    elif config.smoothing is Smoothing.SPARSITY and config.kappa > 0:
        edge = np.where(mask, np.maximum(edge - config.kappa, WEIGHT_FLOOR), 0.0)
        occur = np.maximum(occur - config.kappa, WEIGHT_FLOOR)

    uniform_dep, uniform_stop = _uniform_rows(schema, variant)
    observed = stats.occur > 0

    if variant is Variant.PLAIN:
        row_mass = edge.sum(axis=1)
        usable = observed & (row_mass > 0) & (counts > 0)
        denom = np.where(usable, row_mass, 1.0)
        dep = np.where(usable[:, None], edge / denom[:, None], uniform_dep)
        dep = np.where(mask, np.maximum(dep, WEIGHT_FLOOR), 0.0)
        totals = dep.sum(axis=1)
        dep = dep / np.where(totals > 0, totals, 1.0)[:, None]
        return LdfmModel(schema, variant, dep)

    row_mass = edge.sum(axis=1)
    usable = observed & (occur + row_mass > 0)
    denom = np.where(usable, occur + row_mass, 1.0)
    dep = np.where(usable[:, None], edge / denom[:, None], uniform_dep)
    stop = np.where(usable, occur / denom, uniform_stop)
    dep = np.where(mask, np.maximum(dep, WEIGHT_FLOOR), 0.0)
    stop = np.maximum(stop, WEIGHT_FLOOR)
    total = dep.sum(axis=1) + stop
    return LdfmModel(schema, variant, dep / total[:, None], stop / total)


def _log_prior(model: LdfmModel, config: TrainConfig) -> float:
    """Log-prior term of the MAP objective (zero when smoothing is NONE)."""
    if config.smoothing is Smoothing.NONE:
        return 0.0
    mask = model.schema.source_mask
    with np.errstate(divide="ignore"):
        total = float(np.log(model.dep[mask]).sum())
        if model.variant is Variant.STOP_AUGMENTED:
            total += float(np.log(model.stop).sum())
    if config.smoothing is Smoothing.ADDITIVE:
        return config.eps * total
    return -config.kappa * total


def data_log_likelihood(model: LdfmModel, data, workers: int | None = None) -> float:
    """Sum over samples of the log unnormalized joint weight."""
    xs = _as_sample_matrix(data, model.schema)
    chunks = [xs[s : s + CHUNK] for s in range(0, xs.shape[0], CHUNK)]

    def one(chunk: np.ndarray) -> float:
        return float(matrix_tree.unnormalized_log_joint_many(model, chunk).sum())

    if workers is not None and workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return sum(pool.map(one, chunks))
    return sum(one(chunk) for chunk in chunks)


def train_em(
    data,
    schema: VariableSchema,
    config: TrainConfig,
    workers: int | None = None,
    progress: Callable[[int, float, float], None] | None = None,
) -> tuple[LdfmModel, list[TraceEntry]]:
    """Run EM from the uniform model; returns the model and objective trace.

    The trace holds one entry per evaluated model (initial model included),
    recording the data log-likelihood and the log-prior term separately;
    with no smoothing the log-likelihood itself is monotone.
    """
    xs = _as_sample_matrix(data, schema)
    model = make_uniform_model(schema, config.variant)
    trace: list[TraceEntry] = []

    def record(loglik: float) -> TraceEntry:
        entry = TraceEntry(loglik, _log_prior(model, config))
        trace.append(entry)
        k = len(trace) - 1
        dll = 0.0 if k == 0 else entry.loglik - trace[k - 1].loglik
        logger.info("iter=%d ll=%.6f dll=%.6f", k, entry.loglik, dll)
        if progress is not None:
            progress(k, entry.loglik, dll)
        return entry

    converged = False
    for _ in range(config.max_iters):
        stats = e_step(model, xs, workers=workers)
        entry = record(stats.loglik)
        if len(trace) >= 2:
            prev = trace[-2].objective
            gain = entry.objective - prev
            if gain < config.rel_tol * max(abs(prev), 1e-12):
                converged = True
                break
        model = m_step(stats, config, schema)
    if not converged:
        record(data_log_likelihood(model, xs, workers=workers))
    return model, trace
