"""Per-assignment spanning-tree numerics.

For a complete assignment the pairwise weights form a dense rooted digraph
over n+1 nodes (node 0 is the dummy root).  The matrix-tree theorem turns
the sum over all rooted spanning trees into the determinant of the root
minor of the graph Laplacian, and per-edge posterior mass into entries of
its inverse, both O(n^3).

All determinant work happens in the log domain after column equilibration:
each column of the minor is divided by its diagonal entry and the scale
logs are added back, which keeps pivots near one even when raw weights are
~1/total-keys and the determinant would underflow a double.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .model import MISSING, LdfmModel, Variant

# Below this, a diagonal entry is treated as an unreachable node.
PIVOT_FLOOR = 1e-300
# Posterior clamp band: inside is silent roundoff, outside is a bug.
CLAMP_SILENT = 1e-9


class SingularLaplacianError(ArithmeticError):
    """No spanning tree carries positive weight (zero-probability assignment)."""


class NumericConsistencyError(ArithmeticError):
    """An edge posterior left [0, 1] by more than roundoff allows."""


@dataclass(frozen=True)
class AssignmentGraph:
    """Dense (n+1) x (n+1) edge-weight matrix for one complete assignment.

    Entry [i, j] is the weight of edge i -> j; row 0 belongs to the root.
    Column 0 and the diagonal are structurally unused and held at zero.
    """

    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] < 2:
            raise ValueError(f"weights must be square with n >= 1, got shape {w.shape}")
        w[:, 0] = 0.0
        np.fill_diagonal(w, 0.0)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.weights.shape[0] - 1


class LogPartition(NamedTuple):
    log_z: float
    sign: int


def assignment_matrices(model: LdfmModel, xs: np.ndarray) -> np.ndarray:
    """Stacked (B, n+1, n+1) edge-weight matrices for complete assignments ``xs``."""
    schema = model.schema
    xs = np.asarray(xs, dtype=np.int64)
    if xs.ndim == 1:
        xs = xs[None, :]
    b, n = xs.shape
    if n != schema.n:
        raise ValueError(f"assignments have {n} variables, schema has {schema.n}")
    if np.any(xs == MISSING):
        raise ValueError("assignment is incomplete")
    if np.any(xs < 0) or np.any(xs >= schema.cards[None, :]):
        raise ValueError("assignment value index out of range")
    rows = np.concatenate(
        [np.zeros((b, 1), dtype=np.int64), 1 + schema.offsets[None, :] + xs], axis=1
    )
    cols = schema.offsets[None, :] + xs
    w = np.zeros((b, n + 1, n + 1), dtype=np.float64)
    w[:, :, 1:] = model.dep[rows[:, :, None], cols[:, None, :]]
    return w


def assignment_graph(model: LdfmModel, x: np.ndarray) -> AssignmentGraph:
    """The per-assignment graph view of ``model`` at complete assignment ``x``."""
    return AssignmentGraph(assignment_matrices(model, np.asarray(x))[0])


def build_laplacian(graph: AssignmentGraph) -> np.ndarray:
    """Laplacian Q of the assignment graph: Q[j][j] is the incoming-weight
    sum of node j and Q[i][j] = -weight[i][j]; row/column 0 carries only
    zeros because the root has no incoming edges.  Only the 0-minor of Q is
    consumed downstream."""
    w = graph.weights
    if np.any(w < 0):
        raise ValueError("edge weights must be nonnegative")
    q = -w.copy()
    np.fill_diagonal(q, w.sum(axis=0))
    return q


def _root_minors(weights: np.ndarray) -> np.ndarray:
    """Root minors (rows/cols 0 removed) of the Laplacians of stacked graphs."""
    colsum = weights.sum(axis=-2)
    q = -weights.copy()
    idx = np.arange(weights.shape[-1])
    q[..., idx, idx] = colsum
    return q[..., 1:, 1:]


def _log_det_scaled(q0: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column-equilibrated log-determinants of stacked root minors.

    Returns (log_det, ok) where ok is False wherever the determinant is
    nonpositive, non-finite, or a diagonal entry vanishes.
    """
    idx = np.arange(q0.shape[-1])
    diag = q0[..., idx, idx]
    ok = np.all(diag > PIVOT_FLOOR, axis=-1)
    safe = np.where(diag > PIVOT_FLOOR, diag, 1.0)
    scaled = q0 / safe[..., None, :]
    sign, logdet = np.linalg.slogdet(scaled)
    with np.errstate(divide="ignore"):
        log_scale = np.where(ok, np.log(safe).sum(axis=-1), -np.inf)
    ok = ok & (sign > 0) & np.isfinite(logdet)
    return logdet + log_scale, ok


def log_partition_many(
    weights: np.ndarray, on_singular: str = "raise"
) -> np.ndarray:
    """Log total spanning-tree weight for stacked (B, n+1, n+1) graphs.

    ``on_singular`` is either "raise" (default) or "neginf", which maps
    singular items to -inf so callers can treat them as zero weight.
    """
    if np.any(weights < 0):
        raise ValueError("edge weights must be nonnegative")
    logz, ok = _log_det_scaled(_root_minors(weights))
    if np.all(ok):
        return logz
    if on_singular == "neginf":
        return np.where(ok, logz, -np.inf)
    bad = int(np.nonzero(~ok)[0][0])
    raise SingularLaplacianError(
        f"no positive-weight spanning tree (batch item {bad})"
    )


def log_partition(graph: AssignmentGraph) -> LogPartition:
    """Log of the total weight of all spanning trees rooted at node 0."""
    logz = log_partition_many(graph.weights[None])
    return LogPartition(float(logz[0]), 1)


def _posteriors_from_inverse(weights: np.ndarray, inv_q0: np.ndarray) -> np.ndarray:
    """Edge posteriors from stacked root-minor inverses.

    post[i][j] = w[i][j] * (inv[j-1, j-1] - inv[j-1, i-1]) for i, j >= 1 and
    post[0][j] = w[0][j] * inv[j-1, j-1]; already normalized by the total
    tree weight, so no explicit partition-function factor appears.
    """
    b, n1, _ = weights.shape
    idx = np.arange(n1 - 1)
    diag = inv_q0[..., idx, idx]
    post = np.zeros_like(weights)
    post[:, 0, 1:] = weights[:, 0, 1:] * diag
    trans = np.swapaxes(inv_q0, -1, -2)
    post[:, 1:, 1:] = weights[:, 1:, 1:] * (diag[:, None, :] - trans)
    post[:, :, 0] = 0.0
    di = np.arange(n1)
    post[:, di, di] = 0.0

    lo = post.min()
    hi = post.max()
    if lo < -CLAMP_SILENT or hi > 1.0 + CLAMP_SILENT:
        raise NumericConsistencyError(
            f"edge posterior outside [0, 1] beyond roundoff (min {lo:.3e}, max {hi:.3e})"
        )
    np.clip(post, 0.0, 1.0, out=post)
    return post


def partition_and_posteriors_many(weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Log partition values and edge posteriors for stacked graphs.

    Raises SingularLaplacianError (with the offending batch index) if any
    item has no positive-weight spanning tree.
    """
    if np.any(weights < 0):
        raise ValueError("edge weights must be nonnegative")
    q0 = _root_minors(weights)
    logz, ok = _log_det_scaled(q0)
    if not np.all(ok):
        bad = int(np.nonzero(~ok)[0][0])
        raise SingularLaplacianError(
            f"no positive-weight spanning tree (batch item {bad})"
        )
    idx = np.arange(q0.shape[-1])
    diag = q0[..., idx, idx]
    inv_scaled = np.linalg.inv(q0 / diag[..., None, :])
    inv_q0 = inv_scaled / diag[..., :, None]
    return logz, _posteriors_from_inverse(weights, inv_q0)


def edge_posteriors(graph: AssignmentGraph) -> np.ndarray:
    """Probability that each edge appears in the latent spanning tree.

    Returns an (n+1) x (n+1) array; every column j >= 1 sums to one since
    each non-root node has exactly one parent in every tree.
    """
    _, post = partition_and_posteriors_many(graph.weights[None])
    return post[0]


def stop_log_weight(model: LdfmModel, xs: np.ndarray) -> np.ndarray:
    """Sum of log stop weights over the root and every assigned node, per row."""
    xs = np.asarray(xs, dtype=np.int64)
    if xs.ndim == 1:
        xs = xs[None, :]
    rows = np.concatenate(
        [
            np.zeros((xs.shape[0], 1), dtype=np.int64),
            1 + model.schema.offsets[None, :] + xs,
        ],
        axis=1,
    )
    with np.errstate(divide="ignore"):
        log_stop = np.log(model.stop)
    return log_stop[rows].sum(axis=1)


def unnormalized_log_joint_many(
    model: LdfmModel, xs: np.ndarray, on_singular: str = "raise"
) -> np.ndarray:
    """Log unnormalized joint weight of complete assignments.

    Plain variant: the log partition value.  Stop-augmented: adds the log
    stop weight of the root and of every assigned node.
    """
    weights = assignment_matrices(model, xs)
    logz = log_partition_many(weights, on_singular=on_singular)
    if model.variant is Variant.STOP_AUGMENTED:
        return logz + stop_log_weight(model, xs)
    return logz


def unnormalized_log_joint(model: LdfmModel, x: np.ndarray) -> float:
    return float(unnormalized_log_joint_many(model, np.asarray(x))[0])
