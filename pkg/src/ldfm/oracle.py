"""Brute-force ground truth for small instances.

Everything here enumerates: spanning trees by scanning all parent vectors,
joint weights by summing over trees, normalizers and conditionals by
summing over complete assignments.  Intended as a test fixture, not a
production path; hard caps keep the blowup honest.
"""

from __future__ import annotations

import itertools
from functools import lru_cache
from typing import Iterator

import numpy as np

from .matrix_tree import AssignmentGraph, LogPartition, assignment_graph
from .model import MISSING, LdfmModel, Variant

MAX_TREE_N = 8
MAX_STATE_SPACE = 4096


def _logsumexp(values: np.ndarray) -> float:
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return -np.inf
    m = values.max()
    if not np.isfinite(m):
        return float(m)
    return float(np.log(np.exp(values - m).sum()) + m)


def _reaches_root(parent: tuple[int, ...]) -> bool:
    n = len(parent)
    state = [0] * (n + 1)  # 0 unknown, 1 on current path, 2 known good
    state[0] = 2
    for start in range(1, n + 1):
        path = []
        j = start
        while state[j] == 0:
            path.append(j)
            state[j] = 1
            j = parent[j - 1]
        if state[j] == 1:
            return False
        for p in path:
            state[p] = 2
    return True


def enumerate_rooted_trees(n: int) -> Iterator[tuple[int, ...]]:
    """Yield every parent vector encoding a spanning tree rooted at node 0.

    parent[j-1] is the parent of node j.  Scans all n^n candidate vectors
    with a path-following acyclicity check; the valid count for the
    complete graph is (n+1)^(n-1).
    """
    if not 1 <= n <= MAX_TREE_N:
        raise ValueError(f"n must be in [1, {MAX_TREE_N}], got {n}")
    choices = [[p for p in range(n + 1) if p != j] for j in range(1, n + 1)]
    for cand in itertools.product(*choices):
        if _reaches_root(cand):
            yield cand


@lru_cache(maxsize=None)
def _tree_table(n: int) -> np.ndarray:
    table = np.array(list(enumerate_rooted_trees(n)), dtype=np.int64)
    table.setflags(write=False)
    return table


def _tree_log_weights(graph: AssignmentGraph) -> tuple[np.ndarray, np.ndarray]:
    trees = _tree_table(graph.n)
    with np.errstate(divide="ignore"):
        logw = np.log(graph.weights)
    cols = np.arange(1, graph.n + 1)
    return trees, logw[trees, cols].sum(axis=1)


def brute_log_partition(graph: AssignmentGraph) -> LogPartition:
    """Log of the sum over all rooted spanning trees of the edge-weight product."""
    _, tree_logw = _tree_log_weights(graph)
    total = _logsumexp(tree_logw)
    if not np.isfinite(total):
        raise ValueError("all spanning trees have zero weight")
    return LogPartition(total, 1)


def brute_edge_posteriors(graph: AssignmentGraph) -> np.ndarray:
    """Edge posteriors by direct summation over enumerated trees."""
    trees, tree_logw = _tree_log_weights(graph)
    log_z = _logsumexp(tree_logw)
    if not np.isfinite(log_z):
        raise ValueError("all spanning trees have zero weight")
    n = graph.n
    post = np.zeros((n + 1, n + 1))
    for j in range(1, n + 1):
        parents = trees[:, j - 1]
        for i in range(0, n + 1):
            if i == j:
                continue
            sel = tree_logw[parents == i]
            if sel.size:
                post[i, j] = np.exp(_logsumexp(sel) - log_z)
    return post


def _log_joint_or_neginf(model: LdfmModel, x: np.ndarray) -> float:
    graph = assignment_graph(model, x)
    _, tree_logw = _tree_log_weights(graph)
    total = _logsumexp(tree_logw)
    if model.variant is Variant.STOP_AUGMENTED:
        rows = model.schema.assignment_rows(np.asarray(x))
        with np.errstate(divide="ignore"):
            total += float(np.log(model.stop[rows]).sum())
    return total


def brute_unnormalized_joint(model: LdfmModel, x: np.ndarray) -> float:
    """Log unnormalized joint weight of a complete assignment, by enumeration.

    Stop-augmented models add the log stop weights of the root and of every
    assigned node to the tree sum.
    """
    if model.schema.n > MAX_TREE_N:
        raise ValueError(f"n must be at most {MAX_TREE_N}")
    total = _log_joint_or_neginf(model, x)
    if not np.isfinite(total):
        raise ValueError("zero-probability assignment")
    return total


def _all_assignments(model: LdfmModel) -> Iterator[np.ndarray]:
    cards = model.schema.cards
    for combo in itertools.product(*(range(int(c)) for c in cards)):
        yield np.array(combo, dtype=np.int64)


def _check_state_space(model: LdfmModel) -> None:
    schema = model.schema
    if schema.n > MAX_TREE_N:
        raise ValueError(f"n must be at most {MAX_TREE_N}")
    size = int(np.prod(schema.cards))
    if size > MAX_STATE_SPACE:
        raise ValueError(f"state space {size} exceeds cap {MAX_STATE_SPACE}")


def brute_valid_normalizer(model: LdfmModel) -> float:
    """Log sum of the unnormalized joint over every complete assignment."""
    _check_state_space(model)
    logs = [_log_joint_or_neginf(model, x) for x in _all_assignments(model)]
    total = _logsumexp(np.array(logs))
    if not np.isfinite(total):
        raise ValueError("model assigns zero weight to every assignment")
    return total


def exact_conditional(
    model: LdfmModel, query: np.ndarray, evidence: np.ndarray
) -> float:
    """P(query | evidence) by summing joints over consistent completions.

    ``query`` and ``evidence`` are partial assignments (MISSING marks free
    entries) over disjoint variable sets; the global normalizer cancels.
    """
    _check_state_space(model)
    query = np.asarray(query, dtype=np.int64)
    evidence = np.asarray(evidence, dtype=np.int64)
    n = model.schema.n
    if query.shape != (n,) or evidence.shape != (n,):
        raise ValueError("query and evidence must be length-n partial assignments")
    if np.any((query != MISSING) & (evidence != MISSING)):
        raise ValueError("query and evidence variable sets must be disjoint")
    if np.all(query == MISSING):
        raise ValueError("query must set at least one variable")

    num_logs = []
    den_logs = []
    e_mask = evidence != MISSING
    q_mask = query != MISSING
    for x in _all_assignments(model):
        if not np.array_equal(x[e_mask], evidence[e_mask]):
            continue
        lj = _log_joint_or_neginf(model, x)
        den_logs.append(lj)
        if np.array_equal(x[q_mask], query[q_mask]):
            num_logs.append(lj)
    den = _logsumexp(np.array(den_logs)) if den_logs else -np.inf
    if not np.isfinite(den):
        raise ValueError("evidence has zero probability under the model")
    num = _logsumexp(np.array(num_logs)) if num_logs else -np.inf
    return float(np.exp(num - den))
