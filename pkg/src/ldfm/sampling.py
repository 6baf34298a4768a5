"""MCMC query answering: value-wise Gibbs and tree-augmented sampling.

Gibbs resamples one variable at a time from the conditional implied by the
unnormalized joint, costing one determinant per candidate value.  The
tree-augmented chain keeps the latent spanning tree as an auxiliary
variable and resamples one node's (value, parent) pair per step in O(n),
excluding the node's own subtree as parents so the tree stays acyclic.
Query probabilities are estimated from the recorded value vectors alone.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import matrix_tree, rng as rng_mod
from .matrix_tree import SingularLaplacianError
from .model import MISSING, LdfmModel, Variant


def _logsumexp(values: np.ndarray) -> float:
    m = values.max()
    if not np.isfinite(m):
        return float(m)
    return float(np.log(np.exp(values - m).sum()) + m)


class SamplerKind(enum.Enum):
    GIBBS = "gibbs"
    TREE_AUGMENTED = "tree"


class TreeProposal(enum.Enum):
    """How the tree-augmented chain moves a (value, parent) pair.

    FULL_CONDITIONAL resamples the pair from its exact conditional (the
    incoming weight times the node's outgoing-edge and stop factors), so
    every move is accepted.  INCOMING_ONLY proposes from the incoming
    weight alone and applies the Metropolis-Hastings correction for the
    neglected factors; the two leave the same distribution invariant.
    """

    FULL_CONDITIONAL = "full"
    INCOMING_ONLY = "incoming-mh"


@dataclass(frozen=True)
class QueryInstance:
    """Evidence/query split of the variables; the remainder is hidden.

    Both arrays hold a value index per variable with MISSING elsewhere.
    """

    query: np.ndarray
    evidence: np.ndarray

    def __post_init__(self) -> None:
        q = np.array(self.query, dtype=np.int64)
        e = np.array(self.evidence, dtype=np.int64)
        if q.shape != e.shape or q.ndim != 1:
            raise ValueError("query and evidence must be equal-length vectors")
        if np.any((q != MISSING) & (e != MISSING)):
            raise ValueError("query and evidence variable sets must be disjoint")
        if not np.any(q != MISSING):
            raise ValueError("instance must query at least one variable")
        q.setflags(write=False)
        e.setflags(write=False)
        object.__setattr__(self, "query", q)
        object.__setattr__(self, "evidence", e)

    @property
    def query_vars(self) -> np.ndarray:
        return np.nonzero(self.query != MISSING)[0]

    @property
    def evidence_vars(self) -> np.ndarray:
        return np.nonzero(self.evidence != MISSING)[0]

    @property
    def hidden_vars(self) -> np.ndarray:
        return np.nonzero((self.query == MISSING) & (self.evidence == MISSING))[0]


@dataclass(frozen=True)
class SamplerConfig:
    sampler: SamplerKind = SamplerKind.GIBBS
    burn_in: int | None = None  # None: 10n Gibbs sweeps / 100n tree steps
    samples: int = 1000
    thin: int = 1
    chains: int = 1
    seed: int = 0
    tree_proposal: TreeProposal = TreeProposal.FULL_CONDITIONAL

    def __post_init__(self) -> None:
        if self.samples < 1 or self.thin < 1 or self.chains < 1:
            raise ValueError("samples, thin, and chains must all be >= 1")
        if self.burn_in is not None and self.burn_in < 0:
            raise ValueError("burn_in must be nonnegative")


@dataclass
class ChainState:
    """One chain's mutable state; evidence coordinates never change."""

    values: np.ndarray
    pinned: np.ndarray
    rng: np.random.Generator
    parents: np.ndarray | None = None  # parents[j] for nodes 1..n; entry 0 unused
    step: int = 0
    tree_proposal: TreeProposal = TreeProposal.FULL_CONDITIONAL


def random_parent_vector(n: int, rng: np.random.Generator) -> np.ndarray:
    """A random valid rooted parent vector: attach nodes in random order."""
    parents = np.full(n + 1, -1, dtype=np.int64)
    attached = [0]
    for node in rng.permutation(n) + 1:
        parents[node] = attached[int(rng.integers(len(attached)))]
        attached.append(int(node))
    return parents


def is_rooted_tree(parents: np.ndarray) -> bool:
    n = len(parents) - 1
    for start in range(1, n + 1):
        seen = set()
        j = start
        while j != 0:
            if j in seen or not 1 <= j <= n:
                return False
            seen.add(j)
            j = int(parents[j])
    return True


def init_chain_state(
    model: LdfmModel,
    instance: QueryInstance,
    rng: np.random.Generator,
    with_tree: bool,
) -> ChainState:
    schema = model.schema
    if instance.query.shape != (schema.n,):
        raise ValueError("instance does not match the model schema")
    pinned = instance.evidence != MISSING
    values = np.where(
        pinned,
        instance.evidence,
        rng.integers(0, schema.cards, size=schema.n),
    ).astype(np.int64)
    parents = random_parent_vector(schema.n, rng) if with_tree else None
    return ChainState(values=values, pinned=pinned, rng=rng, parents=parents)


def _conditional_log_joint(model: LdfmModel, values: np.ndarray, var: int) -> np.ndarray:
    """Log unnormalized joint for each candidate value of one variable."""
    card = int(model.schema.cards[var])
    candidates = np.tile(values, (card, 1))
    candidates[:, var] = np.arange(card)
    return matrix_tree.unnormalized_log_joint_many(model, candidates, on_singular="neginf")


def gibbs_sweep(model: LdfmModel, state: ChainState) -> ChainState:
    """Resample every non-evidence variable in turn from its full conditional."""
    for var in range(model.schema.n):
        if state.pinned[var]:
            continue
        logp = _conditional_log_joint(model, state.values, var)
        total = _logsumexp(logp)
        if not np.isfinite(total):
            raise SingularLaplacianError(
                f"every value of variable {var} has zero conditional probability"
            )
        p = np.exp(logp - total)
        p /= p.sum()
        state.values[var] = int(state.rng.choice(len(p), p=p))
    state.step += 1
    return state


def _subtree_nodes(parents: np.ndarray, node: int) -> np.ndarray:
    """Nodes of the subtree rooted at ``node`` (itself included)."""
    n = len(parents) - 1
    children: list[list[int]] = [[] for _ in range(n + 1)]
    for j in range(1, n + 1):
        children[int(parents[j])].append(j)
    out = []
    stack = [node]
    while stack:
        j = stack.pop()
        out.append(j)
        stack.extend(children[j])
    return np.array(out, dtype=np.int64)


def tree_augmented_step(model: LdfmModel, state: ChainState) -> ChainState:
    """Resample one node's (value, parent) pair on the augmented space.

    Candidate parents are every node outside the picked node's subtree, so
    the parent vector stays a rooted tree; evidence variables keep their
    value and only move their parent.
    """
    if state.parents is None:
        raise ValueError("tree-augmented step requires a parent vector in the state")
    schema = model.schema
    n = schema.n
    node = int(state.rng.integers(1, n + 1))
    var = node - 1

    blocked = np.zeros(n + 1, dtype=bool)
    blocked[_subtree_nodes(state.parents, node)] = True
    cand_parents = np.nonzero(~blocked)[0]

    rows_all = schema.assignment_rows(state.values)
    if state.pinned[var]:
        vals = np.array([state.values[var]], dtype=np.int64)
    else:
        vals = np.arange(schema.cards[var], dtype=np.int64)
    val_cols = schema.offsets[var] + vals
    val_rows = 1 + val_cols

    children = np.nonzero(state.parents == node)[0]
    child_cols = schema.offsets[children - 1] + state.values[children - 1]
    with np.errstate(divide="ignore"):
        # (value, parent) grid of log incoming weight, plus value-only terms
        log_in = np.log(model.dep[rows_all[cand_parents]][:, val_cols]).T
        val_logw = np.log(model.dep[val_rows][:, child_cols]).sum(axis=1)
        if model.variant is Variant.STOP_AUGMENTED:
            val_logw = val_logw + np.log(model.stop[val_rows])

    if state.tree_proposal is TreeProposal.FULL_CONDITIONAL:
        logw = log_in + val_logw[:, None]
        total = _logsumexp(logw.ravel())
        if not np.isfinite(total):
            raise SingularLaplacianError(
                f"every (value, parent) candidate for variable {var} has zero weight"
            )
        p = np.exp(logw.ravel() - total)
        p /= p.sum()
        pick = int(state.rng.choice(len(p), p=p))
        vi, pi = divmod(pick, len(cand_parents))
        state.values[var] = int(vals[vi])
        state.parents[node] = int(cand_parents[pi])
    else:
        total = _logsumexp(log_in.ravel())
        if not np.isfinite(total):
            raise SingularLaplacianError(
                f"every (value, parent) candidate for variable {var} has zero weight"
            )
        p = np.exp(log_in.ravel() - total)
        p /= p.sum()
        pick = int(state.rng.choice(len(p), p=p))
        vi, pi = divmod(pick, len(cand_parents))
        cur_vi = int(np.nonzero(vals == state.values[var])[0][0])
        log_accept = val_logw[vi] - val_logw[cur_vi]
        if np.log(state.rng.random()) < log_accept:
            state.values[var] = int(vals[vi])
            state.parents[node] = int(cand_parents[pi])
    state.step += 1
    return state


def _default_burn_in(sampler: SamplerKind, n: int) -> int:
    return 10 * n if sampler is SamplerKind.GIBBS else 100 * n


def run_chain(
    model: LdfmModel,
    instance: QueryInstance,
    config: SamplerConfig,
    seed: rng_mod.Seed | None = None,
) -> np.ndarray:
    """Pooled value-vector samples from ``config.chains`` independent chains.

    Each chain burns in, then records every ``thin``-th state's values;
    the returned array has chains * samples rows in chain order.
    """
    schema = model.schema
    n = schema.n
    burn_in = (
        config.burn_in
        if config.burn_in is not None
        else _default_burn_in(config.sampler, n)
    )
    with_tree = config.sampler is SamplerKind.TREE_AUGMENTED
    step = gibbs_sweep if config.sampler is SamplerKind.GIBBS else tree_augmented_step

    pooled = np.empty((config.chains * config.samples, n), dtype=np.int64)
    row = 0
    for chain_rng in rng_mod.chain_rngs(seed if seed is not None else config.seed, config.chains):
        state = init_chain_state(model, instance, chain_rng, with_tree)
        state.tree_proposal = config.tree_proposal
        for _ in range(burn_in):
            step(model, state)
        for _ in range(config.samples):
            for _ in range(config.thin):
                step(model, state)
            pooled[row] = state.values
            row += 1
    return pooled


def estimate_cll(
    samples: np.ndarray, instance: QueryInstance, normalize: bool = False
) -> float:
    """Log fraction of samples matching the full query configuration.

    Add-one corrected so a zero or perfect match count stays finite;
    optionally normalized by the number of query variables.
    """
    samples = np.asarray(samples)
    if samples.size == 0:
        raise ValueError("sample set is empty")
    qv = instance.query_vars
    if qv.size == 0:
        raise ValueError("instance has no query variables")
    total = samples.shape[0]
    matches = int(np.all(samples[:, qv] == instance.query[qv][None, :], axis=1).sum())
    value = float(np.log((matches + 1.0) / (total + 2.0)))
    return value / qv.size if normalize else value


def estimate_cmll(
    samples: np.ndarray,
    instance: QueryInstance,
    cards: np.ndarray,
    normalize: bool = False,
) -> float:
    """Sum over query variables of the log per-variable match fraction.

    Each term is add-one corrected over the variable's domain size, so it is
    a proper smoothed marginal estimate.
    """
    samples = np.asarray(samples)
    if samples.size == 0:
        raise ValueError("sample set is empty")
    qv = instance.query_vars
    if qv.size == 0:
        raise ValueError("instance has no query variables")
    total = samples.shape[0]
    value = 0.0
    for var in qv:
        matches = int((samples[:, var] == instance.query[var]).sum())
        value += float(np.log((matches + 1.0) / (total + float(cards[var]))))
    return value / qv.size if normalize else value
