"""Refine chain rules into tree rules by scoring candidate branch atoms.

For a chain rule the refiner samples ``b`` query groundings, pushes them
forward through body and head, splits the groundings of ``x_n`` into
positive and negative tracks, propagates both back to every body variable
and then scores AUX, ENT and QRY candidates against the resulting variable
representation. The top-k candidates per variable each yield one tree rule,
which is kept only if its exact confidence beats the chain rule's.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from treerule.evaluator import exact_sc
from treerule.reasoning import atom_matrix, aux_table, aux_vector, qry_counts, qry_matrix, query_candidates
from treerule.rules import (
    AUX,
    ENT,
    KIND_ORDER,
    KINDS,
    QRY,
    BranchAtom,
    ChainRule,
    TreeRule,
    branch_text,
    duplicates_body_atom,
    format_sc,
    rule_seed,
    rule_text,
)
from treerule.sparse import (
    SparseBinaryMatrix,
    column_counts,
    hop,
    intersection_size,
    mask,
    mask_complement,
)

log = logging.getLogger(__name__)

BETA_FLOOR, BETA_CEIL = 0.05, 0.95
KINDS_BY_ORDER = {v: k for k, v in KIND_ORDER.items()}


class RefinementSkipped(Exception):
    pass


@dataclass(frozen=True)
class RefineConfig:
    batch: int = 100
    top_k: int = 5
    beta: float | None = None  # None: use the chain rule's confidence
    kinds: tuple[str, ...] = KINDS
    seed: int = 37
    max_candidates_per_kind: int | None = None
    min_support: int = 1

    def __post_init__(self):
        if self.batch < 1 or self.top_k < 1:
            raise ValueError("batch and top_k must be at least 1")
        if self.beta is not None and not 0 < self.beta < 1:
            raise ValueError("a fixed beta must lie strictly inside (0, 1)")
        bad = set(self.kinds) - set(KINDS)
        if bad or not self.kinds:
            raise ValueError(f"invalid branch kinds {self.kinds!r}")
        object.__setattr__(self, "kinds", tuple(sorted(set(self.kinds), key=KIND_ORDER.get)))


@dataclass
class VariableGroundings:
    V: list[SparseBinaryMatrix]
    T: SparseBinaryMatrix
    P: list[SparseBinaryMatrix | None] = field(default_factory=list)
    N: list[SparseBinaryMatrix | None] = field(default_factory=list)

    @property
    def length(self) -> int:
        return len(self.V) - 1


@dataclass
class Candidate:
    branch: BranchAtom
    vector: np.ndarray | None = None  # AUX/ENT: global 0/1 constraint
    rows: SparseBinaryMatrix | None = None  # QRY: per-track constraint


@dataclass
class Refinement:
    rule: TreeRule
    base: ChainRule
    score: float


# pipeline stages ----------------------------------------------------------


def sample_query_groundings(kg, rule, config: RefineConfig) -> SparseBinaryMatrix:
    candidates = query_candidates(kg, rule)
    if candidates.size == 0:
        raise RefinementSkipped("no entity satisfies the first body atom")
    rng = np.random.default_rng([config.seed, rule_seed(rule_text(rule, kg))])
    k = min(config.batch, candidates.size)
    picked = np.sort(rng.choice(candidates, size=k, replace=False))
    return SparseBinaryMatrix.one_hot(picked, kg.num_entities)


def forward_reason(kg, rule, v0: SparseBinaryMatrix) -> VariableGroundings:
    vs = [v0]
    for atom in rule.body:
        vs.append(hop(vs[-1], atom_matrix(kg, atom)))
    return VariableGroundings(V=vs, T=hop(v0, kg.relation_matrix(rule.head)))


def split_pos_neg(vn: SparseBinaryMatrix, tn: SparseBinaryMatrix):
    return mask(vn, tn), mask_complement(vn, tn)


def backward_reason(kg, rule, g: VariableGroundings) -> VariableGroundings:
    n = g.length
    P: list = [None] * (n + 1)
    N: list = [None] * (n + 1)
    P[n], N[n] = split_pos_neg(g.V[n], g.T)
    for i in range(n - 1, -1, -1):
        atom = rule.body[i]
        back = kg.relation_matrix(atom.relation, not atom.inverse)
        P[i] = mask(hop(P[i + 1], back), g.V[i])
        N[i] = mask(hop(N[i + 1], back), g.V[i])
    g.P, g.N = P, N
    return g


def variable_representation(p: SparseBinaryMatrix, n: SparseBinaryMatrix, beta: float) -> np.ndarray:
    return (1 - beta) * column_counts(p) - beta * column_counts(n)


def _implied_aux(rule, anchor: int) -> set[tuple[int, bool]]:
    """AUX atoms already entailed by the body atoms touching ``x_anchor``.

    ``(r, False)`` stands for ``r(M, x_i)`` and ``(r, True)`` for ``r(x_i, M)``.
    """
    implied = set()
    incoming = rule.body[anchor - 1]
    implied.add((incoming.relation, incoming.inverse))
    if anchor < rule.length:
        outgoing = rule.body[anchor]
        implied.add((outgoing.relation, not outgoing.inverse))
    return implied


def _excluded_qry(rule, branch: BranchAtom) -> bool:
    if duplicates_body_atom(rule, branch):
        return True
    # r(X, x_n) with the head relation is the head itself
    return branch.anchor == rule.length and branch.relation == rule.head and not branch.inverse


def enumerate_candidates(kg, rule, anchor: int, kinds, groundings: VariableGroundings, qry_cache=None):
    if not 1 <= anchor <= rule.length:
        raise ValueError(f"anchor must be in 1..{rule.length}")
    out: list[Candidate] = []
    if ENT in kinds:
        for e in np.flatnonzero(column_counts(groundings.V[anchor])):
            vec = np.zeros(kg.num_entities, dtype=np.uint8)
            vec[e] = 1
            out.append(Candidate(BranchAtom(ENT, anchor, entity=int(e)), vector=vec))
    if QRY in kinds:
        v0 = groundings.V[0]
        for r in range(kg.num_relations):
            for inv in (False, True):
                br = BranchAtom(QRY, anchor, r, inv)
                if _excluded_qry(rule, br):
                    continue
                if qry_cache is not None:
                    rows = qry_cache.get((r, inv))
                    if rows is None:
                        rows = qry_cache[(r, inv)] = qry_matrix(kg, r, inv, v0)
                else:
                    rows = qry_matrix(kg, r, inv, v0)
                out.append(Candidate(br, rows=rows))
    if AUX in kinds:
        implied = _implied_aux(rule, anchor)
        for r in range(kg.num_relations):
            for inv in (False, True):
                if (r, inv) in implied:
                    continue
                out.append(Candidate(BranchAtom(AUX, anchor, r, inv), vector=aux_vector(kg, r, inv)))
    return out


def _combine(pos: int, neg: int, beta: float) -> float:
    return (1 - beta) * pos - beta * neg


def candidate_counts(p, n, candidate: Candidate) -> tuple[int, int]:
    """Positive and negative track hits of a candidate at one variable."""
    if candidate.rows is not None:
        return intersection_size(p, candidate.rows), intersection_size(n, candidate.rows)
    c = candidate.vector.astype(np.int64)
    return int(column_counts(p) @ c), int(column_counts(n) @ c)


def score_branch(p, n, beta: float, candidate: Candidate) -> float:
    """Weighted kept-positive minus kept-negative tracks at the anchor.

    For AUX and ENT this is the inner product of the variable representation
    with the constraint vector; QRY stays aligned to each track's own ``x_0``.
    """
    return _combine(*candidate_counts(p, n, candidate), beta)


def rule_beta(kg, rule, config: RefineConfig) -> float:
    if config.beta is not None:
        return config.beta
    stats = rule.stats if rule.stats is not None else exact_sc(kg, rule)
    sc = stats.sc
    if sc is None:
        raise RefinementSkipped("rule body has no grounding")
    if sc <= 0:
        return BETA_FLOOR
    if sc >= 1:
        return BETA_CEIL
    return sc


def _candidate_table(kg, rule, anchor, g, kinds):
    """Columns ``(pos, neg, kind order, id, inverse)`` for every candidate at ``anchor``."""
    p, n = g.P[anchor], g.N[anchor]
    cp, cn = column_counts(p), column_counts(n)
    parts = []
    if ENT in kinds:
        ents = np.flatnonzero(column_counts(g.V[anchor]))
        parts.append((cp[ents], cn[ents], np.full(ents.size, KIND_ORDER[ENT]), ents, np.zeros(ents.size, bool)))
    rel = np.repeat(np.arange(kg.num_relations), 2)
    inv = np.tile([False, True], kg.num_relations)

    def slots_except(pairs):
        keep = np.ones(rel.size, bool)
        keep[[2 * r + int(i) for r, i in pairs]] = False
        return keep

    if QRY in kinds:
        excluded = set()
        if anchor == 1:
            excluded.add((rule.body[0].relation, rule.body[0].inverse))
        if anchor == rule.length:
            excluded.add((rule.head, False))
        keep = slots_except(excluded)
        qp = qry_counts(kg, g.V[0], p).ravel()
        qn = qry_counts(kg, g.V[0], n).ravel()
        parts.append((qp[keep], qn[keep], np.full(keep.sum(), KIND_ORDER[QRY]), rel[keep], inv[keep]))
    if AUX in kinds:
        keep = slots_except(_implied_aux(rule, anchor))
        tab = aux_table(kg).reshape(-1, kg.num_entities).astype(np.int64)
        parts.append(((tab @ cp)[keep], (tab @ cn)[keep], np.full(keep.sum(), KIND_ORDER[AUX]), rel[keep], inv[keep]))
    return [np.concatenate(col) for col in zip(*parts)]


def _branch(kind_order: int, anchor: int, ident: int, inverse: bool) -> BranchAtom:
    kind = KINDS_BY_ORDER[kind_order]
    if kind == ENT:
        return BranchAtom(ENT, anchor, entity=int(ident))
    return BranchAtom(kind, anchor, int(ident), bool(inverse))


def _score_anchor(kg, rule, anchor, g, config, beta, limit=None):
    """``(score, branch)`` pairs at one variable, best first.

    Ties fall back to the branch sort key (ENT < QRY < AUX, then id).
    """
    pos, neg, kind, ident, inv = _candidate_table(kg, rule, anchor, g, config.kinds)
    cap = config.max_candidates_per_kind
    if cap is not None:
        keep = np.zeros(pos.size, bool)
        for k in np.unique(kind):
            sel = np.flatnonzero(kind == k)
            order = np.lexsort((inv[sel], ident[sel], -pos[sel]))
            keep[sel[order[:cap]]] = True
        pos, neg, kind, ident, inv = (c[keep] for c in (pos, neg, kind, ident, inv))
    scores = (1 - beta) * pos.astype(np.float64) - beta * neg.astype(np.float64)
    order = np.lexsort((inv, ident, kind, -scores))
    if limit is not None:
        order = order[:limit]
    return [(float(scores[i]), _branch(kind[i], anchor, ident[i], inv[i])) for i in order]


def refine_candidates(kg, rule: ChainRule, config: RefineConfig) -> list[Refinement]:
    """Run the pipeline and return surviving refinements with their scores."""
    if not isinstance(rule, ChainRule):
        raise TypeError("only chain rules can be refined")
    base_stats = rule.stats if rule.stats is not None else exact_sc(kg, rule)
    base = rule.with_stats(base_stats)
    beta = rule_beta(kg, base, config)
    v0 = sample_query_groundings(kg, rule, config)
    g = backward_reason(kg, rule, forward_reason(kg, rule, v0))
    out = []
    seen = set()
    for anchor in range(1, rule.length + 1):
        for score, br in _score_anchor(kg, rule, anchor, g, config, beta, config.top_k):
            if br in seen:
                continue
            seen.add(br)
            tree = TreeRule(rule, (br,))
            stats = exact_sc(kg, tree)
            if not stats.defined or stats.support < config.min_support:
                continue
            if stats.sc <= base_stats.sc:
                continue
            out.append(Refinement(tree.with_stats(stats), base, score))
    return out


def refine_rule(kg, rule: ChainRule, config: RefineConfig) -> list[TreeRule]:
    return [r.rule for r in refine_candidates(kg, rule, config)]


def _refine_chunk(kg, rules, config):
    results = []
    for rule in rules:
        try:
            results.append((refine_candidates(kg, rule, config), None))
        except RefinementSkipped as exc:
            results.append(([], str(exc)))
    return results


def refine_rules(kg, rules, config: RefineConfig, threads: int = 1):
    """Refine every chain rule; output order follows the input order.

    Returns ``(refinements, skipped)`` where ``skipped`` lists
    ``(rule, reason)`` pairs.
    """
    rules = [r for r in rules if isinstance(r, ChainRule)]
    if threads > 1 and len(rules) > 1:
        chunks = np.array_split(np.arange(len(rules)), min(len(rules), threads * 4))
        parts = Parallel(n_jobs=threads)(
            delayed(_refine_chunk)(kg, [rules[i] for i in idx], config) for idx in chunks if len(idx)
        )
        results = [item for part in parts for item in part]
    else:
        results = _refine_chunk(kg, rules, config)
    refinements, skipped = [], []
    for rule, (found, reason) in zip(rules, results):
        if reason is not None:
            skipped.append((rule, reason))
        refinements.extend(found)
    return refinements, skipped


def report_rows(kg, refinements):
    """Rows for the refinement sidecar report."""
    for ref in refinements:
        br = ref.rule.branches[0]
        yield (
            rule_text(ref.base, kg),
            format_sc(ref.base.sc),
            branch_text(br, ref.rule.length, kg),
            br.kind,
            f"{ref.score:.6f}",
            format_sc(ref.rule.sc),
        )

