"""Rule application and filtered link-prediction metrics.

Candidates are ranked by max-aggregation: compare the highest confidence
among the rules that predict each candidate, then the second highest and so
on, then the number of firing rules, then the entity id (lower wins).
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from treerule.reasoning import backward_candidates, forward
from treerule.rules import QRY, rule_text
from treerule.sparse import SparseBinaryMatrix, mask

TAIL, HEAD = "tail", "head"
MODES = ("chain", "tree", "union")


@dataclass(frozen=True)
class Query:
    known: int
    relation: int
    direction: str
    truth: int


def candidate_key(scs, entity: int):
    """Sort key, larger is better; ``scs`` must be in descending order."""
    return (tuple(scs), len(scs), -entity)


def better(a, b) -> bool:
    """Whether candidate ``a = (scs, entity)`` outranks ``b``."""
    return candidate_key(*a) > candidate_key(*b)


def index_rules(rules):
    """Rules with defined confidence grouped by head, best confidence first."""
    by_head = defaultdict(list)
    for r in rules:
        if r.stats is not None and r.stats.defined:
            by_head[r.head].append(r)
    for lst in by_head.values():
        lst.sort(key=lambda r: -r.stats.sc)
    return by_head


def _rule_hits(kg, rule, known: np.ndarray, direction: str) -> SparseBinaryMatrix:
    """Entities predicted by one rule for each known entity (one row each)."""
    start = SparseBinaryMatrix.one_hot(known, kg.num_entities)
    if direction == TAIL:
        return forward(kg, rule, start)[-1]
    cands = backward_candidates(kg, rule, start)
    if not any(b.kind == QRY for b in rule.branches) or cands.nnz == 0:
        return cands
    # QRY branches depend on x_0: confirm each candidate by a forward run.
    v0 = SparseBinaryMatrix.one_hot(cands.indices, kg.num_entities)
    reach = forward(kg, rule, v0)[-1]
    target = SparseBinaryMatrix.one_hot(np.repeat(known, cands.row_lengths()), kg.num_entities)
    ok = mask(reach, target).row_lengths() > 0
    rows = np.repeat(np.arange(len(known)), cands.row_lengths())[ok]
    return SparseBinaryMatrix.from_pairs(rows, cands.indices[ok], cands.shape)


def predict(kg, rules, known, direction: str):
    """Rank candidates for each known entity with ``rules`` (one head relation).

    ``rules`` must already be sorted by descending confidence. Returns, per
    known entity, a list of ``(entity, scs, best_rule_index)`` ordered best
    first.
    """
    known = np.asarray(known, dtype=np.int64)
    n_ent = kg.num_entities
    tracks, ents, which = [], [], []
    for k, rule in enumerate(rules):
        hits = _rule_hits(kg, rule, known, direction)
        if hits.nnz:
            tracks.append(np.repeat(np.arange(len(known)), hits.row_lengths()))
            ents.append(hits.indices.astype(np.int64))
            which.append(np.full(hits.nnz, k))
    out = [[] for _ in known]
    if not tracks:
        return out
    tracks, ents, which = np.concatenate(tracks), np.concatenate(ents), np.concatenate(which)
    keys = tracks * n_ent + ents
    order = np.argsort(keys, kind="stable")  # keeps rule order, i.e. sc descending
    keys, which = keys[order], which[order]
    sc = np.array([r.stats.sc for r in rules])
    bounds = np.flatnonzero(np.diff(keys)) + 1
    starts = np.concatenate([[0], bounds])
    for s, group in zip(starts, np.split(which, bounds)):
        key = int(keys[s])
        track, ent = divmod(key, n_ent)
        out[track].append((ent, tuple(sc[group].tolist()), int(group[0])))
    for lst in out:
        lst.sort(key=lambda c: candidate_key(c[1], c[0]), reverse=True)
    return out


def apply_rules(kg, rules, query: Query):
    """Ranked ``(entity, scs, best_rule)`` candidates for a single query."""
    lst = index_rules(rules).get(query.relation, [])
    ranked = predict(kg, lst, [query.known], query.direction)[0]
    return [(e, scs, lst[k]) for e, scs, k in ranked]


def filtered_rank(ranked, truth: int, known_true: set) -> int | None:
    """1-based rank of ``truth`` after removing other known answers; None if absent."""
    rank = 1
    for ent, _, _ in ranked:
        if ent == truth:
            return rank
        if ent not in known_true:
            rank += 1
    return None


def raw_rank(ranked, truth: int) -> int | None:
    for i, (ent, _, _) in enumerate(ranked, 1):
        if ent == truth:
            return i
    return None


@dataclass
class Metrics:
    mrr: float = 0.0
    hits1: float = 0.0
    hits3: float = 0.0
    hits10: float = 0.0
    query_count: int = 0
    coverage: float = 0.0

    @classmethod
    def from_ranks(cls, ranks):
        n = len(ranks)
        if n == 0:
            return cls()
        rr = np.array([0.0 if r is None else 1.0 / r for r in ranks])
        rk = np.array([np.inf if r is None else r for r in ranks])
        return cls(
            mrr=100 * rr.mean(),
            hits1=100 * float(np.mean(rk <= 1)),
            hits3=100 * float(np.mean(rk <= 3)),
            hits10=100 * float(np.mean(rk <= 10)),
            query_count=n,
            coverage=float(np.mean([r is not None for r in ranks])),
        )


@dataclass
class EvalReport(Metrics):
    by_direction: dict[str, Metrics] = field(default_factory=dict)
    explanations: list = field(default_factory=list)


def queries_from(triples) -> list[Query]:
    out = []
    for h, r, t in np.asarray(triples).tolist():
        out.append(Query(h, r, TAIL, t))
        out.append(Query(t, r, HEAD, h))
    return out


def _answers(kg):
    tails, heads = defaultdict(set), defaultdict(set)
    for h, r, t in kg.all_triples().tolist():
        tails[(h, r)].add(t)
        heads[(r, t)].add(h)
    return tails, heads


def _eval_group(kg, rules, relation, direction, queries, filtered, tails, heads, explain):
    known = sorted({q.known for q in queries})
    ranked = predict(kg, rules, known, direction)
    pos = {k: i for i, k in enumerate(known)}
    results = []
    for q in queries:
        cands = ranked[pos[q.known]]
        if filtered:
            answers = tails[(q.known, relation)] if direction == TAIL else heads[(relation, q.known)]
            rank = filtered_rank(cands, q.truth, answers)
        else:
            rank = raw_rank(cands, q.truth)
        expl = None
        if explain:
            expl = [(e, scs[0], k) for e, scs, k in cands[:10]]
        results.append((q, rank, expl))
    return results


def select_rules(rules, mode: str):
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if mode == "chain":
        return [r for r in rules if r.kind == "CHAIN"]
    if mode == "tree":
        return [r for r in rules if r.kind != "CHAIN"]
    return list(rules)


def evaluate(kg, rules, split: str = "test", filtered: bool = True, threads: int = 1, explain: bool = False):
    """Filtered MRR and Hits@k (in percent) over head and tail queries of a split."""
    queries = queries_from(getattr(kg, split))
    tails, heads = _answers(kg)
    by_head = index_rules(rules)
    groups = defaultdict(list)
    for q in queries:
        groups[(q.relation, q.direction)].append(q)
    keys = sorted(groups)
    jobs = (
        delayed(_eval_group)(kg, by_head.get(r, []), r, d, groups[(r, d)], filtered, tails, heads, explain)
        for r, d in keys
    )
    parts = Parallel(n_jobs=threads)(jobs) if threads > 1 else [f(*a, **kw) for f, a, kw in jobs]
    order = {q: i for i, q in enumerate(queries)}
    results = sorted((item for part in parts for item in part), key=lambda x: order[x[0]])
    report = EvalReport(**vars(Metrics.from_ranks([rank for _, rank, _ in results])))
    for d in (HEAD, TAIL):
        report.by_direction[d] = Metrics.from_ranks([rank for q, rank, _ in results if q.direction == d])
    if explain:
        for q, rank, expl in results:
            lst = by_head.get(q.relation, [])
            report.explanations.append((q, rank, [(e, sc, lst[k]) for e, sc, k in expl]))
    return report


def format_report(report: EvalReport, title: str = "") -> str:
    head = f"{'':<10}{'MRR':>8}{'Hit@1':>8}{'Hit@3':>8}{'Hit@10':>8}{'cover':>8}{'queries':>9}"
    lines = [title] if title else []
    lines.append(head)
    rows = [("all", report)] + [(d, m) for d, m in report.by_direction.items()]
    for name, m in rows:
        lines.append(
            f"{name:<10}{m.mrr:>8.2f}{m.hits1:>8.2f}{m.hits3:>8.2f}{m.hits10:>8.2f}"
            f"{100 * m.coverage:>8.2f}{m.query_count:>9}"
        )
    return "\n".join(lines)


def explanation_lines(kg, report: EvalReport):
    ent, rel = kg.entities.label, kg.relations.label
    for q, rank, cands in report.explanations:
        text = f"{ent(q.known)} {rel(q.relation)} ?" if q.direction == TAIL else f"? {rel(q.relation)} {ent(q.known)}"
        yield f"query\t{text}\ttruth={ent(q.truth)}\trank={rank if rank is not None else '-'}"
        for e, sc, rule in cands:
            yield f"\t{ent(e)}\t{sc:.6f}\t{rule_text(rule, kg)}"
