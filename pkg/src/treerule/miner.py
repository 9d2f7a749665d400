"""Bidirectional breadth-first search for chain rules.

For every seed fact ``r(h, t)`` the miner walks up to two hops forward from
``h`` and one hop backward from ``t`` (edges usable in both directions) and
joins the frontiers on their meeting entity. Each relation path found
becomes a variable-only chain rule with head ``r``.
"""
from __future__ import annotations

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from treerule.evaluator import exact_sc
from treerule.rules import MAX_LENGTH, BodyAtom, ChainRule

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MinerConfig:
    max_len: int = 3
    min_support: int = 2
    min_sc: float = 0.01
    max_rules_per_head: int | None = None
    sample_facts: int | None = None
    seed: int = 37

    def __post_init__(self):
        if not 1 <= self.max_len <= MAX_LENGTH:
            raise ValueError(f"max_len must be in 1..{MAX_LENGTH}")


def _steps(kg):
    """Outgoing steps per entity: ``(neighbor, relation, inverse)``."""
    out = [[] for _ in range(kg.num_entities)]
    for h, r, t in kg.train.tolist():
        out[h].append((t, r, False))
        out[t].append((h, r, True))
    return out


def _frontier(steps, start, depth):
    """Relation paths of exactly ``depth`` steps from ``start``, keyed by end entity."""
    layer = {start: {()}}
    for _ in range(depth):
        nxt = defaultdict(set)
        for ent, paths in layer.items():
            for nb, r, inv in steps[ent]:
                s = (r, inv)
                bucket = nxt[nb]
                for p in paths:
                    bucket.add(p + (s,))
        layer = nxt
    return layer


def _into(steps, target):
    """One-step paths ending in ``target``, keyed by their start entity."""
    layer = defaultdict(set)
    for nb, r, inv in steps[target]:
        # target --(r,inv)--> nb, so nb --(r,not inv)--> target
        layer[nb].add((r, not inv))
    return layer


def paths_between(steps, h, t, max_len, fwd_cache=None):
    """All relation paths of length ``1..max_len`` from ``h`` to ``t``."""
    found = set()
    fwd = fwd_cache if fwd_cache is not None else {}

    def forward(d):
        key = (h, d)
        if key not in fwd:
            fwd[key] = _frontier(steps, h, d)
        return fwd[key]

    found.update(forward(1).get(t, ()))
    if max_len >= 2:
        back = _into(steps, t)
        for d in range(1, max_len):
            layer = forward(d)
            for mid, tails in back.items():
                heads = layer.get(mid)
                if heads:
                    for p in heads:
                        for s in tails:
                            found.add(p + (s,))
    return found


def _mine_relation(kg, steps, relation, facts, max_len):
    """Map each non-trivial path to the number of seed facts it connects."""
    counts = Counter()
    by_head = defaultdict(list)
    for h, t in facts:
        by_head[h].append(t)
    for h in sorted(by_head):
        cache = {}
        for t in by_head[h]:
            counts.update(paths_between(steps, h, t, max_len, cache))
    trivial = ((relation, False),)
    counts.pop(trivial, None)
    return counts


def _body_key(rule):
    return (rule.length, tuple((a.relation, a.inverse) for a in rule.body))


def _mine_and_score(kg, relation, facts, config):
    steps = _steps(kg)
    counts = _mine_relation(kg, steps, relation, facts, config.max_len)
    # Highest seed-fact support first; without sampling this is the exact support.
    order = sorted(counts, key=lambda p: (-counts[p], len(p), p))
    cap = config.max_rules_per_head
    rules = []
    for path in order:
        if cap is not None and len(rules) >= cap:
            break
        if config.sample_facts is None and counts[path] < config.min_support:
            break  # every later path has lower support
        rule = ChainRule(relation, tuple(BodyAtom(r, inv) for r, inv in path))
        stats = exact_sc(kg, rule)
        if stats.support < max(config.min_support, 1) or stats.sc < config.min_sc:
            continue
        rules.append(rule.with_stats(stats))
    rules.sort(key=_body_key)
    return rules


def seed_facts(kg, config: MinerConfig) -> dict[int, list[tuple[int, int]]]:
    """Training facts per head relation, subsampled when ``sample_facts`` is set."""
    groups = defaultdict(list)
    for h, r, t in kg.train.tolist():
        groups[r].append((h, t))
    if config.sample_facts is None:
        return dict(groups)
    out = {}
    for r, facts in groups.items():
        if len(facts) > config.sample_facts:
            rng = np.random.default_rng([config.seed, r])
            keep = np.sort(rng.choice(len(facts), size=config.sample_facts, replace=False))
            facts = [facts[i] for i in keep]
        out[r] = facts
    return out


def mine(kg, config: MinerConfig | None = None, threads: int = 1) -> list[ChainRule]:
    """Mine chain rules with exact statistics, sorted by head then body."""
    config = config or MinerConfig()
    groups = seed_facts(kg, config)
    relations = sorted(groups)
    jobs = (delayed(_mine_and_score)(kg, r, groups[r], config) for r in relations)
    if threads > 1:
        per_relation = Parallel(n_jobs=threads)(jobs)
    else:
        per_relation = [f(*a, **kw) for f, a, kw in jobs]
    rules = [rule for part in per_relation for rule in part]
    log.info("mined %d rules for %d head relations", len(rules), len(relations))
    return rules
