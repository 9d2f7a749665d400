"""Standard confidence of chain and tree rules, and graph statistics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from treerule.reasoning import forward, query_candidates
from treerule.rules import AUX, ENT, QRY, RuleStats, format_sc, rule_text
from treerule.sparse import SparseBinaryMatrix, hop, intersection_size, norm1

REPORT_KINDS = ("CHAIN", AUX, ENT, QRY, "TREE")
DENSITY_FORMULA = "distinct unordered entity pairs joined by a train edge / (|E|*(|E|-1)/2)"
DENSITY_NOTE = (
    "published densities are not reproducible under one formula; "
    "this value uses the formula above and excludes self-loops"
)


def exact_sc(kg, rule, chunk: int = 4096) -> RuleStats:
    """Count distinct ``(x_0, x_n)`` body groundings and those matching the head.

    Runs the matrix pipeline over the full population of ``x_0`` candidates,
    one track per candidate, ``chunk`` tracks at a time.
    """
    candidates = query_candidates(kg, rule)
    head = kg.relation_matrix(rule.head)
    support = body = 0
    for start in range(0, len(candidates), chunk):
        v0 = SparseBinaryMatrix.one_hot(candidates[start : start + chunk], kg.num_entities)
        vn = forward(kg, rule, v0)[-1]
        body += norm1(vn)
        support += intersection_size(vn, hop(v0, head))
    return RuleStats(support, body)


def with_exact_stats(kg, rules):
    return [r.with_stats(exact_sc(kg, r)) for r in rules]


@dataclass
class ScReport:
    rules: list
    averages: dict[str, float] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)

    def rows(self, kg):
        for r in self.rules:
            s = r.stats
            yield (r.kind, format_sc(s.sc), s.support, s.body_count, rule_text(r, kg))


def avg_sc(kg, rules) -> ScReport:
    """Per-kind mean confidence; kinds without defined rules are absent.

    Rules lacking statistics are scored with :func:`exact_sc` first.
    """
    rules = [r if r.stats is not None else r.with_stats(exact_sc(kg, r)) for r in rules]
    buckets: dict[str, list[float]] = {k: [] for k in REPORT_KINDS}
    for r in rules:
        if not r.stats.defined:
            continue
        if r.kind == "CHAIN":
            buckets["CHAIN"].append(r.stats.sc)
            continue
        buckets["TREE"].append(r.stats.sc)
        if r.kind != "TREE":
            buckets[r.kind].append(r.stats.sc)
    averages = {k: float(np.mean(v)) for k, v in buckets.items() if v}
    counts = {k: len(v) for k, v in buckets.items() if v}
    return ScReport(rules, averages, counts)


def format_sc_summary(report: ScReport, title: str = "") -> str:
    lines = [f"Avg. sc (%){' ' + title if title else ''}", f"{'kind':<8}{'rules':>8}{'avg sc':>10}"]
    for k in REPORT_KINDS:
        if k in report.averages:
            lines.append(f"{k:<8}{report.counts[k]:>8}{100 * report.averages[k]:>10.2f}")
        else:
            lines.append(f"{k:<8}{'-':>8}{'-':>10}")
    return "\n".join(lines)


def edge_density(kg) -> float:
    n = kg.num_entities
    if n < 2:
        raise ValueError("edge density needs at least two entities")
    h, t = kg.train[:, 0], kg.train[:, 2]
    keep = h != t
    lo, hi = np.minimum(h[keep], t[keep]), np.maximum(h[keep], t[keep])
    pairs = np.unique(lo * n + hi).size
    return pairs / (n * (n - 1) / 2)
