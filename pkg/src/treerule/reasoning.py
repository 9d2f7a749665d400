"""Grounding a rule body with batched sparse hops.

Each row of a grounding matrix is one track: the set of entities a variable
can take given that row's choice of ``x_0`` (or ``x_n`` when running
backwards). Branch atoms are applied as masks at their anchor variable.
"""
from __future__ import annotations

import numpy as np

from treerule.rules import AUX, ENT, QRY, BodyAtom, BranchAtom
from treerule.sparse import (
    SparseBinaryMatrix,
    hop,
    mask,
    mask_columns,
    row_sum_vector,
)


def atom_matrix(kg, atom: BodyAtom) -> SparseBinaryMatrix:
    """Matrix taking ``x_i`` groundings to ``x_{i+1}`` groundings."""
    return kg.relation_matrix(atom.relation, atom.inverse)


def query_candidates(kg, rule) -> np.ndarray:
    """Entities that satisfy at least the first body atom as ``x_0``."""
    return np.flatnonzero(row_sum_vector(atom_matrix(kg, rule.body[0])))


def aux_table(kg) -> np.ndarray:
    """``(R, 2, |E|)`` 0/1 table; ``[r, 0]`` marks ``r(M, v)`` and ``[r, 1]`` marks ``r(v, M)``.

    Fixed per graph, so it is built once and cached on ``kg``.
    """
    tab = kg._cache.get("aux")
    if tab is None:
        tab = np.zeros((kg.num_relations, 2, kg.num_entities), dtype=np.uint8)
        h, r, t = kg.train[:, 0], kg.train[:, 1], kg.train[:, 2]
        tab[r, 0, t] = 1
        tab[r, 1, h] = 1
        tab.setflags(write=False)
        kg._cache["aux"] = tab
    return tab


def aux_vector(kg, relation: int, inverse: bool) -> np.ndarray:
    """0/1 vector of entities ``v`` with ``r(M, v)`` (or ``r(v, M)`` if inverse)."""
    if not 0 <= relation < kg.num_relations:
        raise IndexError(f"relation id {relation} out of range")
    return aux_table(kg)[relation, int(inverse)]


def _pair_index(kg):
    # sorted keys x*|E|+v for every fact linking x to v, with slot 2r (r(x,v)) or 2r+1 (r(v,x))
    idx = kg._cache.get("pairs")
    if idx is None:
        n = kg.num_entities
        h, r, t = (kg.train[:, j].astype(np.int64) for j in range(3))
        keys = np.concatenate([h * n + t, t * n + h])
        slots = np.concatenate([2 * r, 2 * r + 1])
        order = np.argsort(keys, kind="stable")
        idx = kg._cache["pairs"] = (keys[order], slots[order])
    return idx


def qry_counts(kg, v0: SparseBinaryMatrix, g: SparseBinaryMatrix) -> np.ndarray:
    """``out[r, inv]`` = number of entries shared by ``g`` and ``qry_matrix(kg, r, inv, v0)``.

    Every row of ``v0`` must hold exactly one query entity.
    """
    if g.shape[0] != v0.shape[0]:
        raise ValueError("grounding and query batch differ in rows")
    if np.any(v0.row_lengths() != 1):
        raise ValueError("query groundings must be one-hot rows")
    n = kg.num_entities
    keys_sorted, slots_sorted = _pair_index(kg)
    x0 = np.repeat(v0.indices.astype(np.int64), g.row_lengths())
    keys = x0 * n + g.indices
    lo = np.searchsorted(keys_sorted, keys, side="left")
    cnt = np.searchsorted(keys_sorted, keys, side="right") - lo
    total = int(cnt.sum())
    starts = np.repeat(lo - (np.cumsum(cnt) - cnt), cnt)
    hits = slots_sorted[starts + np.arange(total)]
    return np.bincount(hits, minlength=2 * kg.num_relations).reshape(kg.num_relations, 2)


def qry_matrix(kg, relation: int, inverse: bool, v0: SparseBinaryMatrix) -> SparseBinaryMatrix:
    """Per-track constraint of ``r(X, v)`` (or ``r(v, X)`` if inverse)."""
    return hop(v0, kg.relation_matrix(relation, inverse))


def global_constraint(kg, branch: BranchAtom) -> np.ndarray:
    if branch.kind == ENT:
        vec = np.zeros(kg.num_entities, dtype=np.uint8)
        vec[branch.entity] = 1
        return vec
    if branch.kind == AUX:
        return aux_vector(kg, branch.relation, branch.inverse)
    raise ValueError("QRY constraints depend on the query track")


def apply_branch(kg, g: SparseBinaryMatrix, branch: BranchAtom, v0: SparseBinaryMatrix) -> SparseBinaryMatrix:
    if branch.kind == QRY:
        return mask(g, qry_matrix(kg, branch.relation, branch.inverse, v0))
    return mask_columns(g, global_constraint(kg, branch))


def apply_branches_at(kg, g, rule, anchor: int, v0, skip_qry: bool = False):
    for br in rule.branches:
        if br.anchor == anchor and not (skip_qry and br.kind == QRY):
            g = apply_branch(kg, g, br, v0)
    return g


def forward(kg, rule, v0: SparseBinaryMatrix) -> list[SparseBinaryMatrix]:
    """Groundings ``[V_0, ..., V_n]`` with branch masks applied at anchors."""
    vs = [v0]
    for i, atom in enumerate(rule.body):
        nxt = hop(vs[-1], atom_matrix(kg, atom))
        vs.append(apply_branches_at(kg, nxt, rule, i + 1, v0))
    return vs


def backward_candidates(kg, rule, vn: SparseBinaryMatrix) -> SparseBinaryMatrix:
    """Run the body from ``x_n`` back to ``x_0``, applying AUX/ENT masks.

    QRY branches need ``x_0`` and are left to the caller; the result is a
    superset of the exact ``x_0`` set whenever the rule has QRY branches.
    """
    g = apply_branches_at(kg, vn, rule, rule.length, None, skip_qry=True)
    for i in range(rule.length - 1, -1, -1):
        atom = rule.body[i]
        g = hop(g, kg.relation_matrix(atom.relation, not atom.inverse))
        if i > 0:
            g = apply_branches_at(kg, g, rule, i, None, skip_qry=True)
    return g
