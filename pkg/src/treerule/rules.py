"""Chain-like and tree-like rules, and their one-line text format.

A chain rule of length ``n`` has body atoms ``r_i`` linking ``x_i`` to
``x_{i+1}`` for ``i = 0..n-1`` and head ``r(x_0, x_n)``. In text, ``x_0`` is
``X``, ``x_n`` is ``Y`` and intermediate variables are ``A``, ``B``. Tree
rules add branch atoms anchored on ``x_1..x_n``:

* ``AUX``: ``r(M,V)`` or ``r(V,M)`` with ``M`` a free auxiliary variable
* ``ENT``: ``is(e,V)``, the variable is bound to entity ``e``
* ``QRY``: ``r(X,V)`` or ``r(V,X)``, a second edge back to the query variable

Rule line grammar::

    [<sc>\\t[<support>\\t<body_count>\\t]]<head> <= <atom>{, <atom>}
"""
from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import dataclass, replace
from pathlib import Path

log = logging.getLogger(__name__)

MAX_LENGTH = 3
AUX, ENT, QRY = "AUX", "ENT", "QRY"
KINDS = (ENT, QRY, AUX)
KIND_ORDER = {ENT: 0, QRY: 1, AUX: 2}
QUERY_VAR, TARGET_VAR, AUX_VAR = "X", "Y", "M"
_INNER_VARS = "ABCDEFGH"
_VAR_RE = re.compile(r"[A-Z][0-9]*")


class RuleParseError(ValueError):
    pass


class UnknownLabelError(RuleParseError):
    pass


@dataclass(frozen=True)
class RuleStats:
    support: int
    body_count: int

    def __post_init__(self):
        if self.support < 0 or self.body_count < 0 or self.support > self.body_count:
            raise ValueError(f"invalid counts support={self.support} body_count={self.body_count}")

    @property
    def sc(self) -> float | None:
        """Standard confidence, ``None`` when the body has no grounding."""
        if self.body_count == 0:
            return None
        return self.support / self.body_count

    @property
    def defined(self) -> bool:
        return self.body_count > 0


@dataclass(frozen=True)
class BodyAtom:
    relation: int
    inverse: bool = False


@dataclass(frozen=True)
class BranchAtom:
    kind: str
    anchor: int
    relation: int | None = None
    inverse: bool = False
    entity: int | None = None

    def __post_init__(self):
        if self.kind not in KIND_ORDER:
            raise ValueError(f"unknown branch kind {self.kind!r}")
        if self.anchor < 1:
            raise ValueError("branch anchors must be body variables x_1..x_n")
        if self.kind == ENT:
            if self.entity is None or self.relation is not None or self.inverse:
                raise ValueError("ENT branches carry an entity and no relation")
        elif self.relation is None or self.entity is not None:
            raise ValueError(f"{self.kind} branches carry a relation and no entity")

    @property
    def sort_key(self):
        ident = self.entity if self.kind == ENT else self.relation
        return (KIND_ORDER[self.kind], self.anchor, ident, self.inverse)


@dataclass(frozen=True)
class ChainRule:
    head: int
    body: tuple[BodyAtom, ...]
    stats: RuleStats | None = None

    def __post_init__(self):
        object.__setattr__(self, "body", tuple(self.body))
        if not 1 <= len(self.body) <= MAX_LENGTH:
            raise ValueError(f"rule length must be 1..{MAX_LENGTH}, got {len(self.body)}")

    @property
    def length(self) -> int:
        return len(self.body)

    @property
    def base(self) -> "ChainRule":
        return self

    @property
    def branches(self) -> tuple[BranchAtom, ...]:
        return ()

    @property
    def kind(self) -> str:
        return "CHAIN"

    @property
    def sc(self) -> float | None:
        return None if self.stats is None else self.stats.sc

    def with_stats(self, stats: RuleStats) -> "ChainRule":
        return replace(self, stats=stats)

    def structure(self):
        return (self.head, self.body, ())

    def is_trivial(self) -> bool:
        """True for ``r(X,Y) <= r(X,Y)``."""
        return self.length == 1 and self.body[0] == BodyAtom(self.head, False)


@dataclass(frozen=True)
class TreeRule:
    base: ChainRule
    branches: tuple[BranchAtom, ...]
    stats: RuleStats | None = None

    def __post_init__(self):
        base = replace(self.base, stats=None)
        object.__setattr__(self, "base", base)
        branches = tuple(sorted(set(self.branches), key=lambda b: b.sort_key))
        if not branches:
            raise ValueError("a tree rule needs at least one branch")
        if len(branches) != len(self.branches):
            raise ValueError("duplicate branch atoms")
        for b in branches:
            if b.anchor > base.length:
                raise ValueError(f"branch anchor x_{b.anchor} beyond rule length {base.length}")
            if duplicates_body_atom(base, b):
                raise ValueError("branch repeats a body atom")
        object.__setattr__(self, "branches", branches)

    @property
    def head(self) -> int:
        return self.base.head

    @property
    def body(self) -> tuple[BodyAtom, ...]:
        return self.base.body

    @property
    def length(self) -> int:
        return self.base.length

    @property
    def kind(self) -> str:
        kinds = {b.kind for b in self.branches}
        return kinds.pop() if len(kinds) == 1 else "TREE"

    @property
    def sc(self) -> float | None:
        return None if self.stats is None else self.stats.sc

    def with_stats(self, stats: RuleStats) -> "TreeRule":
        return replace(self, stats=stats)

    def structure(self):
        return (self.head, self.body, self.branches)


Rule = ChainRule | TreeRule


def duplicates_body_atom(rule: ChainRule, branch: BranchAtom) -> bool:
    """Whether a QRY branch restates body atom ``r_0(x_0, x_1)``.

    Only QRY atoms link two path variables, and the only body atom touching
    ``x_0`` is the first one.
    """
    if branch.kind != QRY or branch.anchor != 1:
        return False
    return rule.body[0] == BodyAtom(branch.relation, branch.inverse)


# text codec -------------------------------------------------------------


def variable_name(i: int, n: int) -> str:
    if i == 0:
        return QUERY_VAR
    if i == n:
        return TARGET_VAR
    return _INNER_VARS[i - 1]


def _atom(rel: str, a: str, b: str) -> str:
    return f"{rel}({a},{b})"


def rule_text(rule: Rule, kg) -> str:
    """Rule text without statistics; doubles as the rule's signature."""
    rel = kg.relations.label
    n = rule.length
    parts = []
    for i, atom in enumerate(rule.body):
        a, b = variable_name(i, n), variable_name(i + 1, n)
        parts.append(_atom(rel(atom.relation), b, a) if atom.inverse else _atom(rel(atom.relation), a, b))
    parts.extend(branch_text(br, n, kg) for br in rule.branches)
    head = _atom(rel(rule.head), QUERY_VAR, TARGET_VAR)
    return f"{head} <= {', '.join(parts)}"


def branch_text(br: BranchAtom, n: int, kg) -> str:
    v = variable_name(br.anchor, n)
    if br.kind == ENT:
        return _atom("is", kg.entities.label(br.entity), v)
    other = AUX_VAR if br.kind == AUX else QUERY_VAR
    r = kg.relations.label(br.relation)
    return _atom(r, v, other) if br.inverse else _atom(r, other, v)


def format_sc(sc: float | None) -> str:
    return "nan" if sc is None else f"{sc:.6f}"


def serialize_rule(rule: Rule, kg) -> str:
    text = rule_text(rule, kg)
    if rule.stats is None:
        return text
    s = rule.stats
    return f"{format_sc(s.sc)}\t{s.support}\t{s.body_count}\t{text}"


def rule_seed(signature: str) -> int:
    """Stable 32-bit integer derived from a rule signature."""
    return int.from_bytes(hashlib.sha256(signature.encode("utf-8")).digest()[:4], "little")


def _split_atoms(text: str) -> list[tuple[str, str]]:
    """Split ``r(a,b), s(c,d)`` into ``[(r, "a,b"), (s, "c,d")]``.

    Parentheses inside labels are tolerated as long as they are balanced.
    """
    atoms = []
    text = text.strip()
    i, n = 0, len(text)
    while i < n:
        while i < n and text[i] in " ,":
            i += 1
        if i >= n:
            break
        open_at = text.find("(", i)
        if open_at < 0:
            raise RuleParseError(f"malformed atom near {text[i:]!r}")
        name = text[i:open_at].strip()
        depth, j = 0, open_at
        while j < n:
            if text[j] == "(":
                depth += 1
            elif text[j] == ")":
                depth -= 1
                rest = text[j + 1 :].lstrip()
                if depth == 0 and (not rest or rest.startswith(",")):
                    break
            j += 1
        if j >= n or not name:
            raise RuleParseError(f"malformed atom near {text[i:]!r}")
        atoms.append((name, text[open_at + 1 : j]))
        i = j + 1
    return atoms


def _is_var(term: str) -> bool:
    return bool(_VAR_RE.fullmatch(term))


def _split_args(args: str) -> tuple[str, str]:
    if "," not in args:
        raise RuleParseError(f"atom needs two arguments: ({args})")
    first, rest = args.split(",", 1)
    if _is_var(first.strip()):
        a, b = first, rest
    else:
        # constant first: the last comma separates it from the variable
        a, b = args.rsplit(",", 1)
    return a.strip(), b.strip()


def _find_path(edges, start, goal, limit):
    """Earliest-atoms-first simple path search; returns atom indices."""

    def dfs(cur, visited, used):
        if len(used) > limit:
            return None
        for k, (a, b) in enumerate(edges):
            if k in used or cur not in (a, b):
                continue
            nxt = b if a == cur else a
            if nxt in visited:
                continue
            if nxt == goal:
                return used + [k]
            found = dfs(nxt, visited | {nxt}, used + [k])
            if found is not None:
                return found
        return None

    return dfs(start, {start}, [])


def parse_rule(line: str, kg) -> Rule:
    fields = line.strip("\r\n").split("\t")
    text = fields[-1].strip()
    meta = [f.strip() for f in fields[:-1]]
    stats = None
    if len(meta) == 3:
        try:
            support, body_count = int(meta[1]), int(meta[2])
            stats = RuleStats(support, body_count)
        except ValueError as exc:
            raise RuleParseError(f"bad rule statistics {meta!r}") from exc
    elif len(meta) not in (0, 1):
        raise RuleParseError(f"unexpected number of fields ({len(fields)})")
    elif meta:
        try:
            float(meta[0])
        except ValueError as exc:
            raise RuleParseError(f"bad confidence field {meta[0]!r}") from exc

    if "<=" not in text:
        raise RuleParseError(f"missing '<=' in {text!r}")
    head_text, body_text = text.split("<=", 1)
    head_atoms = _split_atoms(head_text)
    if len(head_atoms) != 1:
        raise RuleParseError("rules have exactly one head atom")
    head_rel, head_args = head_atoms[0]
    hx, hy = _split_args(head_args)
    if not (_is_var(hx) and _is_var(hy)) or hx == hy or AUX_VAR in (hx, hy):
        raise RuleParseError(f"head must link two distinct variables: {head_text.strip()}")

    ents, auxes, links = [], [], []
    for name, args in _split_atoms(body_text):
        a, b = _split_args(args)
        if name == "is" and not _is_var(a) and _is_var(b):
            ents.append((a, b))
        elif not (_is_var(a) and _is_var(b)):
            raise RuleParseError(f"constants are only allowed in is(...): {name}({args})")
        elif AUX_VAR in (a, b):
            if a == b:
                raise RuleParseError(f"malformed auxiliary atom {name}({args})")
            auxes.append((name, a, b))
        else:
            links.append((name, a, b))

    path = _find_path([(a, b) for _, a, b in links], hx, hy, MAX_LENGTH)
    if path is None:
        raise RuleParseError(f"body does not connect {hx} to {hy} within {MAX_LENGTH} atoms")
    body, position, cur = [], {hx: 0}, hx
    for k in path:
        name, a, b = links[k]
        inverse = b == cur
        cur = a if inverse else b
        position[cur] = len(body) + 1
        body.append(BodyAtom(_relation(kg, name), inverse))

    def anchor_of(var):
        i = position.get(var)
        if i is None:
            raise RuleParseError(f"variable {var} is not on the rule path")
        if i == 0:
            raise RuleParseError("branches may not anchor on the query variable")
        return i

    branches = []
    for k, (name, a, b) in enumerate(links):
        if k in path:
            continue
        if a == hx:
            branches.append(BranchAtom(QRY, anchor_of(b), _relation(kg, name), False))
        elif b == hx:
            branches.append(BranchAtom(QRY, anchor_of(a), _relation(kg, name), True))
        else:
            raise RuleParseError(f"atom {name}({a},{b}) is neither on the path nor a branch")
    for name, a, b in auxes:
        if a == AUX_VAR:
            branches.append(BranchAtom(AUX, anchor_of(b), _relation(kg, name), False))
        else:
            branches.append(BranchAtom(AUX, anchor_of(a), _relation(kg, name), True))
    for const, var in ents:
        ent = kg.entities.get(const)
        if ent is None:
            raise UnknownLabelError(f"unknown entity {const!r}")
        branches.append(BranchAtom(ENT, anchor_of(var), entity=ent))

    head = _relation(kg, head_rel)
    try:
        chain = ChainRule(head, tuple(body))
        if not branches:
            return chain.with_stats(stats) if stats else chain
        return TreeRule(chain, tuple(branches), stats)
    except ValueError as exc:
        raise RuleParseError(str(exc)) from exc


def _relation(kg, label: str) -> int:
    r = kg.relations.get(label)
    if r is None:
        raise UnknownLabelError(f"unknown relation {label!r}")
    return r


# files ------------------------------------------------------------------


def format_header(header: dict) -> str:
    return "".join(f"# {k}: {v}\n" for k, v in header.items())


def write_rules(path, rules, kg, header: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if header:
            fh.write(format_header(header))
        for rule in rules:
            fh.write(serialize_rule(rule, kg) + "\n")


def _rule_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip() and not line.lstrip().startswith("#"):
                yield lineno, line


def read_rules(path, kg) -> list[Rule]:
    """Read a rule file strictly; any bad line raises with its line number."""
    rules = []
    for lineno, line in _rule_lines(path):
        try:
            rules.append(parse_rule(line, kg))
        except RuleParseError as exc:
            raise RuleParseError(f"{path}:{lineno}: {exc}") from exc
    return rules


def import_external_rules(path, kg) -> list[ChainRule]:
    """Read chain rules exported by another miner, skipping what does not fit.

    Lines with unknown labels, unsupported shapes or branch atoms are
    skipped and counted in a single warning.
    """
    if not Path(path).is_file():
        raise OSError(f"cannot read rule file {path}")
    rules, skipped = [], 0
    for lineno, line in _rule_lines(path):
        try:
            rule = parse_rule(line, kg)
        except RuleParseError as exc:
            log.debug("skipping %s:%d: %s", path, lineno, exc)
            skipped += 1
            continue
        if isinstance(rule, TreeRule):
            skipped += 1
            continue
        rules.append(rule)
    if skipped:
        log.warning("skipped %d of %d rules from %s", skipped, skipped + len(rules), path)
    return rules
