"""Refinement of chain-like Horn rules into tree-like rules over sparse KG matrices."""
from treerule.kg import KnowledgeGraph, load_split
from treerule.rules import BodyAtom, BranchAtom, ChainRule, RuleStats, TreeRule, parse_rule, serialize_rule

__version__ = "0.1.0"

__all__ = [
    "BodyAtom",
    "BranchAtom",
    "ChainRule",
    "KnowledgeGraph",
    "RuleStats",
    "TreeRule",
    "load_split",
    "parse_rule",
    "serialize_rule",
]
