"""Command line driver.

    treerule mine     --kg-dir data/umls --out chain.rules
    treerule refine   --kg-dir data/umls --rules chain.rules --out tree.rules --report tree.tsv
    treerule eval-sc  --kg-dir data/umls --rules chain.rules --rules tree.rules
    treerule eval-lp  --kg-dir data/umls --rules chain.rules --rules tree.rules --mode union
    treerule stats    --kg-dir data/umls

Option values come from the command line, then a ``--config`` JSON file,
then built-in defaults. Every file written starts with a ``#`` header that
records the effective settings (minus ``--threads``, which never changes
results). Exit status: 0 ok, 1 usage error, 2 data error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from treerule.evaluator import DENSITY_FORMULA, DENSITY_NOTE, avg_sc, edge_density, format_sc_summary
from treerule.kg import KGLoadError, load_split, resolve_kg_dir
from treerule.linkpred import MODES, evaluate, explanation_lines, format_report, select_rules
from treerule.miner import MinerConfig, mine
from treerule.refiner import RefineConfig, refine_rules, report_rows
from treerule.rules import KINDS, RuleParseError, format_header, import_external_rules, read_rules, write_rules

log = logging.getLogger("treerule")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

DEFAULTS = {
    "batch": 100,
    "topk": 5,
    "beta": "auto",
    "types": "aux,ent,qry",
    "max_len": 3,
    "min_support": 2,
    "min_sc": 0.01,
    "max_rules_per_head": 200,
    "sample_facts": None,
    "mode": "union",
    "split": "test",
    "raw": False,
    "threads": 1,
    "seed": 37,
}

# settings that shape each command's output; recorded in file headers
HEADER_KEYS = {
    "mine": ("max_len", "min_support", "min_sc", "max_rules_per_head", "sample_facts", "seed"),
    "refine": ("batch", "topk", "beta", "types", "seed"),
    "eval-sc": (),
    "eval-lp": ("mode", "split", "raw"),
    "stats": (),
}

# edge densities reported alongside the benchmarks
PUBLISHED_DENSITY = {"fb15k-237": 2.59e-03, "wn18rr": 1.06e-04, "umls": 2.20e-01, "yago3-10": 1.42e-04}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add(p, *flags, **kw):
    kw.setdefault("default", None)
    p.add_argument(*flags, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="treerule", description="Refine chain rules into tree rules on a knowledge graph.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, rules_in=False, out=False, report=False):
        _add(p, "--kg-dir", required=True, help="directory with train.txt, valid.txt, test.txt")
        _add(p, "--config", help="JSON file with option defaults")
        _add(p, "--threads", type=int, help="worker threads (results do not depend on it)")
        _add(p, "--seed", type=int)
        if rules_in:
            _add(p, "--rules", action="append", required=True, help="rule file (repeatable)")
        if out:
            _add(p, "--out", required=True, help="output rule file")
        if report:
            _add(p, "--report", help="TSV report path")

    p = sub.add_parser("mine", help="mine chain rules by bidirectional search")
    common(p, out=True)
    _add(p, "--max-len", type=int)
    _add(p, "--min-support", type=int)
    _add(p, "--min-sc", type=float)
    _add(p, "--max-rules-per-head", type=int, help="keep the best-supported rules per head (0: no cap)")
    _add(p, "--sample-facts", type=int, help="search from at most this many facts per relation")

    p = sub.add_parser("refine", help="refine chain rules into tree rules")
    common(p, rules_in=True, out=True, report=True)
    _add(p, "--batch", type=int, help="sampled query groundings per rule (b)")
    _add(p, "--topk", type=int, help="branches kept per variable (k)")
    _add(p, "--beta", help="'auto' (rule confidence) or a float in (0, 1)")
    _add(p, "--types", help="comma list of aux,ent,qry")
    p.add_argument("--lenient", action="store_true", help="skip unreadable rule lines instead of failing")

    p = sub.add_parser("eval-sc", help="average standard confidence per rule kind")
    common(p, rules_in=True, report=True)

    p = sub.add_parser("eval-lp", help="filtered link prediction")
    common(p, rules_in=True, report=True)
    _add(p, "--mode", choices=MODES)
    _add(p, "--split", choices=("test", "valid"))
    p.add_argument("--raw", action="store_true", default=None, help="unfiltered ranks")
    _add(p, "--explain", help="write per-query top candidates and firing rules here")

    p = sub.add_parser("stats", help="graph size and edge density")
    common(p)
    return parser


def effective_config(args) -> dict:
    """Merge CLI values over the config file over :data:`DEFAULTS`."""
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg.update(loaded)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def parse_beta(value) -> float | None:
    if value in (None, "auto"):
        return None
    try:
        beta = float(value)
    except (TypeError, ValueError):
        raise UsageError(f"--beta must be 'auto' or a number, got {value!r}") from None
    if not 0 < beta < 1:
        raise UsageError("--beta must lie strictly between 0 and 1")
    return beta


def parse_types(value) -> tuple[str, ...]:
    kinds = tuple(t.strip().upper() for t in str(value).split(",") if t.strip())
    bad = [k for k in kinds if k not in KINDS]
    if bad or not kinds:
        raise UsageError(f"--types takes a comma list of aux,ent,qry, got {value!r}")
    return kinds


def _header(command, cfg, kg_dir, **extra) -> dict:
    head = {"command": command, "kg_dir": kg_dir}
    head.update({k: cfg[k] for k in HEADER_KEYS[command]})
    head.update(extra)
    return head


def _write_text(path, header: dict, lines) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_header(header))
        for line in lines:
            fh.write(line + "\n")


def _load_rules(paths, kg, lenient=False):
    rules = []
    for path in paths:
        rules.extend(import_external_rules(path, kg) if lenient else read_rules(path, kg))
    return rules


def cmd_mine(args, cfg, kg) -> None:
    cap = cfg["max_rules_per_head"] or None
    try:
        config = MinerConfig(
            max_len=cfg["max_len"],
            min_support=cfg["min_support"],
            min_sc=cfg["min_sc"],
            max_rules_per_head=cap,
            sample_facts=cfg["sample_facts"],
            seed=cfg["seed"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    rules = mine(kg, config, threads=cfg["threads"])
    write_rules(args.out, rules, kg, _header("mine", cfg, args.kg_dir))
    heads = len({r.head for r in rules})
    print(f"mined {len(rules)} chain rules over {heads} head relations -> {args.out}")


def cmd_refine(args, cfg, kg) -> None:
    try:
        config = RefineConfig(
            batch=cfg["batch"],
            top_k=cfg["topk"],
            beta=parse_beta(cfg["beta"]),
            kinds=parse_types(cfg["types"]),
            seed=cfg["seed"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    chain = [r for r in _load_rules(args.rules, kg, args.lenient) if r.kind == "CHAIN"]
    refinements, skipped = refine_rules(kg, chain, config, threads=cfg["threads"])
    header = _header("refine", cfg, args.kg_dir, rules=",".join(args.rules))
    write_rules(args.out, [r.rule for r in refinements], kg, header)
    if args.report:
        cols = ("signature", "base_sc", "branch", "kind", "sample_score", "exact_sc")
        rows = ("\t".join(map(str, row)) for row in report_rows(kg, refinements))
        _write_text(args.report, header, ["\t".join(cols), *rows])
    improved = len({r.base for r in refinements})
    print(
        f"refined {improved} of {len(chain)} chain rules into {len(refinements)} tree rules"
        f" ({len(skipped)} skipped) -> {args.out}"
    )


def cmd_eval_sc(args, cfg, kg) -> None:
    lines = []
    for path in args.rules:
        report = avg_sc(kg, read_rules(path, kg))
        print(format_sc_summary(report, title=str(path)))
        lines.extend("\t".join((str(path), *map(str, row))) for row in report.rows(kg))
    if args.report:
        header = _header("eval-sc", cfg, args.kg_dir, rules=",".join(args.rules))
        _write_text(args.report, header, ["file\tkind\tsc\tsupport\tbody_count\trule", *lines])


def cmd_eval_lp(args, cfg, kg) -> None:
    rules = select_rules(_load_rules(args.rules, kg), cfg["mode"])
    report = evaluate(
        kg, rules, split=cfg["split"], filtered=not cfg["raw"], threads=cfg["threads"], explain=bool(args.explain)
    )
    title = f"{cfg['mode']} rules ({len(rules)}), {'raw' if cfg['raw'] else 'filtered'} {cfg['split']}"
    print(format_report(report, title))
    header = _header("eval-lp", cfg, args.kg_dir, rules=",".join(args.rules))
    if args.report:
        rows = [("all", report), *report.by_direction.items()]
        _write_text(
            args.report,
            header,
            ["scope\tmrr\thits1\thits3\thits10\tcoverage\tqueries"]
            + [
                f"{name}\t{m.mrr:.4f}\t{m.hits1:.4f}\t{m.hits3:.4f}\t{m.hits10:.4f}\t{m.coverage:.4f}\t{m.query_count}"
                for name, m in rows
            ],
        )
    if args.explain:
        _write_text(args.explain, header, explanation_lines(kg, report))


def stats_lines(kg, kg_dir) -> list[str]:
    density = edge_density(kg)
    lines = [
        f"entities\t{kg.num_entities}",
        f"relations\t{kg.num_relations}",
        f"train/valid/test\t{len(kg.train)}/{len(kg.valid)}/{len(kg.test)}",
        f"density\t{density:.4e}",
        f"formula\t{DENSITY_FORMULA}",
    ]
    published = PUBLISHED_DENSITY.get(Path(kg_dir).name.lower().replace("_", "-"))
    if published is not None:
        lines.append(f"published density\t{published:.2e}")
    lines.append(f"note\t{DENSITY_NOTE}")
    return lines


def cmd_stats(args, cfg, kg) -> None:
    print("\n".join(stats_lines(kg, args.kg_dir)))


COMMANDS = {"mine": cmd_mine, "refine": cmd_refine, "eval-sc": cmd_eval_sc, "eval-lp": cmd_eval_lp, "stats": cmd_stats}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = effective_config(args)
        if cfg["threads"] < 1:
            raise UsageError("--threads must be at least 1")
        kg = load_split(resolve_kg_dir(args.kg_dir))
        COMMANDS[args.command](args, cfg, kg)
    except UsageError as exc:
        print(f"treerule: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (KGLoadError, RuleParseError, OSError) as exc:
        print(f"treerule: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
