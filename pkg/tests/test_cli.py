import json

import numpy as np
import pytest

from treerule.cli import main

from oracles import TOY_TRIPLES


@pytest.fixture
def kg_dir(tmp_path):
    rng = np.random.default_rng(12)
    rows = sorted({(f"e{h}", f"r{r}", f"e{t}") for h, r, t in zip(*(rng.integers(0, k, 500) for k in (40, 4, 40)))})
    rng.shuffle(rows)
    d = tmp_path / "rand"
    d.mkdir()
    for name, part in (("train", rows[:400]), ("valid", rows[400:440]), ("test", rows[440:])):
        (d / f"{name}.txt").write_text("".join("\t".join(r) + "\n" for r in part), encoding="utf-8")
    return d


@pytest.fixture
def toy_dir(tmp_path):
    d = tmp_path / "toy"
    d.mkdir()
    (d / "train.txt").write_text("".join("\t".join(t) + "\n" for t in TOY_TRIPLES), encoding="utf-8")
    (d / "valid.txt").write_text("", encoding="utf-8")
    (d / "test.txt").write_text("bob\tspeak\titalian\n", encoding="utf-8")
    return d


def run(*args):
    return main([str(a) for a in args])


def body(path):
    return [line for line in path.read_text().splitlines() if not line.startswith("#")]


def test_mine_refine_eval_round(kg_dir, tmp_path, capsys):
    chain, tree, report = tmp_path / "chain.rules", tmp_path / "tree.rules", tmp_path / "tree.tsv"
    assert run("mine", "--kg-dir", kg_dir, "--out", chain, "--max-len", 2, "--min-support", 1) == 0
    assert chain.read_text().startswith("# command: mine\n")
    assert body(chain)
    assert run("refine", "--kg-dir", kg_dir, "--rules", chain, "--out", tree, "--report", report) == 0
    assert "tree rules" in capsys.readouterr().out
    header = report.read_text().splitlines()
    assert [h for h in header if not h.startswith("#")][0].split("\t") == [
        "signature", "base_sc", "branch", "kind", "sample_score", "exact_sc",
    ]
    for row in body(report)[1:]:
        fields = row.split("\t")
        assert float(fields[5]) > float(fields[1])
    assert run("eval-sc", "--kg-dir", kg_dir, "--rules", chain, "--rules", tree) == 0
    assert "CHAIN" in capsys.readouterr().out
    lp = tmp_path / "lp.tsv"
    assert run("eval-lp", "--kg-dir", kg_dir, "--rules", chain, "--rules", tree, "--mode", "tree", "--report", lp) == 0
    assert "# mode: tree" in lp.read_text()


def test_toy_refinement_through_cli(toy_dir, tmp_path):
    chain, tree = tmp_path / "chain.rules", tmp_path / "tree.rules"
    chain.write_text("speak(X,Y) <= live(X,A), lang(A,Y)\n")
    assert run("refine", "--kg-dir", toy_dir, "--rules", chain, "--out", tree) == 0
    assert any(line.endswith("bornIn(X,A)") and line.startswith("1.000000\t1\t1\t") for line in body(tree))
    explain = tmp_path / "explain.txt"
    assert run("eval-lp", "--kg-dir", toy_dir, "--rules", tree, "--explain", explain) == 0
    assert "query\tbob speak ?" in explain.read_text()


def test_types_and_beta_overrides(kg_dir, tmp_path):
    chain, tree = tmp_path / "chain.rules", tmp_path / "tree.rules"
    run("mine", "--kg-dir", kg_dir, "--out", chain, "--max-len", 2, "--min-support", 1)
    assert run("refine", "--kg-dir", kg_dir, "--rules", chain, "--out", tree, "--types", "ent", "--beta", "0.5") == 0
    text = tree.read_text()
    assert "# beta: 0.5\n" in text and "# types: ent\n" in text
    assert all(", is(" in line for line in body(tree))


def test_config_precedence(kg_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"max_len": 1, "min_sc": 0.3}))
    out = tmp_path / "chain.rules"
    assert run("mine", "--kg-dir", kg_dir, "--out", out, "--config", cfg, "--min-sc", 0.2) == 0
    text = out.read_text()
    assert "# max_len: 1\n" in text and "# min_sc: 0.2\n" in text
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nonsense": 1}))
    assert run("mine", "--kg-dir", kg_dir, "--out", out, "--config", bad) == 1


@pytest.mark.parametrize(
    "args",
    [
        ("mine", "--out", "x.rules"),  # missing --kg-dir
        ("refine", "--kg-dir", "d", "--rules", "r", "--out", "o", "--beta", "2"),
        ("refine", "--kg-dir", "d", "--rules", "r", "--out", "o", "--types", "foo"),
        ("eval-lp", "--kg-dir", "d", "--rules", "r", "--mode", "both"),
        ("frobnicate",),
    ],
)
def test_usage_errors(args, kg_dir, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "d").symlink_to(kg_dir)
    (tmp_path / "r").write_text("r0(X,Y) <= r1(X,Y)\n")
    with pytest.raises(SystemExit) as exc:
        code = run(*args)
        raise SystemExit(code)
    assert exc.value.code == 1


def test_data_errors(kg_dir, tmp_path, capsys):
    assert run("stats", "--kg-dir", tmp_path / "missing") == 2
    bad = tmp_path / "bad.rules"
    bad.write_text("r0(X,Y) <= r1(X,Y)\nr0(X,Y) <=\n")
    assert run("refine", "--kg-dir", kg_dir, "--rules", bad, "--out", tmp_path / "o") == 2
    assert ":2:" in capsys.readouterr().err


def test_stats(toy_dir, capsys):
    assert run("stats", "--kg-dir", toy_dir) == 0
    out = capsys.readouterr().out
    assert "density\t" in out and "formula\t" in out and "note\t" in out


def test_outputs_identical_across_threads(kg_dir, tmp_path):
    outs = {}
    shared = tmp_path / "chain.rules"
    run("mine", "--kg-dir", kg_dir, "--out", shared, "--max-len", 2)
    for threads in (1, 3):
        d = tmp_path / f"t{threads}"
        d.mkdir()
        run("mine", "--kg-dir", kg_dir, "--out", d / "chain.rules", "--max-len", 2, "--threads", threads)
        run("refine", "--kg-dir", kg_dir, "--rules", shared, "--out", d / "tree.rules",
            "--report", d / "tree.tsv", "--threads", threads)
        outs[threads] = [(d / n).read_bytes() for n in ("chain.rules", "tree.rules", "tree.tsv")]
    assert outs[1] == outs[3]
    assert outs[1][0] == shared.read_bytes()
