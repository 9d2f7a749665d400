import numpy as np
import pytest

from treerule.kg import KGLoadError, KnowledgeGraph, load_split, resolve_kg_dir

from oracles import random_triples


def write_split(tmp_path, train, valid=(), test=()):
    for name, rows in (("train", train), ("valid", valid), ("test", test)):
        (tmp_path / f"{name}.txt").write_text("".join("\t".join(r) + "\n" for r in rows), encoding="utf-8")
    return tmp_path


def test_single_fact_graph(tmp_path):
    kg = load_split(write_split(tmp_path, [("alice", "live", "italy")]))
    assert kg.num_entities == 2 and kg.num_relations == 1
    live = kg.relations.id("live")
    assert kg.relation_matrix(live).nnz == 1
    alice, italy = kg.entities.id("alice"), kg.entities.id("italy")
    assert kg.relation_matrix(live).row(alice).tolist() == [italy]
    assert kg.relation_matrix(live, inverse=True).row(italy).tolist() == [alice]


def test_duplicates_collapse(tmp_path):
    kg = load_split(write_split(tmp_path, [("a", "r", "b"), ("a", "r", "b")]))
    assert len(kg.train) == 1
    assert kg.relation_matrix(0).to_dense().max() == 1


def test_only_train_populates_adjacency(tmp_path):
    kg = load_split(write_split(tmp_path, [("a", "r", "b")], valid=[("b", "r", "c")], test=[("c", "s", "d")]))
    assert kg.num_entities == 4 and kg.num_relations == 2
    assert sum(m.nnz for m in kg.adjacency) == 1
    d = kg.entities.id("d")
    assert all(m.row(d).size == 0 for m in kg.adjacency)


def test_whitespace_trimmed(tmp_path):
    (tmp_path / "train.txt").write_text(" a \tr\t b\n", encoding="utf-8")
    (tmp_path / "valid.txt").write_text("", encoding="utf-8")
    (tmp_path / "test.txt").write_text("", encoding="utf-8")
    kg = load_split(tmp_path)
    assert list(kg.entities) == ["a", "b"]


@pytest.mark.parametrize("missing", ["train", "valid", "test"])
def test_missing_file_named(tmp_path, missing):
    write_split(tmp_path, [("a", "r", "b")])
    (tmp_path / f"{missing}.txt").unlink()
    with pytest.raises(KGLoadError, match=f"{missing}.txt"):
        load_split(tmp_path)


def test_malformed_line_reports_number(tmp_path):
    write_split(tmp_path, [("a", "r", "b")])
    (tmp_path / "train.txt").write_text("a\tr\tb\nbroken line\n", encoding="utf-8")
    with pytest.raises(KGLoadError, match=":2:"):
        load_split(tmp_path)


def test_empty_train(tmp_path):
    write_split(tmp_path, [], valid=[("a", "r", "b")])
    with pytest.raises(KGLoadError, match="empty"):
        load_split(tmp_path)


def test_relation_out_of_range():
    kg = KnowledgeGraph.from_triples([("a", "r", "b")])
    with pytest.raises(IndexError):
        kg.relation_matrix(1)


@pytest.mark.parametrize("seed", range(5))
def test_adjacency_equals_train_set_by_enumeration(seed):
    rng = np.random.default_rng(seed)
    raw = random_triples(rng, 20, 4, 200)
    kg = KnowledgeGraph.from_triples([(f"e{h}", f"r{r}", f"e{t}") for h, r, t in raw])
    facts = {(kg.entities.id(f"e{h}"), kg.relations.id(f"r{r}"), kg.entities.id(f"e{t}")) for h, r, t in raw}
    n = kg.num_entities
    for r in range(kg.num_relations):
        dense = kg.relation_matrix(r).to_dense()
        dense_t = kg.relation_matrix(r, inverse=True).to_dense()
        np.testing.assert_array_equal(dense_t, dense.T)
        for i in range(n):
            for j in range(n):
                assert bool(dense[i, j]) == ((i, r, j) in facts)


def test_interning_round_trip(umls):
    for label in umls.entities:
        assert umls.entities.label(umls.entities.id(label)) == label
    for label in umls.relations:
        assert umls.relations.label(umls.relations.id(label)) == label


def test_umls_counts(umls_dir):
    # independent count of distinct labels straight from the files
    ents, rels = set(), set()
    for split in ("train", "valid", "test"):
        for line in (umls_dir / f"{split}.txt").read_text(encoding="utf-8").splitlines():
            h, r, t = line.split("\t")
            ents.update((h, t))
            rels.add(r)
    kg = load_split(umls_dir)
    assert (len(ents), len(rels)) == (135, 46)
    assert (kg.num_entities, kg.num_relations) == (135, 46)


def test_resolve_kg_dir_uses_env(tmp_path, monkeypatch):
    (tmp_path / "toy").mkdir()
    monkeypatch.setenv("TREERULE_DATA", str(tmp_path))
    assert resolve_kg_dir("toy") == tmp_path / "toy"
