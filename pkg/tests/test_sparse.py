import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from treerule import sparse
from treerule.sparse import (
    ShapeError,
    SparseBinaryMatrix,
    column_counts,
    hop,
    intersection_size,
    mask,
    mask_columns,
    mask_complement,
    norm1,
    row_sum_vector,
)

from oracles import toy_kg


def rand_dense(rng, shape, p=0.2):
    return (rng.random(shape) < p).astype(np.uint8)


def dense_hop(v, m):
    return ((v.astype(int) @ m.astype(int)) > 0).astype(np.uint8)


class TestHop:
    def test_one_hot_through_toy_relation(self, backend):
        kg = toy_kg()
        live = kg.relation_matrix(kg.relations.id("live"))
        alice = SparseBinaryMatrix.one_hot([kg.entities.id("alice")], kg.num_entities)
        out = hop(alice, live)
        assert out.row(0).tolist() == [kg.entities.id("italy")]

    def test_empty_row_annihilates(self, backend):
        rng = np.random.default_rng(0)
        m = SparseBinaryMatrix.from_dense(rand_dense(rng, (10, 10), 0.5))
        out = hop(SparseBinaryMatrix.empty(3, 10), m)
        assert out.nnz == 0 and out.shape == (3, 10)

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_dense_boolean_product(self, backend, seed):
        rng = np.random.default_rng(seed)
        m = rand_dense(rng, (30, 30))
        v = rand_dense(rng, (5, 30), 0.15)
        out = hop(SparseBinaryMatrix.from_dense(v), SparseBinaryMatrix.from_dense(m))
        np.testing.assert_array_equal(out.to_dense(), dense_hop(v, m))

    def test_rectangular(self, backend):
        rng = np.random.default_rng(3)
        m = rand_dense(rng, (12, 7), 0.3)
        v = rand_dense(rng, (4, 12), 0.3)
        out = hop(SparseBinaryMatrix.from_dense(v), SparseBinaryMatrix.from_dense(m))
        np.testing.assert_array_equal(out.to_dense(), dense_hop(v, m))

    def test_rows_sorted_and_unique(self, backend):
        rng = np.random.default_rng(5)
        m = SparseBinaryMatrix.from_dense(rand_dense(rng, (40, 40), 0.3))
        v = SparseBinaryMatrix.from_dense(rand_dense(rng, (8, 40), 0.5))
        out = hop(v, m)
        for i in range(out.shape[0]):
            row = out.row(i)
            assert np.all(np.diff(row) > 0)

    def test_shape_mismatch(self, backend):
        with pytest.raises(ShapeError):
            hop(SparseBinaryMatrix.empty(2, 5), SparseBinaryMatrix.empty(4, 4))


class TestMasks:
    def test_idempotent_and_empty(self, backend):
        rng = np.random.default_rng(1)
        a = SparseBinaryMatrix.from_dense(rand_dense(rng, (6, 20), 0.4))
        empty = SparseBinaryMatrix.empty(6, 20)
        assert mask(a, a) == a
        assert mask(a, empty).nnz == 0
        assert mask_complement(a, empty) == a
        assert mask_complement(a, a).nnz == 0

    @pytest.mark.parametrize("seed", range(10))
    def test_match_dense(self, backend, seed):
        rng = np.random.default_rng(seed)
        a, b = rand_dense(rng, (7, 25), 0.4), rand_dense(rng, (7, 25), 0.4)
        sa, sb = SparseBinaryMatrix.from_dense(a), SparseBinaryMatrix.from_dense(b)
        np.testing.assert_array_equal(mask(sa, sb).to_dense(), a * b)
        np.testing.assert_array_equal(mask_complement(sa, sb).to_dense(), a * (1 - b))
        assert intersection_size(sa, sb) == int((a * b).sum())
        keep = rng.integers(0, 2, 25)
        np.testing.assert_array_equal(mask_columns(sa, keep).to_dense(), a * keep[None, :])

    def test_shape_mismatch(self, backend):
        with pytest.raises(ShapeError):
            mask(SparseBinaryMatrix.empty(2, 5), SparseBinaryMatrix.empty(3, 5))
        with pytest.raises(ShapeError):
            mask_complement(SparseBinaryMatrix.empty(2, 5), SparseBinaryMatrix.empty(2, 4))


class TestReductions:
    def test_column_counts(self):
        g = SparseBinaryMatrix.from_rows([[2]], 4)
        assert column_counts(g).tolist() == [0, 0, 1, 0]
        b = 7
        g = SparseBinaryMatrix.from_rows([[1]] * b, 3)
        assert column_counts(g)[1] == b

    def test_row_sum_vector_toy(self):
        kg = toy_kg()
        counts = row_sum_vector(kg.relation_matrix(kg.relations.id("live")))
        assert counts[kg.entities.id("alice")] == 1
        assert counts[kg.entities.id("italy")] == 0
        assert row_sum_vector(SparseBinaryMatrix.empty(4, 4)).tolist() == [0, 0, 0, 0]

    def test_norm1(self):
        assert norm1(SparseBinaryMatrix.empty(3, 3)) == 0
        assert norm1(SparseBinaryMatrix.one_hot([0, 1, 1, 2], 3)) == 4

    @pytest.mark.parametrize("seed", range(5))
    def test_reductions_match_dense(self, seed):
        rng = np.random.default_rng(seed)
        d = rand_dense(rng, (9, 13), 0.3)
        g = SparseBinaryMatrix.from_dense(d)
        np.testing.assert_array_equal(column_counts(g), d.sum(axis=0))
        np.testing.assert_array_equal(row_sum_vector(g), d.sum(axis=1))
        assert norm1(g) == d.sum()


def test_transpose_and_take_rows():
    rng = np.random.default_rng(9)
    d = rand_dense(rng, (11, 6), 0.4)
    g = SparseBinaryMatrix.from_dense(d)
    np.testing.assert_array_equal(g.T.to_dense(), d.T)
    np.testing.assert_array_equal(g.take_rows([4, 0, 4]).to_dense(), d[[4, 0, 4]])


def test_arrays_are_read_only():
    g = SparseBinaryMatrix.one_hot([1, 2], 3)
    with pytest.raises(ValueError):
        g.indices[0] = 0


def test_backends_agree_on_large_random_batch():
    if "cython" not in sparse.available_backends():
        pytest.skip("compiled kernels not built")
    rng = np.random.default_rng(11)
    m = SparseBinaryMatrix.from_dense(rand_dense(rng, (300, 300), 0.05))
    v = SparseBinaryMatrix.from_dense(rand_dense(rng, (100, 300), 0.05))
    results = {}
    for name in ("cython", "python"):
        sparse.use_backend(name)
        h = hop(v, m)
        results[name] = (h, mask(h, v), mask_complement(h, v), intersection_size(h, v))
    sparse.use_backend("cython")
    assert results["cython"] == results["python"]


# properties ---------------------------------------------------------------

dense_pair = st.integers(2, 24).flatmap(
    lambda n: st.tuples(
        st.lists(st.lists(st.booleans(), min_size=n, max_size=n), min_size=1, max_size=6),
        st.lists(st.lists(st.booleans(), min_size=n, max_size=n), min_size=n, max_size=n),
        st.lists(st.lists(st.booleans(), min_size=n, max_size=n), min_size=1, max_size=6),
    )
)


@settings(max_examples=150, deadline=None)
@given(dense_pair)
def test_hop_monotone_and_masks_partition(data):
    v, m, w = (np.array(x, dtype=np.uint8) for x in data)
    rows = min(len(v), len(w))
    v, w = v[:rows], w[:rows]
    sub = v * w  # rowwise subset of v
    sv, sm, ssub, sw = (SparseBinaryMatrix.from_dense(x) for x in (v, m, sub, w))
    big, small = hop(sv, sm).to_dense(), hop(ssub, sm).to_dense()
    assert np.all(small <= big)
    np.testing.assert_array_equal(big, dense_hop(v, m))
    inter, diff = mask(sv, sw).to_dense(), mask_complement(sv, sw).to_dense()
    np.testing.assert_array_equal(inter | diff, v)
    assert not np.any(inter & diff)


@settings(max_examples=100, deadline=None)
@given(dense_pair)
def test_round_trip_through_transpose_covers_active_sources(data):
    v, m, _ = (np.array(x, dtype=np.uint8) for x in data)
    sv, sm = SparseBinaryMatrix.from_dense(v), SparseBinaryMatrix.from_dense(m)
    back = hop(hop(sv, sm), sm.T).to_dense()
    has_out = m.sum(axis=1) > 0
    expected = v * has_out[None, :]
    assert np.all(back >= expected)
