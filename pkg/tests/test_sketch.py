from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sketchridge.errors import DimensionMismatch, InstanceTooLarge, InvalidSparsity
from sketchridge.sketch import (
    SketchSpec,
    SparseSketch,
    apply_sketch,
    cell_uniforms,
    draw_seeds,
    generate_sketch,
    gram_moment_check,
    identity_sketch,
    sketch_batch,
)

_MASK = (1 << 64) - 1


def _py_mix(z):
    z = (z + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _py_uniform(seed, i, j):
    z = _py_mix((_py_mix((_py_mix(seed) + i) & _MASK) + j) & _MASK)
    return (z >> 11) / 2.0**53


def test_cell_hash_matches_pure_python_reference():
    u = cell_uniforms(12345, np.arange(4), np.arange(7))
    ref = [[_py_uniform(12345, i, j) for j in range(7)] for i in range(4)]
    np.testing.assert_array_equal(u, ref)


def test_frozen_small_sketch():
    # values frozen from the pure-Python reference hash
    dense = generate_sketch(SketchSpec(n=5, q=3, s=3.0, seed=42)).to_dense()
    want = [[0, 0, 0, -1, 0], [-1, 0, 0, 0, 0], [1, 0, 0, 0, 1]]
    np.testing.assert_array_equal(dense, want)
    assert _py_uniform(42, 0, 0) == pytest.approx(0.3869742762400409, abs=0)


def test_s_one_is_dense_with_half_scale():
    sk = generate_sketch(SketchSpec(n=6, q=4, s=1.0, seed=7))
    assert sk.nnz == 24
    np.testing.assert_array_equal(np.abs(sk.to_dense()), 0.5)


def test_nonzero_count_concentrates():
    sk = generate_sketch(SketchSpec(n=1000, q=200, s=3.0, seed=1))
    cells = 200 * 1000
    mean, sd = cells / 3, np.sqrt(cells * (1 / 3) * (2 / 3))
    assert abs(sk.nnz - mean) < 4 * sd
    # signs are balanced too
    pos = int(np.sum(sk.signs > 0))
    assert abs(pos - sk.nnz / 2) < 4 * np.sqrt(sk.nnz / 4)


def test_invalid_specs():
    with pytest.raises(InvalidSparsity):
        SketchSpec(n=5, q=2, s=0.5)
    with pytest.raises(InvalidSparsity):
        SketchSpec(n=5, q=2, s=float("nan"))
    with pytest.raises(ValueError):
        SketchSpec(n=5, q=0)


def test_reproducible_and_thread_invariant():
    spec = SketchSpec(n=3000, q=700, s=2.5, seed=99)
    a = generate_sketch(spec)
    b = generate_sketch(spec, threads=4)
    assert a.same_entries(b)
    m = np.random.default_rng(0).standard_normal((3000, 5))
    r1 = apply_sketch(a, m)
    for t in (2, 3, 8):
        assert np.array_equal(r1, apply_sketch(a, m, threads=t))


def test_generation_is_order_free():
    spec = SketchSpec(n=50, q=20, s=3.0, seed=5)
    full = generate_sketch(spec).to_dense() / spec.scale
    # rebuild the bottom rows alone from the hash
    u = cell_uniforms(5, np.arange(10, 20), np.arange(50))
    part = np.where(u < 1 / 6, 1, np.where(u < 1 / 3, -1, 0))
    np.testing.assert_array_equal(full[10:], part)


def test_apply_matches_dense():
    rng = np.random.default_rng(3)
    sk = generate_sketch(SketchSpec(n=5, q=3, s=1.0, seed=11))
    m = rng.standard_normal((5, 2))
    np.testing.assert_allclose(apply_sketch(sk, m), sk.to_dense() @ m, atol=1e-12)
    x, y = rng.standard_normal((5, 3)), rng.standard_normal(5)
    both = apply_sketch(sk, np.column_stack([x, y]))
    np.testing.assert_allclose(both[:, :3], apply_sketch(sk, x), atol=1e-14)
    np.testing.assert_allclose(both[:, 3], apply_sketch(sk, y), atol=1e-14)
    with pytest.raises(DimensionMismatch):
        apply_sketch(sk, np.ones((4, 2)))


def test_single_entry_sketch():
    spec = SketchSpec(n=4, q=2, s=1.0)
    one = np.array([0], dtype=np.int32)
    sk = SparseSketch(spec, one, one.copy(), np.array([1], dtype=np.int8), 0.3)
    out = apply_sketch(sk, np.eye(4))
    np.testing.assert_allclose(out, [[0.3, 0, 0, 0], [0, 0, 0, 0]])


def test_identity_sketch():
    m = np.random.default_rng(0).standard_normal((7, 2))
    np.testing.assert_array_equal(apply_sketch(identity_sketch(7), m), m)


def test_spec_json_roundtrip():
    spec = SketchSpec(n=10, q=4, s=2.5, seed=2**63 + 5)
    text = spec.to_json()
    assert json.loads(text) == {"n": 10, "q": 4, "s": 2.5, "seed": 2**63 + 5}
    assert SketchSpec.from_json(text) == spec


def test_batch_matches_single_draws():
    spec = SketchSpec(n=6, q=5, s=3.0, seed=8)
    seeds = draw_seeds(8, 3)
    raw = sketch_batch(spec, seeds)
    for k in range(3):
        single = generate_sketch(SketchSpec(n=6, q=5, s=3.0, seed=int(seeds[k])))
        np.testing.assert_array_equal(raw[k], single.to_dense() / single.scale)


def test_mean_of_gram_is_identity():
    spec = SketchSpec(n=4, q=8, s=3.0, seed=0)
    raw = sketch_batch(spec, draw_seeds(0, 20000)).astype(float)
    a = (3.0 / 8) * np.einsum("bki,bkj->ij", raw, raw) / 20000
    assert np.max(np.abs(a - np.eye(4))) < 0.02


def test_moment_check_s_one_degenerate():
    rep = gram_moment_check(SketchSpec(n=4, q=9, s=1.0, seed=2), draws=500)
    assert np.all(np.diag(rep.var) < 1e-20)
    np.testing.assert_array_equal(np.diag(rep.target_var), 0.0)
    assert np.all(rep.var_z()[np.diag_indices(4)] == 0)


@pytest.mark.parametrize("s,q", [(3.0, 50), (4.0, 40)])
def test_moment_targets(s, q):
    rep = gram_moment_check(SketchSpec(n=5, q=q, s=s, seed=3), draws=20000)
    assert rep.target_var[0, 0] == pytest.approx((s - 1) / q)
    assert rep.target_var[0, 1] == pytest.approx(1 / q)
    assert rep.target_transpose_cov == pytest.approx(1 / q)
    # generous bound on 25 entries at 2e4 draws
    assert np.max(rep.mean_z()) < 4.5
    assert np.max(rep.var_z()) < 4.5


def test_moment_check_refuses_large_n():
    with pytest.raises(InstanceTooLarge):
        gram_moment_check(SketchSpec(n=13, q=5), draws=10)


def test_operator_norm_shrinks_with_q():
    n = 16
    meds = []
    for q in (n // 4, n // 2, n):
        seeds = draw_seeds(q, 100)
        raw = sketch_batch(SketchSpec(n=n, q=q, s=3.0), seeds).astype(float)
        a = (3.0 / q) * np.einsum("bki,bkj->bij", raw, raw) - np.eye(n)
        meds.append(np.median(np.linalg.norm(a, 2, axis=(1, 2))))
    assert meds[0] > meds[1] > meds[2]


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 40), q=st.integers(1, 40), s=st.floats(1.0, 10.0), seed=st.integers(0, 2**64 - 1))
def test_triplets_well_formed(n, q, s, seed):
    sk = generate_sketch(SketchSpec(n=n, q=q, s=s, seed=seed))
    assert np.all((sk.rows >= 0) & (sk.rows < q) & (sk.cols >= 0) & (sk.cols < n))
    keys = sk.rows.astype(np.int64) * n + sk.cols
    assert np.all(np.diff(keys) > 0)  # unique and row-major sorted
    assert set(np.unique(sk.signs)) <= {-1, 1}
    assert sk.scale == pytest.approx(np.sqrt(s / q))
