"""Sparse-Bernoulli compression matrices.

Each cell of Q is 0 with probability 1 - 1/s and +-sqrt(s/q) with
probability 1/(2s) each, so that E[Q.T Q] = I_n.  Cell (i, j) is a pure
function of (seed, i, j): the generator hashes that triple with a
SplitMix64 finalizer, so a sketch can be generated in any block order or on
any number of threads and still come out identical.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, InstanceTooLarge, InvalidInput, InvalidSparsity

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_DRAW_TAG = np.uint64(0xD1B54A32D192ED03)

# cells hashed per block during generation
_BLOCK_CELLS = 1 << 20
MAX_MOMENT_N = 12


def _mix64(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = z + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _as_u64(x) -> np.ndarray:
    return np.asarray(x).astype(np.uint64)


def cell_uniforms(seed, rows, cols) -> np.ndarray:
    """Uniform [0, 1) variates for cells ``rows x cols`` under ``seed``.

    ``seed`` may be a scalar or an array broadcastable against the leading
    axes; the result has shape ``seed.shape + (len(rows), len(cols))``.
    """
    key = _mix64(_as_u64(seed))[..., None]
    with np.errstate(over="ignore"):
        row_keys = _mix64(key + _as_u64(rows))
        z = _mix64(row_keys[..., None] + _as_u64(cols))
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def draw_seeds(seed: int, count: int) -> np.ndarray:
    """Independent 64-bit seeds for ``count`` repeated draws under ``seed``."""
    with np.errstate(over="ignore"):
        base = _mix64(_as_u64(seed)) ^ _DRAW_TAG
        return _mix64(base + np.arange(count, dtype=np.uint64))


def _signs_from_uniforms(u: np.ndarray, s: float) -> np.ndarray:
    signs = np.zeros(u.shape, dtype=np.int8)
    signs[u < 1.0 / (2.0 * s)] = 1
    signs[(u >= 1.0 / (2.0 * s)) & (u < 1.0 / s)] = -1
    return signs


@dataclass(frozen=True)
class SketchSpec:
    """Shape and law of a sketch: Q is q x n with sparsity parameter s."""

    n: int
    q: int
    s: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if not (isinstance(self.s, (int, float)) and math.isfinite(self.s)) or self.s < 1:
            raise InvalidSparsity(f"sparsity s must be a finite real >= 1, got {self.s!r}")
        # q > n is allowed: small moment studies use more rows than columns
        if self.n < 1 or self.q < 1:
            raise InvalidInput(f"need n >= 1 and q >= 1, got n={self.n}, q={self.q}")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidInput("seed must fit in an unsigned 64-bit integer")

    @property
    def scale(self) -> float:
        return math.sqrt(self.s / self.q)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> SketchSpec:
        try:
            return cls(n=int(d["n"]), q=int(d["q"]), s=float(d["s"]), seed=int(d["seed"]))
        except KeyError as exc:
            raise InvalidInput(f"sketch spec is missing field {exc}") from None

    @classmethod
    def from_json(cls, text: str) -> SketchSpec:
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class SparseSketch:
    """Triplet storage of a sketch, row-major with columns sorted in each row.

    Materialized values are ``signs * scale``.
    """

    spec: SketchSpec
    rows: np.ndarray
    cols: np.ndarray
    signs: np.ndarray
    scale: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.spec.q, self.spec.n

    @property
    def nnz(self) -> int:
        return int(self.signs.size)

    @cached_property
    def csr(self) -> sp.csr_matrix:
        q, n = self.shape
        indptr = np.zeros(q + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.rows, minlength=q), out=indptr[1:])
        data = self.signs.astype(np.float64) * self.scale
        return sp.csr_matrix((data, self.cols.astype(np.int64), indptr), shape=(q, n))

    def to_dense(self) -> np.ndarray:
        return self.csr.toarray()

    def same_entries(self, other: SparseSketch) -> bool:
        return (
            self.spec == other.spec
            and self.scale == other.scale
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.cols, other.cols)
            and np.array_equal(self.signs, other.signs)
        )


def _generate_rows(spec: SketchSpec, lo: int, hi: int):
    u = cell_uniforms(spec.seed, np.arange(lo, hi), np.arange(spec.n))
    signs = _signs_from_uniforms(u, spec.s)
    r, c = np.nonzero(signs)
    return r + lo, c, signs[r, c]


def generate_sketch(spec: SketchSpec, threads: int = 1) -> SparseSketch:
    """Draw the sparse-Bernoulli sketch described by ``spec``."""
    rows_per_block = max(1, _BLOCK_CELLS // spec.n)
    bounds = [(lo, min(lo + rows_per_block, spec.q)) for lo in range(0, spec.q, rows_per_block)]
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda b: _generate_rows(spec, *b), bounds))
    else:
        parts = [_generate_rows(spec, lo, hi) for lo, hi in bounds]
    rows = np.concatenate([p[0] for p in parts]).astype(np.int32)
    cols = np.concatenate([p[1] for p in parts]).astype(np.int32)
    signs = np.concatenate([p[2] for p in parts]).astype(np.int8)
    return SparseSketch(spec=spec, rows=rows, cols=cols, signs=signs, scale=spec.scale)


def identity_sketch(n: int) -> SparseSketch:
    """Q = I_n with unit scale. Test hook: collapses compressed fits to ridge."""
    spec = SketchSpec(n=n, q=n, s=1.0, seed=0)
    idx = np.arange(n, dtype=np.int32)
    return SparseSketch(spec=spec, rows=idx, cols=idx.copy(), signs=np.ones(n, dtype=np.int8), scale=1.0)


def apply_sketch(sketch: SparseSketch, m, threads: int = 1) -> np.ndarray:
    """Compute ``Q @ m`` from the stored nonzeros.

    Output rows are split into contiguous blocks for threading; each output
    cell is accumulated over its row's nonzeros in column order, so the
    result is bitwise identical for any ``threads``.
    """
    arr = np.asarray(m, dtype=float)
    if arr.shape[0] != sketch.spec.n:
        raise DimensionMismatch(f"sketch expects {sketch.spec.n} rows, got {arr.shape[0]}")
    csr = sketch.csr
    q = sketch.spec.q
    if threads <= 1 or q < 2 * threads:
        return np.asarray(csr @ arr)
    step = -(-q // threads)
    blocks = [(lo, min(lo + step, q)) for lo in range(0, q, step)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda b: np.asarray(csr[b[0] : b[1]] @ arr), blocks))
    return np.concatenate(parts, axis=0)


def sketch_batch(spec: SketchSpec, seeds: np.ndarray) -> np.ndarray:
    """Dense raw sign arrays (values in {-1, 0, 1}) for several seeds.

    Shape ``(len(seeds), q, n)``; meant for small Monte Carlo studies.
    """
    u = cell_uniforms(np.asarray(seeds, dtype=np.uint64), np.arange(spec.q), np.arange(spec.n))
    return _signs_from_uniforms(u, spec.s)


@dataclass(frozen=True)
class MomentReport:
    """Empirical versus analytic moments of ``A = (s/q) Q.T Q``."""

    draws: int
    mean: np.ndarray
    var: np.ndarray
    mean_se: np.ndarray
    var_se: np.ndarray
    target_mean: np.ndarray
    target_var: np.ndarray
    # Cov(A_ij, A_ji) for i != j; equals Var(A_ij) since A is symmetric
    target_transpose_cov: float

    def mean_z(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.abs(self.mean - self.target_mean) / self.mean_se
        return np.where(self.mean_se > 0, z, np.where(self.mean == self.target_mean, 0.0, np.inf))

    def var_z(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.abs(self.var - self.target_var) / self.var_se
        return np.where(self.var_se > 0, z, np.where(np.abs(self.var - self.target_var) < 1e-20, 0.0, np.inf))


def gram_moment_check(spec: SketchSpec, draws: int, batch: int = 5000) -> MomentReport:
    """Monte Carlo check of the mean and entrywise variance of ``A``.

    Draw ``d`` uses the seed ``draw_seeds(spec.seed, draws)[d]``.
    """
    n, q, s = spec.n, spec.q, spec.s
    if n > MAX_MOMENT_N:
        raise InstanceTooLarge(f"moment check materializes n x n estimates; n={n} > {MAX_MOMENT_N}")
    if draws < 2:
        raise InvalidInput("need at least two draws")
    seeds = draw_seeds(spec.seed, draws)
    eye = np.eye(n)
    # power sums of A - I (centered at the known mean to avoid cancellation)
    sums = [np.zeros((n, n)) for _ in range(4)]
    for lo in range(0, draws, batch):
        raw = sketch_batch(spec, seeds[lo : lo + batch]).astype(np.float64)
        a = (s / q) * np.einsum("bki,bkj->bij", raw, raw) - eye
        a2 = a * a
        sums[0] += a.sum(axis=0)
        sums[1] += a2.sum(axis=0)
        sums[2] += (a2 * a).sum(axis=0)
        sums[3] += (a2 * a2).sum(axis=0)
    m1, m2, m3, m4 = (t / draws for t in sums)
    var_pop = np.maximum(m2 - m1 * m1, 0.0)
    var = var_pop * draws / (draws - 1)
    mu4 = m4 - 4 * m3 * m1 + 6 * m2 * m1**2 - 3 * m1**4
    target_var = np.full((n, n), 1.0 / q)
    np.fill_diagonal(target_var, (s - 1.0) / q)
    return MomentReport(
        draws=draws,
        mean=m1 + eye,
        var=var,
        mean_se=np.sqrt(var / draws),
        var_se=np.sqrt(np.maximum(mu4 - var_pop**2, 0.0) / draws),
        target_mean=eye,
        target_var=target_var,
        target_transpose_cov=1.0 / q,
    )
