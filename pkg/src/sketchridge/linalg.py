"""Dense linear-algebra primitives: thin SVD and regularized solves.

Everything that sweeps a penalty grid goes through :func:`thin_svd` once and
then :func:`regularized_inverse_apply` (or :class:`SpectralShrinker`) per
penalty value, so the cost per grid point is O(p * r).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, SingularSystem

RANK_RTOL = 1e-10


@dataclass(frozen=True)
class ThinSvd:
    """Factorization ``M = left @ diag(singvals) @ right.T``.

    ``left`` is rows x r, ``right`` is p x r with r = min(rows, p); zero
    singular values are kept so that r depends only on the input shape.
    """

    left: np.ndarray
    singvals: np.ndarray
    right: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.left.shape[0], self.right.shape[0]

    def rank(self, rtol: float = RANK_RTOL) -> int:
        if self.singvals.size == 0 or self.singvals[0] == 0.0:
            return 0
        return int(np.sum(self.singvals > rtol * self.singvals[0]))

    def reconstruct(self) -> np.ndarray:
        return (self.left * self.singvals) @ self.right.T


@dataclass(frozen=True)
class SpectralShrinker:
    """Per-direction shrink factors ``l_j / (l_j**2 + lam)``.

    At ``lam == 0`` this is the pseudo-inverse: ``1/l_j`` for nonzero
    singular values and 0 for the (numerically) zero ones.
    """

    singvals: np.ndarray
    lam: float

    def factors(self) -> np.ndarray:
        l = np.asarray(self.singvals, dtype=float)
        if self.lam > 0:
            return l / (l * l + self.lam)
        out = np.zeros_like(l)
        if l.size and l[0] > 0:
            keep = l > RANK_RTOL * l[0]
            out[keep] = 1.0 / l[keep]
        return out

    def inverse_gram(self) -> np.ndarray:
        """Diagonal of ``(L**2 + lam)^-1`` (pseudo-inverse at lam=0)."""
        l2 = np.asarray(self.singvals, dtype=float) ** 2
        if self.lam > 0:
            return 1.0 / (l2 + self.lam)
        f = self.factors()
        return f * f


def _check_finite(m: np.ndarray, what: str = "input") -> None:
    if not np.all(np.isfinite(m)):
        raise InvalidInput(f"{what} contains NaN or Inf")


def thin_svd(m) -> ThinSvd:
    """Thin SVD with a deterministic sign convention.

    Each right singular vector is flipped so that its largest-magnitude
    entry is positive (the first one on ties); the matching left vector is
    flipped with it.
    """
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise InvalidInput(f"expected a non-empty 2-D matrix, got shape {a.shape}")
    _check_finite(a)
    u, d, vt = np.linalg.svd(a, full_matrices=False)
    v = vt.T
    idx = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[idx, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return ThinSvd(left=u * signs, singvals=d, right=v * signs)


def regularized_inverse_apply(svd: ThinSvd, lam: float, v) -> np.ndarray:
    """Apply ``(M.T M + lam I)^-1`` to ``v`` given the thin SVD of ``M``.

    When ``M`` has fewer rows than columns the right factor does not span
    R^p and the orthogonal-complement term ``(v - R R.T v) / lam`` is added.
    ``v`` may be a vector or a p x k matrix.
    """
    lam = float(lam)
    v = np.asarray(v, dtype=float)
    r_mat = svd.right
    p, r = r_mat.shape
    if v.shape[0] != p:
        raise InvalidInput(f"vector has {v.shape[0]} rows, expected {p}")
    if lam < 0:
        raise InvalidInput("lambda must be nonnegative")
    if lam == 0 and (r < p or svd.rank() < p):
        raise SingularSystem("lambda=0 requires a full-column-rank factor")
    inv = SpectralShrinker(svd.singvals, lam).inverse_gram()
    coords = r_mat.T @ v
    scaled = inv[:, None] * coords if v.ndim == 2 else inv * coords
    out = r_mat @ scaled
    if r < p:
        out = out + (v - r_mat @ coords) / lam
    return out
