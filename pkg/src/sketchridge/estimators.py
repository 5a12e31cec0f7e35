"""Least-squares, ridge and compressed ridge estimators.

The compressed estimators share the Gram matrix ``X.T Q.T Q X + lam I`` and
differ only in the cross-product term:

* full compression (FC) uses ``(QX).T QY``;
* partial compression (PC) uses the exact ``X.T Y``;
* the combination estimators regress Y on ``[X b_fc, X b_pc]`` and return
  ``B @ alpha`` with ``B = [b_fc, b_pc]``.

Combination weights are always ordered (FC, PC).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tuning
from .errors import DimensionMismatch, InvalidInput, InvalidLambda, SingularSystem
from .linalg import SpectralShrinker, ThinSvd, regularized_inverse_apply, thin_svd
from .sketch import SketchSpec, SparseSketch, apply_sketch

# relative size of ||X b_fc - X b_pc|| below which the convex weight is 1/2
COMBO_TIE_RTOL = 1e-12
# relative cutoff for the minimum-norm solve of the 2-column combination
COMBO_RCOND = 1e-12

METHODS = ("ols", "ridge", "fc", "pc", "linear", "convex")


@dataclass(frozen=True)
class Dataset:
    """Fixed design ``X`` (n x p) and response ``Y`` (n,)."""

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if Y.ndim == 2 and Y.shape[1] == 1:
            Y = Y[:, 0]
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise InvalidInput(f"X must be a non-empty matrix, got shape {X.shape}")
        if Y.ndim != 1:
            raise InvalidInput(f"Y must be a vector, got shape {Y.shape}")
        if Y.shape[0] != X.shape[0]:
            raise DimensionMismatch(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise InvalidInput("data contain NaN or Inf")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class CompressedDesign:
    """Everything needed to sweep a penalty grid after one sketch and one SVD."""

    qx_svd: ThinSvd
    xty: np.ndarray
    qxt_qy: np.ndarray
    rtxxr: np.ndarray
    trace_xx: float
    xtx: np.ndarray
    spec: SketchSpec

    @property
    def p(self) -> int:
        return self.xty.shape[0]


@dataclass
class FitResult:
    lam: float
    beta_fc: np.ndarray
    beta_pc: np.ndarray
    beta_linear: np.ndarray
    beta_convex: np.ndarray
    alpha_linear: np.ndarray
    alpha_convex: float
    df_fc: float
    df_pc: float
    df_linear: float
    df_convex: float
    rss: dict[str, float]
    beta_ridge: np.ndarray | None = None
    df_ridge: float | None = None

    def beta(self, method: str) -> np.ndarray:
        out = getattr(self, f"beta_{method}")
        if out is None:
            raise KeyError(method)
        return out

    def df(self, method: str) -> float:
        out = getattr(self, f"df_{method}")
        if out is None:
            raise KeyError(method)
        return out


@dataclass
class PathResult:
    fits: list[FitResult]
    n: int
    methods: tuple[str, ...] = field(default=("fc", "pc", "linear", "convex"))

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([f.lam for f in self.fits])

    def records(self, method: str, sigma2_hat: float | None = None) -> list[tuning.TuningRecord]:
        out = []
        for f in self.fits:
            rss, df = f.rss[method], f.df(method)
            out.append(tuning.make_record(f.lam, rss, df, self.n, sigma2_hat))
        return out

    def coefficients(self, method: str) -> np.ndarray:
        return np.array([f.beta(method) for f in self.fits])


def _positive_lambda(lam: float) -> float:
    lam = float(lam)
    if not np.isfinite(lam) or lam <= 0:
        raise InvalidLambda(f"lambda must be finite and > 0, got {lam}")
    return lam


def fit_ols(data: Dataset, svd: ThinSvd | None = None) -> np.ndarray:
    """Minimum-norm least squares ``X^+ Y`` on the numerical rank of X."""
    svd = svd or thin_svd(data.X)
    f = SpectralShrinker(svd.singvals, 0.0).factors()
    return svd.right @ (f * (svd.left.T @ data.Y))


def fit_ridge(data: Dataset, lam: float, svd: ThinSvd | None = None) -> np.ndarray:
    """``V (D^2 + lam)^-1 D U.T Y`` from the thin SVD of X."""
    lam = float(lam)
    if lam < 0:
        raise InvalidLambda("lambda must be nonnegative")
    svd = svd or thin_svd(data.X)
    if lam == 0 and (svd.right.shape[1] < data.p or svd.rank() < data.p):
        raise SingularSystem("lambda=0 with rank-deficient X; use fit_ols")
    f = SpectralShrinker(svd.singvals, lam).factors()
    return svd.right @ (f * (svd.left.T @ data.Y))


def build_compressed(data: Dataset, sketch: SparseSketch, threads: int = 1) -> CompressedDesign:
    if sketch.spec.n != data.n:
        raise DimensionMismatch(f"sketch is for n={sketch.spec.n}, data have n={data.n}")
    compressed = apply_sketch(sketch, np.column_stack([data.X, data.Y]), threads=threads)
    qx, qy = compressed[:, :-1], compressed[:, -1]
    svd = thin_svd(qx)
    xtx = data.X.T @ data.X
    rtxxr = svd.right.T @ xtx @ svd.right
    return CompressedDesign(
        qx_svd=svd,
        xty=data.X.T @ data.Y,
        qxt_qy=qx.T @ qy,
        rtxxr=0.5 * (rtxxr + rtxxr.T),
        trace_xx=float(np.trace(xtx)),
        xtx=xtx,
        spec=sketch.spec,
    )


def fit_fc(cd: CompressedDesign, lam: float) -> np.ndarray:
    """Fully compressed ridge ``(X'Q'QX + lam I)^-1 X'Q'QY``.

    ``lam == 0`` is accepted when QX has full column rank (the unpenalized
    sketch-and-solve estimator).
    """
    lam = float(lam)
    if lam < 0:
        raise InvalidLambda("lambda must be nonnegative")
    svd = cd.qx_svd
    r_mat = svd.right
    coords = r_mat.T @ cd.qxt_qy
    if r_mat.shape[1] < cd.p:
        # X'Q'QY lies in span(R); the complement term of the inverse is zero
        resid = cd.qxt_qy - r_mat @ coords
        scale = max(np.linalg.norm(cd.qxt_qy), 1.0)
        assert np.linalg.norm(resid) <= 1e-8 * scale, "cross-product left span(R)"
    if lam == 0 and (r_mat.shape[1] < cd.p or svd.rank() < cd.p):
        raise SingularSystem("lambda=0 with rank-deficient QX")
    inv = SpectralShrinker(svd.singvals, lam).inverse_gram()
    return r_mat @ (inv * coords)


def fit_pc(cd: CompressedDesign, lam: float) -> np.ndarray:
    """Partially compressed ridge ``(X'Q'QX + lam I)^-1 X'Y`` (lam > 0)."""
    lam = _positive_lambda(lam)
    return regularized_inverse_apply(cd.qx_svd, lam, cd.xty)


def combine(v_fc: np.ndarray, v_pc: np.ndarray, y: np.ndarray, constrained: bool) -> np.ndarray:
    """Least-squares weights (FC, PC) for regressing ``y`` on two fitted vectors."""
    if constrained:
        d = v_fc - v_pc
        dd = float(d @ d)
        scale = max(float(v_fc @ v_fc), float(v_pc @ v_pc))
        if dd <= (COMBO_TIE_RTOL**2) * scale or dd == 0.0:
            a = 0.5
        else:
            a = float(np.clip((y - v_pc) @ d / dd, 0.0, 1.0))
        return np.array([a, 1.0 - a])
    basis = np.column_stack([v_fc, v_pc])
    alpha, *_ = np.linalg.lstsq(basis, y, rcond=COMBO_RCOND)
    return alpha


def fit_combo(
    cd: CompressedDesign, data: Dataset, lam: float, constrained: bool
) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(alpha, beta)`` for the linear or convex combination."""
    lam = _positive_lambda(lam)
    b_fc, b_pc = fit_fc(cd, lam), fit_pc(cd, lam)
    alpha = combine(data.X @ b_fc, data.X @ b_pc, data.Y, constrained)
    return alpha, alpha[0] * b_fc + alpha[1] * b_pc


def _rss(y: np.ndarray, fitted: np.ndarray) -> float:
    r = y - fitted
    return float(r @ r)


def fit_path(
    cd: CompressedDesign,
    data: Dataset,
    lambdas,
    with_ridge: bool = False,
    x_svd: ThinSvd | None = None,
) -> PathResult:
    """Fit every estimator on a positive, sorted penalty grid.

    Uses the single SVD stored in ``cd`` (and, with ``with_ridge``, one SVD
    of X) for the whole grid.
    """
    lambdas = np.asarray(lambdas, dtype=float).ravel()
    if lambdas.size == 0:
        raise InvalidInput("empty lambda grid")
    if np.any(~np.isfinite(lambdas)) or np.any(lambdas <= 0):
        raise InvalidLambda("lambda grid must be finite and strictly positive")
    if np.any(np.diff(lambdas) < 0):
        raise InvalidInput("lambda grid must be sorted ascending")
    if with_ridge and x_svd is None:
        x_svd = thin_svd(data.X)
    fits = []
    for lam in lambdas:
        b_fc, b_pc = fit_fc(cd, lam), fit_pc(cd, lam)
        v_fc, v_pc = data.X @ b_fc, data.X @ b_pc
        a_lin = combine(v_fc, v_pc, data.Y, constrained=False)
        a_cvx = combine(v_fc, v_pc, data.Y, constrained=True)
        d_fc, d_pc = tuning.df_fc(cd, lam), tuning.df_pc(cd, lam)
        rss = {
            "fc": _rss(data.Y, v_fc),
            "pc": _rss(data.Y, v_pc),
            "linear": _rss(data.Y, a_lin[0] * v_fc + a_lin[1] * v_pc),
            "convex": _rss(data.Y, a_cvx[0] * v_fc + a_cvx[1] * v_pc),
        }
        fit = FitResult(
            lam=float(lam),
            beta_fc=b_fc,
            beta_pc=b_pc,
            beta_linear=a_lin[0] * b_fc + a_lin[1] * b_pc,
            beta_convex=a_cvx[0] * b_fc + a_cvx[1] * b_pc,
            alpha_linear=a_lin,
            alpha_convex=float(a_cvx[0]),
            df_fc=d_fc,
            df_pc=d_pc,
            df_linear=tuning.df_combo(d_fc, d_pc, a_lin),
            df_convex=tuning.df_combo(d_fc, d_pc, a_cvx),
            rss=rss,
        )
        if with_ridge:
            fit.beta_ridge = fit_ridge(data, lam, x_svd)
            fit.df_ridge = tuning.df_ridge(x_svd, lam)
            rss["ridge"] = _rss(data.Y, data.X @ fit.beta_ridge)
        fits.append(fit)
    methods = ("fc", "pc", "linear", "convex") + (("ridge",) if with_ridge else ())
    return PathResult(fits=fits, n=data.n, methods=methods)


def predict(beta, x_new) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    x_new = np.asarray(x_new, dtype=float)
    if x_new.ndim != 2 or x_new.shape[1] != beta.shape[0]:
        raise DimensionMismatch(f"cannot apply {beta.shape[0]} coefficients to shape {x_new.shape}")
    return x_new @ beta
