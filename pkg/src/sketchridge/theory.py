"""First-order (in A = (s/q) Q'Q around I) bias and variance of compressed ridge.

Notation: X = U D V', M = (X'X + lam I)^-1 X', H = X M, e_hat = (I - H) Y,
Y_hat = H Y.  Everything is evaluated in the spectral coordinates of X; n x n
objects (H, A, e_hat e_hat') only ever appear through products with n x p
factors.  Remainder terms are dropped.

Two expansions are available for the variance of ``M (A - I) z``:

* ``variance_law="recombined"`` (default) uses ``((s-2)_+/q) M z z' M' + (z'z/q) M M'``;
* ``variance_law="exact"`` uses the entrywise law of A directly,
  ``((s-3)/q) M diag(z*z) M' + (1/q)(M z z' M' + z'z M M')``.

The two agree at s = 3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import InvalidInput
from .linalg import SpectralShrinker, ThinSvd, thin_svd
from .sketch import SparseSketch, apply_sketch

THETA_MAX = 1e6
_WHICH = ("fc", "pc")


@dataclass(frozen=True)
class TheoryInputs:
    x_svd: ThinSvd
    beta_star: np.ndarray
    sigma2: float
    lam: float
    q: int
    s: float

    def __post_init__(self):
        beta = np.asarray(self.beta_star, dtype=float)
        object.__setattr__(self, "beta_star", beta)
        if beta.shape != (self.x_svd.right.shape[0],):
            raise InvalidInput("beta_star length does not match the design")
        if not self.lam > 0 or self.sigma2 < 0 or self.q < 1 or self.s < 1:
            raise InvalidInput("need lam > 0, sigma2 >= 0, q >= 1, s >= 1")

    @classmethod
    def from_design(cls, X, beta_star, sigma2, lam, q, s) -> TheoryInputs:
        return cls(thin_svd(X), beta_star, float(sigma2), float(lam), int(q), float(s))

    @property
    def n(self) -> int:
        return self.x_svd.left.shape[0]

    def with_lambda(self, lam: float) -> TheoryInputs:
        return TheoryInputs(self.x_svd, self.beta_star, self.sigma2, lam, self.q, self.s)


@dataclass(frozen=True)
class MseBreakdown:
    bias_sq: float
    var_trace: float

    @property
    def mse(self) -> float:
        return self.bias_sq + self.var_trace

    def to_dict(self) -> dict:
        return {"bias_sq": self.bias_sq, "var_trace": self.var_trace, "mse": self.mse}


@dataclass(frozen=True)
class Moments:
    """Mean and covariance; ``terms`` holds the trace of each additive piece."""

    mean: np.ndarray
    cov: np.ndarray
    terms: dict = field(default_factory=dict)

    @property
    def var_trace(self) -> float:
        return float(np.trace(self.cov))


class _Spectral:
    """Per-direction quantities for one (design, lambda)."""

    def __init__(self, ti: TheoryInputs):
        svd = ti.x_svd
        self.U, self.d, self.V = svd.left, svd.singvals, svd.right
        self.f = SpectralShrinker(self.d, ti.lam).factors()  # M = V diag(f) U'
        self.h = self.d * self.f  # H = U diag(h) U'
        self.c = self.V.T @ ti.beta_star
        self.n = self.U.shape[0]

    def w(self, which: str) -> np.ndarray:
        """Eigenvalues of the residual (FC) or hat (PC) operator on span(U)."""
        return 1.0 - self.h if which == "fc" else self.h

    def trace_w2(self, which: str) -> float:
        w = self.w(which)
        extra = self.n - self.U.shape[1] if which == "fc" else 0
        return float(np.sum(w * w) + extra)

    def mm_diag(self) -> np.ndarray:
        return self.f**2

    def diag_w_second_moment(self, which: str, sigma2: float) -> np.ndarray:
        """Diagonal of W (X b b' X' + sigma2 I) W, an n-vector."""
        w = self.w(which)
        wxb = self.U @ (w * self.d * self.c)
        u2 = self.U**2
        w2_diag = u2 @ (w * w)
        if which == "fc":
            # (I - H)^2 = I - U diag(1 - (1-h)^2) U'
            w2_diag = 1.0 - u2 @ (1.0 - w * w)
        return wxb**2 + sigma2 * w2_diag


def _vcov(V, diag) -> np.ndarray:
    return (V * diag) @ V.T


def _m_diag_m(sp: _Spectral, weights: np.ndarray) -> np.ndarray:
    """M diag(weights) M' for an n-vector of weights."""
    k = (sp.U * weights[:, None]).T @ sp.U
    fk = sp.f[:, None] * k * sp.f[None, :]
    return sp.V @ fk @ sp.V.T


def _positive(x: float) -> float:
    return max(x, 0.0)


def ridge_bias_sq(ti: TheoryInputs) -> float:
    """``lam^2 b' V (D^2 + lam)^-2 V' b`` (plus any null-space part of b)."""
    sp = _Spectral(ti)
    bias = ti.beta_star - sp.V @ (sp.h * sp.c)
    return float(bias @ bias)


def ridge_var_trace(ti: TheoryInputs) -> float:
    sp = _Spectral(ti)
    return float(ti.sigma2 * np.sum(sp.f**2))


def _extra_cov(
    ti: TheoryInputs,
    sp: _Spectral,
    mz: np.ndarray,
    zz: float,
    diag_z2: np.ndarray | None,
    noise_cov: np.ndarray | None,
    variance_law: str,
) -> tuple[np.ndarray, dict]:
    """Covariance of ``M (A - I) z`` given E[M z z' M'] pieces."""
    q, s = ti.q, ti.s
    mm = _vcov(sp.V, sp.mm_diag())
    rank_one = np.outer(mz, mz) + (noise_cov if noise_cov is not None else 0.0)
    iso = (zz / q) * mm
    if variance_law == "recombined":
        lead = (_positive(s - 2.0) / q) * rank_one
        terms = {"rank_one": float(np.trace(lead)), "isotropic": float(np.trace(iso))}
        return lead + iso, terms
    if variance_law == "exact":
        diag_term = ((s - 3.0) / q) * _m_diag_m(sp, diag_z2)
        lead = rank_one / q
        terms = {
            "diagonal": float(np.trace(diag_term)),
            "rank_one": float(np.trace(lead)),
            "isotropic": float(np.trace(iso)),
        }
        return diag_term + lead + iso, terms
    raise InvalidInput(f"unknown variance_law {variance_law!r}")


def _moments(
    ti: TheoryInputs,
    which: str,
    conditional_on: str,
    y,
    variance_law: str,
    include_noise_terms: bool = True,
) -> Moments:
    if which not in _WHICH:
        raise InvalidInput(f"which must be 'fc' or 'pc', got {which!r}")
    sp = _Spectral(ti)
    w = sp.w(which)
    if conditional_on == "data":
        if y is None:
            raise InvalidInput("conditional_on='data' needs the response y")
        y = np.asarray(y, dtype=float)
        uty = sp.U.T @ y
        hy = sp.U @ (sp.h * uty)
        z = y - hy if which == "fc" else hy
        mz = sp.V @ (sp.f * (sp.U.T @ z))
        diag_z2 = z * z if variance_law == "exact" else None
        cov, terms = _extra_cov(ti, sp, mz, float(z @ z), diag_z2, None, variance_law)
        return Moments(mean=sp.V @ (sp.f * uty), cov=cov, terms=terms)
    if conditional_on != "design":
        raise InvalidInput(f"conditional_on must be 'data' or 'design', got {conditional_on!r}")
    sigma2 = ti.sigma2 if include_noise_terms else 0.0
    # z = W Y with E[z z'] = W (X b b' X' + sigma2 I) W
    wxb_coords = w * sp.d * sp.c
    mz = sp.V @ (sp.f * wxb_coords)
    noise_cov = sigma2 * _vcov(sp.V, sp.f**2 * w**2)
    zz = float(wxb_coords @ wxb_coords) + sigma2 * sp.trace_w2(which)
    diag_z2 = sp.diag_w_second_moment(which, sigma2) if variance_law == "exact" else None
    extra, terms = _extra_cov(ti, sp, mz, zz, diag_z2, noise_cov, variance_law)
    ridge_cov = ti.sigma2 * _vcov(sp.V, sp.f**2)
    terms = {"ridge": float(np.trace(ridge_cov)), **terms}
    return Moments(mean=sp.V @ (sp.h * sp.c), cov=ridge_cov + extra, terms=terms)


def fc_moments(ti: TheoryInputs, conditional_on: str = "data", y=None, variance_law: str = "recombined") -> Moments:
    """Mean and covariance of the fully compressed estimator over the sketch.

    ``conditional_on="data"`` fixes (X, Y) and averages over Q only;
    ``"design"`` also averages over the noise.
    """
    return _moments(ti, "fc", conditional_on, y, variance_law)


def pc_moments(ti: TheoryInputs, conditional_on: str = "data", y=None, variance_law: str = "recombined") -> Moments:
    """As :func:`fc_moments` for partial compression (fitted values replace residuals)."""
    return _moments(ti, "pc", conditional_on, y, variance_law)


def _sketch_delta(sketch: SparseSketch) -> Callable[[np.ndarray], Callable]:
    """Bilinear form ``(a, b) -> sum over columns of a' (A - I) b`` via QX products."""

    def form(a: np.ndarray, b: np.ndarray) -> float:
        qa = apply_sketch(sketch, a)
        qb = apply_sketch(sketch, b)
        return float(np.sum(qa * qb) - np.sum(a * b))

    return form


def _bias_correction(ti: TheoryInputs, which: str, delta_form) -> float:
    sp = _Spectral(ti)
    g = sp.V @ (sp.h * sp.c) - ti.beta_star  # (MX - I) b
    u = sp.U @ (sp.f * (sp.V.T @ g))  # M' g
    z = sp.U @ (sp.w(which) * sp.d * sp.c)  # W X b
    sign = 1.0 if which == "fc" else -1.0
    return 2.0 * sign * delta_form(u, z)


def _var_correction(ti: TheoryInputs, which: str, delta_form) -> float:
    sp = _Spectral(ti)
    mt = sp.U @ (sp.f[:, None] * sp.V.T)  # M', n x p
    wmt = sp.U @ ((sp.w(which) * sp.f)[:, None] * sp.V.T)  # W M'
    sign = 1.0 if which == "fc" else -1.0
    return 2.0 * sign * ti.sigma2 * delta_form(wmt, mt)


def bias_sq(ti: TheoryInputs, which: str, conditional_q: SparseSketch | None = None) -> float:
    """Squared bias of FC or PC.

    Averaged over the sketch this is exactly the ridge squared bias.  Given
    a sketch, the first-order correction ``2 b'(MX - I) M (A - I) (I - H) X b``
    (FC) or ``2 b'(I - MX) M (A - I) H X b`` (PC) is added.
    """
    if which not in _WHICH:
        raise InvalidInput(f"which must be 'fc' or 'pc', got {which!r}")
    base = ridge_bias_sq(ti)
    if conditional_q is None:
        return base
    return base + _bias_correction(ti, which, _sketch_delta(conditional_q))


def var_trace_expansion(
    ti: TheoryInputs,
    which: str,
    conditional_q: SparseSketch | None = None,
    include_noise_terms: bool = True,
    variance_law: str = "recombined",
) -> float:
    """Trace of the estimator variance to first order.

    Given a sketch: ridge variance plus ``2 sigma2 tr(M (I-H)(A-I) M')``
    (FC) or ``-2 sigma2 tr(M H (A-I) M')`` (PC).

    Averaged over the sketch: ridge variance plus the 1/q terms from the
    total-variance decomposition.  ``include_noise_terms=False`` drops the
    sigma2-weighted 1/q terms, leaving only the pieces driven by the signal.
    """
    if which not in _WHICH:
        raise InvalidInput(f"which must be 'fc' or 'pc', got {which!r}")
    if conditional_q is not None:
        return ridge_var_trace(ti) + _var_correction(ti, which, _sketch_delta(conditional_q))
    mom = _moments(ti, which, "design", None, variance_law, include_noise_terms)
    if include_noise_terms:
        return mom.var_trace
    return ridge_var_trace(ti) + sum(v for k, v in mom.terms.items() if k != "ridge")


def mse_breakdown(
    ti: TheoryInputs, which: str, conditional_q: SparseSketch | None = None, **kwargs
) -> MseBreakdown:
    if which == "ridge":
        return MseBreakdown(ridge_bias_sq(ti), ridge_var_trace(ti))
    return MseBreakdown(
        bias_sq(ti, which, conditional_q),
        var_trace_expansion(ti, which, conditional_q, **kwargs),
    )


def mse_orthogonal(
    theta: float,
    b2: float,
    sigma2: float,
    n: int,
    p: int,
    q: int,
    s: float,
    which: str,
    form: str = "reduced",
) -> float:
    """MSE when X'X = n I, with ``theta = lam / n`` and ``b2 = ||b||^2``.

    ``form="reduced"`` keeps only signal-driven 1/q terms, each carrying an
    extra factor of p; it is cheap and reproduces ridge at theta = 0 for
    FC, but under-predicts FC error when the noise is large.
    ``form="complete"`` is the orthogonal-design value of
    ``bias_sq + var_trace_expansion`` (unconditional), including the
    noise-driven 1/q terms.
    """
    t = float(theta)
    base = b2 * (t / (1 + t)) ** 2 + p * sigma2 / (n * (1 + t) ** 2)
    if which == "ridge":
        return base
    sp2 = _positive(s - 2.0)
    if form == "reduced":
        if which == "fc":
            return base + b2 * p * t**2 * sp2 / (q * (1 + t) ** 4) + p**2 * t**2 * b2 / (q * (1 + t) ** 4)
        if which == "pc":
            return base + p * sp2 * b2 / (q * (1 + t) ** 2) + p * b2 / (q * (1 + t) ** 4)
    elif form == "complete":
        mm_trace = p / (n * (1 + t) ** 2)
        if which == "fc":
            rank_one = b2 * t**2 / (1 + t) ** 4 + sigma2 * p * t**2 / (n * (1 + t) ** 4)
            zz = n * t**2 * b2 / (1 + t) ** 2 + sigma2 * ((n - p) + p * t**2 / (1 + t) ** 2)
            return base + sp2 / q * rank_one + zz / q * mm_trace
        if which == "pc":
            rank_one = b2 / (1 + t) ** 4 + sigma2 * p / (n * (1 + t) ** 4)
            zz = n * b2 / (1 + t) ** 2 + sigma2 * p / (1 + t) ** 2
            return base + sp2 / q * rank_one + zz / q * mm_trace
    else:
        raise InvalidInput(f"unknown form {form!r}")
    raise InvalidInput(f"which must be ridge, fc or pc, got {which!r}")


def ridge_optimal_theta(b2: float, sigma2: float, n: int, p: int) -> float:
    if b2 <= 0:
        return math.inf
    return sigma2 * p / (n * b2)


def bayes_theta(sigma2: float, tau2: float, n: int) -> float:
    """Bayes ridge penalty per observation for b ~ N(0, tau2 I)."""
    return sigma2 / (n * tau2)


def minimize_theta(f: Callable[[float], float], theta_max: float = THETA_MAX) -> float:
    """Minimize ``f`` on ``[0, theta_max]``: log-grid bracket, then golden-section refinement."""
    grid = np.concatenate([[0.0], np.logspace(-8, math.log10(theta_max), 400)])
    vals = np.array([f(t) for t in grid])
    k = int(np.argmin(vals))
    if k == 0 or k == grid.size - 1:
        return float(grid[k])
    res = minimize_scalar(f, bracket=(grid[k - 1], grid[k], grid[k + 1]), method="golden", tol=1e-10)
    return float(res.x)


def optimal_theta(
    which: str,
    b2: float,
    sigma2: float,
    n: int,
    p: int,
    q: int,
    s: float,
    form: str = "reduced",
    theta_max: float = THETA_MAX,
    closed_form: bool = True,
) -> float:
    """Minimize :func:`mse_orthogonal` over ``[0, theta_max]``.

    Ridge uses the closed form unless ``closed_form=False``.
    """
    if which == "ridge" and closed_form:
        return min(ridge_optimal_theta(b2, sigma2, n, p), theta_max)
    return minimize_theta(lambda t: mse_orthogonal(t, b2, sigma2, n, p, q, s, which, form), theta_max)
