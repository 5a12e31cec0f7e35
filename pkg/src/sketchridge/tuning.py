"""Penalty selection: degrees of freedom with GCV or a Cp-style risk estimate."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import DegenerateGcv, InvalidInput, NoValidLambda

if TYPE_CHECKING:
    from .estimators import CompressedDesign
    from .linalg import ThinSvd

TIE_RTOL = 1e-12


@dataclass(frozen=True)
class TuningRecord:
    lam: float
    rss: float
    df: float
    gcv: float
    risk_cp: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def df_fc(cd: CompressedDesign, lam: float) -> float:
    """``sum_j l_j^2 / (l_j^2 + lam)`` over the singular values of QX."""
    l2 = cd.qx_svd.singvals**2
    return float(np.sum(l2 / (l2 + lam)))


def df_pc(cd: CompressedDesign, lam: float) -> float:
    """``tr((X'Q'QX + lam I)^-1 X'X)`` from the precomputed R'X'XR.

    Not bounded by p: the partially compressed hat matrix is not a
    contraction.
    """
    l2 = cd.qx_svd.singvals**2
    diag = np.diag(cd.rtxxr)
    out = float(np.sum(diag / (l2 + lam)))
    if cd.qx_svd.right.shape[1] < cd.p:
        out += (cd.trace_xx - float(np.sum(diag))) / lam
    return out


def df_ridge(x_svd: ThinSvd, lam: float) -> float:
    d2 = x_svd.singvals**2
    return float(np.sum(d2 / (d2 + lam)))


def df_combo(df_fc_val: float, df_pc_val: float, alpha) -> float:
    """Plug-in df of a combination with weights ordered (FC, PC)."""
    return float(alpha[0] * df_fc_val + alpha[1] * df_pc_val)


def gcv(rss: float, df: float, n: int) -> float:
    if df >= n:
        raise DegenerateGcv(f"df={df} >= n={n}")
    return float(rss / (1.0 - df / n) ** 2)


def risk_cp(rss: float, df: float, n: int, sigma2_hat: float) -> float:
    """Mallows-type risk estimate with an externally supplied noise variance."""
    if not sigma2_hat > 0:
        raise InvalidInput("sigma2_hat must be > 0")
    return float(rss - n * sigma2_hat + 2.0 * sigma2_hat * df)


def make_record(lam: float, rss: float, df: float, n: int, sigma2_hat: float | None = None) -> TuningRecord:
    """Build a record; a saturated fit gets ``gcv = inf``."""
    try:
        g = gcv(rss, df, n)
    except DegenerateGcv:
        g = math.inf
    cp = risk_cp(rss, df, n, sigma2_hat) if sigma2_hat is not None else None
    return TuningRecord(lam=float(lam), rss=float(rss), df=float(df), gcv=g, risk_cp=cp)


def select_lambda(records, criterion: str = "gcv") -> tuple[float, TuningRecord]:
    """Record minimizing ``criterion``; near-ties go to the larger penalty."""
    records = list(records)
    if not records:
        raise InvalidInput("no tuning records")
    if criterion not in ("gcv", "cp"):
        raise InvalidInput(f"unknown criterion {criterion!r}")
    key = "gcv" if criterion == "gcv" else "risk_cp"
    best = None
    for rec in records:
        val = getattr(rec, key)
        if val is None or not math.isfinite(val):
            continue
        if best is None:
            best = rec
            continue
        bval = getattr(best, key)
        tol = TIE_RTOL * max(abs(val), abs(bval))
        if val < bval - tol or (abs(val - bval) <= tol and rec.lam > best.lam):
            best = rec
    if best is None:
        raise NoValidLambda(f"every record has a degenerate {criterion}")
    return best.lam, best


def default_lambda_grid(singvals, count: int = 50, lo: float = 1e-4, hi: float = 1e4) -> np.ndarray:
    """Log grid over ``[lo, hi] * mean(singvals)^2`` (design-invariant scale)."""
    sv = np.asarray(singvals, dtype=float)
    scale = float(np.mean(sv)) ** 2 if sv.size else 1.0
    if not scale > 0:
        scale = 1.0
    return scale * np.logspace(math.log10(lo), math.log10(hi), count)
