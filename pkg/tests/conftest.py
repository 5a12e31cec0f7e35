from __future__ import annotations

import numpy as np
import pytest

from sketchridge import Dataset, SketchSpec, generate_sketch


def random_problem(seed, n=40, p=5, q=None, s=3.0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    beta = rng.standard_normal(p)
    Y = X @ beta + rng.standard_normal(n)
    q = q or max(p + 2, n // 2)
    sk = generate_sketch(SketchSpec(n=n, q=q, s=s, seed=int(rng.integers(2**63))))
    return Dataset(X, Y), beta, sk


def dense_fc(X, Y, Q, lam):
    qx, qy = Q @ X, Q @ Y
    return np.linalg.solve(qx.T @ qx + lam * np.eye(X.shape[1]), qx.T @ qy)


def dense_pc(X, Y, Q, lam):
    qx = Q @ X
    return np.linalg.solve(qx.T @ qx + lam * np.eye(X.shape[1]), X.T @ Y)


def dense_ridge(X, Y, lam):
    return np.linalg.solve(X.T @ X + lam * np.eye(X.shape[1]), X.T @ Y)


@pytest.fixture
def problem():
    return random_problem(0)


def sketch_fits(X, Y, q, s, lam, draws, seed, batch=4000):
    """FC and PC coefficients for ``draws`` independent sketches (dense, batched)."""
    from sketchridge.sketch import SketchSpec, draw_seeds, sketch_batch

    n, p = X.shape
    seeds = draw_seeds(seed, draws)
    xty = X.T @ Y
    fc, pc = [], []
    for lo in range(0, draws, batch):
        raw = sketch_batch(SketchSpec(n=n, q=q, s=s), seeds[lo : lo + batch]).astype(float)
        raw *= np.sqrt(s / q)
        qx, qy = raw @ X, raw @ Y
        g = np.einsum("bki,bkj->bij", qx, qx) + lam * np.eye(p)
        fc.append(np.linalg.solve(g, np.einsum("bki,bk->bi", qx, qy)[..., None])[..., 0])
        pc.append(np.linalg.solve(g, np.broadcast_to(xty, (len(g), p))[..., None])[..., 0])
    return np.concatenate(fc), np.concatenate(pc)


def trace_cov_with_se(samples):
    """Trace of the sample covariance and its Monte Carlo standard error."""
    c = samples - samples.mean(axis=0)
    per_draw = np.sum(c * c, axis=1)
    m = len(samples)
    return per_draw.sum() / (m - 1), per_draw.std(ddof=1) / np.sqrt(m)


ACCEPTANCE_LINES: list[str] = []


def acceptance_line(number: int, ok: bool, text: str) -> str:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {text}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
