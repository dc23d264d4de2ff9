"""L1-penalized least squares on FPC scores.

Minimizes sum_i (y_i - sum_k b_k s_ik)^2 + lambda * sum_k |b_k| by cyclic
coordinate descent on the Gram matrix. Scores are deliberately left
unstandardized: their scale carries the component variances.
"""

from __future__ import annotations

import numpy as np

N_LAMBDAS = 100
LAMBDA_MIN_RATIO = 1e-4
KKT_TOL = 1e-9


def lambda_max(design: np.ndarray, y: np.ndarray) -> float:
    """Smallest penalty that forces the all-zero solution (gradient bound)."""
    return float(np.max(np.abs(2.0 * design.T @ y)))


def lambda_grid(design: np.ndarray, y: np.ndarray, n_lambdas: int = N_LAMBDAS) -> np.ndarray:
    """Descending log-spaced grid spanning [lambda_max * 1e-4, lambda_max]."""
    lmax = lambda_max(design, y)
    if lmax <= 0.0:
        return np.full(n_lambdas, 0.0)
    return np.geomspace(lmax, lmax * LAMBDA_MIN_RATIO, n_lambdas)


def _soft_threshold(z: np.ndarray, t: float) -> np.ndarray:
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def _cd_solve(gram, cty, lam, beta, gram_diag, max_sweeps=10_000):
    """Coordinate descent to KKT stationarity for one (or F stacked) problems.

    gram: (K, K) or (K, K, F); cty: (K,) or (K, F); beta updated in place.
    The subgradient conditions are enforced to within KKT_TOL * scale, far
    inside the 1e-6 contract.
    """
    k = cty.shape[0]
    scale = max(1.0, float(np.max(np.abs(cty))))
    tol = KKT_TOL * scale
    for _ in range(max_sweeps):
        delta = 0.0
        for j in range(k):
            gj = gram[j]  # (K,) or (K, F)
            rho = cty[j] - np.einsum("i...,i...->...", gj, beta) + gram_diag[j] * beta[j]
            new = _soft_threshold(rho, lam / 2.0) / gram_diag[j]
            delta = max(delta, float(np.max(np.abs(new - beta[j]) * gram_diag[j])))
            beta[j] = new
        if delta <= tol:
            break
    return beta


def lasso_path(design: np.ndarray, y: np.ndarray, lambdas: np.ndarray) -> np.ndarray:
    """Coefficient path over a descending penalty grid, warm-started.

    Returns an (L, K) array; row l solves the objective at lambdas[l].
    """
    design = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (np.all(np.isfinite(design)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite inputs to lasso_path")
    gram = design.T @ design
    cty = design.T @ y
    gram_diag = np.diag(gram).copy()
    if np.any(gram_diag <= 0.0):
        raise ValueError("design has a zero column; cannot run coordinate descent")
    k = design.shape[1]
    path = np.empty((lambdas.size, k))
    beta = np.zeros(k)
    for idx, lam in enumerate(lambdas):
        beta = _cd_solve(gram, cty, float(lam), beta, gram_diag)
        path[idx] = beta
    return path


def kkt_violation(design: np.ndarray, y: np.ndarray, beta: np.ndarray, lam: float) -> float:
    """Largest subgradient violation of the solution (0 means exact KKT)."""
    grad = 2.0 * design.T @ (design @ beta - y)
    active = beta != 0.0
    viol = np.zeros_like(beta)
    viol[active] = np.abs(grad[active] + lam * np.sign(beta[active]))
    viol[~active] = np.maximum(np.abs(grad[~active]) - lam, 0.0)
    return float(np.max(viol)) if beta.size else 0.0


def lasso_select(
    design: np.ndarray,
    y: np.ndarray,
    folds: int = 10,
    seed: int | np.random.Generator = 0,
    n_lambdas: int = N_LAMBDAS,
) -> tuple[tuple[int, ...], dict]:
    """Pick the active set by K-fold CV with the one-standard-error rule.

    An unpenalized intercept is handled by centering y and the design
    columns on each training set (a no-op for zero-mean score designs).
    Returns 1-based column indices of the support at the most penalized
    lambda whose CV error is within one standard error of the minimum,
    with {1} as the fallback for an empty support.
    """
    design = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = design.shape
    folds = max(2, min(folds, n))
    rng = np.random.default_rng(seed)
    assignment = rng.permutation(n) % folds

    xc = design - design.mean(axis=0)
    yc = y - y.mean()
    lambdas = lambda_grid(xc, yc, n_lambdas)
    if lambdas[0] <= 0.0:  # y orthogonal to every column: nothing to select
        return (1,), {"lambda": 0.0, "cv": None}

    # Stack the per-fold training problems so each CD sweep updates all folds.
    grams = np.empty((k, k, folds))
    ctys = np.empty((k, folds))
    col_means = np.empty((folds, k))
    y_means = np.empty(folds)
    for f in range(folds):
        train = assignment != f
        col_means[f] = design[train].mean(axis=0)
        y_means[f] = y[train].mean()
        xf = design[train] - col_means[f]
        grams[:, :, f] = xf.T @ xf
        ctys[:, f] = xf.T @ (y[train] - y_means[f])
    diag = np.einsum("kkf->kf", grams)
    if np.any(diag <= 0.0):
        raise ValueError("a CV fold left a zero design column; reduce folds")

    beta = np.zeros((k, folds))
    fold_mse = np.empty((lambdas.size, folds))
    for idx, lam in enumerate(lambdas):
        beta = _cd_solve(grams, ctys, float(lam), beta, diag)
        for f in range(folds):
            test = assignment == f
            resid = (y[test] - y_means[f]) - (design[test] - col_means[f]) @ beta[:, f]
            fold_mse[idx, f] = float(np.mean(resid**2))

    cv = fold_mse.mean(axis=1)
    se = fold_mse.std(axis=1, ddof=1) / np.sqrt(folds)
    best = int(np.argmin(cv))
    threshold = cv[best] + se[best]
    chosen = int(np.argmax(cv <= threshold))  # grid descends, so first hit = largest lambda

    full_path = lasso_path(xc, yc, lambdas[: chosen + 1])
    support = tuple(int(j) + 1 for j in np.flatnonzero(full_path[chosen] != 0.0))
    if not support:
        support = (1,)
    diagnostics = {
        "lambda": float(lambdas[chosen]),
        "lambda_index": chosen,
        "cv": cv,
        "cv_se": se,
        "folds": folds,
    }
    return support, diagnostics
