"""Projected Cramer-von Mises linearity test with wild-bootstrap calibration.

The statistic integrates a residual-marked empirical process over projection
directions confined to the span of the FPCs used by the fitted slope. That
integral has a closed form: a quadratic form of the observed-pair residuals
in a matrix A built from spherical angles between score-difference vectors.
Calibration resamples residuals with golden-section multipliers and refits
the slope coefficients with every selected structure (index sets, cutoffs,
observance probabilities, and A itself) frozen at the original fit, so only
the coefficient refits and the quadratic form run per replicate.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .estimators import (
    FunctionalSlope,
    MarSample,
    ObservanceModel,
    fit_observance,
    fit_slope,
)
from .exceptions import GridMismatchError, NumericalError
from .functional import FpcBasis

#: Relative tolerance under which two score vectors count as coincident.
SCORE_COINCIDENCE_RTOL = 1e-12

GOLDEN_LOW = (1.0 - math.sqrt(5.0)) / 2.0
GOLDEN_HIGH = (1.0 + math.sqrt(5.0)) / 2.0
GOLDEN_P_LOW = (5.0 + math.sqrt(5.0)) / 10.0


@dataclass(frozen=True)
class AMatrix:
    """Closed-form projection-integral matrix for a block of score rows."""

    values: np.ndarray
    n_k: int
    score_block: np.ndarray

    @property
    def n_s(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class GofResult:
    """Observed statistic, bootstrap replicates, and the resulting p-value."""

    statistic: float
    bootstrap_statistics: np.ndarray
    p_value: float
    method_tag: str
    indices: tuple[int, ...]
    seed: int
    n_obs: int
    elapsed_s: float

    @property
    def b(self) -> int:
        return self.bootstrap_statistics.size


def _observed_score_rows(sample: MarSample, slope: FunctionalSlope) -> np.ndarray:
    """Score rows of the observed curves in the slope's own basis."""
    basis = slope.basis
    if basis.n == sample.n_obs and basis.n != sample.n:
        return basis.scores  # observed-pairs basis: rows are the observed curves
    if basis.n == sample.n:
        return basis.scores[sample.observed_index]
    raise GridMismatchError("slope was fitted on a different sample")


def residuals(sample: MarSample, slope: FunctionalSlope) -> np.ndarray:
    """Residuals over the observed pairs only, ordered by observed index."""
    ytilde = sample.y_observed - sample.observed_mean
    return ytilde - slope.predict_centered(_observed_score_rows(sample, slope))


def _coincident_rows(block: np.ndarray) -> np.ndarray:
    """Boolean matrix of score rows equal within SCORE_COINCIDENCE_RTOL."""
    diff = np.max(np.abs(block[:, None, :] - block[None, :, :]), axis=2)
    row_scale = np.max(np.abs(block), axis=1)
    pair_scale = np.maximum(row_scale[:, None], row_scale[None, :])
    floor = np.finfo(float).tiny
    return diff <= SCORE_COINCIDENCE_RTOL * np.maximum(pair_scale, floor)


def build_a_matrix(score_block: np.ndarray, n_k: int | None = None) -> AMatrix:
    """Assemble A with entries A_lm = sum_r c * angle_term(l, m, r).

    angle_term is 2*pi when the three score vectors coincide, pi when exactly
    one pair does, and |pi - angle at vertex r between the difference vectors|
    otherwise; c = pi^(N_K/2 - 1) / Gamma(N_K / 2). Entries depend only on
    angles, so the matrix is invariant under a common rescaling of scores.
    """
    block = np.asarray(score_block, dtype=float)
    if block.ndim == 1:
        block = block[:, None]
    if not np.all(np.isfinite(block)):
        raise ValueError("score block must be finite")
    n_s, width = block.shape
    if n_k is None:
        n_k = width
    elif n_k != width:
        raise ValueError(f"n_k={n_k} does not match score block width {width}")
    if n_s < 2:
        raise ValueError("need at least 2 score rows")

    dup = _coincident_rows(block)
    acc = np.zeros((n_s, n_s))
    for r_idx in range(n_s):
        d = block - block[r_idx]
        gram = d @ d.T
        sq = np.maximum(np.diag(gram).copy(), 0.0)
        denom = np.sqrt(np.outer(sq, sq))
        with np.errstate(invalid="ignore", divide="ignore"):
            cosang = np.where(denom > 0.0, gram / np.where(denom > 0.0, denom, 1.0), 1.0)
        a0 = np.abs(np.pi - np.arccos(np.clip(cosang, -1.0, 1.0)))
        a0[dup] = np.pi
        at_vertex = dup[:, r_idx]
        pair = at_vertex[:, None] | at_vertex[None, :]
        a0[pair] = np.pi
        a0[at_vertex[:, None] & at_vertex[None, :]] = 2.0 * np.pi
        acc += a0

    constant = np.pi ** (n_k / 2.0 - 1.0) / math.gamma(n_k / 2.0)
    values = constant * acc
    values = 0.5 * (values + values.T)
    values.setflags(write=False)
    return AMatrix(values=values, n_k=n_k, score_block=block)


def pcvm_statistic(residual_vector: np.ndarray, a: AMatrix, n_s: int) -> float:
    """Quadratic-form statistic eps' A eps / n_s^2 (clamped at zero)."""
    eps = np.asarray(residual_vector, dtype=float)
    if eps.shape != (a.n_s,):
        raise GridMismatchError(
            f"residual vector has {eps.shape}, A is {a.values.shape}"
        )
    value = float(eps @ a.values @ eps) / float(n_s) ** 2
    return max(value, 0.0)


def golden_section_multipliers(
    count: int, seed: int | np.random.Generator = 0
) -> np.ndarray:
    """Two-point multipliers (1 -+ sqrt(5))/2 with mean 0 and variance 1."""
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = np.random.default_rng(seed)
    return np.where(rng.random(count) < GOLDEN_P_LOW, GOLDEN_LOW, GOLDEN_HIGH)


def _gram_inverse(design: np.ndarray) -> np.ndarray:
    return np.linalg.inv(design.T @ design)


class _FixedStructureRefitter:
    """Vectorized coefficient refits at the original fit's frozen structure.

    Operates on (B, n_obs) matrices of centered bootstrap responses and
    returns the matching residual matrices. Subsample fits solve the frozen
    normal equations; full-sample second stages do the same over all rows.
    """

    def __init__(self, sample: MarSample, slope: FunctionalSlope,
                 observance: ObservanceModel | None):
        from .functional import project_scores

        self.method = slope.method_tag
        self.n = sample.n
        self.n_obs = sample.n_obs
        self.obs = sample.observed_index
        self.miss = np.flatnonzero(~sample.r)

        def augmented(block):
            return np.column_stack([np.ones(block.shape[0]), block])

        cols = np.asarray(slope.indices, dtype=int) - 1
        self.d_obs_final = augmented(_observed_score_rows(sample, slope)[:, cols])
        if self.method in ("C", "CL", "S", "SL"):
            self.final_ginv = _gram_inverse(self.d_obs_final)
        else:
            self.d_all_final = augmented(slope.basis.scores[:, cols])
            self.final_ginv = _gram_inverse(self.d_all_final)
            first = slope.first_stage
            first_cols = np.asarray(first["indices"], dtype=int) - 1
            ob = first["basis"]
            self.d_obs_first = augmented(ob.scores[:, first_cols])
            if self.miss.size:
                miss_scores = project_scores(ob, sample.x.values[self.miss])
                self.d_miss_first = augmented(miss_scores[:, first_cols])
            self.first_ginv = _gram_inverse(self.d_obs_first)
        if self.method in ("W", "WL"):
            from .estimators import _normalized_inverse_probabilities

            self.inv_p_obs = _normalized_inverse_probabilities(sample, observance)[self.obs]

    def residual_matrix(self, ystar: np.ndarray) -> np.ndarray:
        method = self.method
        if method in ("C", "CL", "S", "SL"):
            coef = (ystar @ self.d_obs_final) @ self.final_ginv
            return ystar - coef @ self.d_obs_final.T

        coef1 = (ystar @ self.d_obs_first) @ self.first_ginv
        completed = np.empty((ystar.shape[0], self.n))
        if method in ("I", "IL"):
            completed[:, self.obs] = ystar
        else:
            pred_obs = coef1 @ self.d_obs_first.T
            completed[:, self.obs] = (
                self.inv_p_obs * ystar + (1.0 - self.inv_p_obs) * pred_obs
            )
        if self.miss.size:
            completed[:, self.miss] = coef1 @ self.d_miss_first.T
        coef2 = (completed @ self.d_all_final) @ self.final_ginv
        return ystar - coef2 @ self.d_obs_final.T


def wild_bootstrap_test(
    sample: MarSample,
    basis: FpcBasis,
    method_tag: str,
    b: int = 500,
    seed: int = 0,
    observance: ObservanceModel | None = None,
    a_cache: dict | None = None,
    k_max: int | None = None,
    observed_basis: FpcBasis | None = None,
) -> GofResult:
    """Run the full testing procedure for one estimator.

    Fits the slope, computes the observed statistic, then draws `b`
    golden-section replicates y*_i = <X_i, beta-hat> + V_i * eps_i over the
    observed pairs (the missingness pattern is kept), refits coefficients at
    the frozen structure, and recomputes the statistic with the same A.
    A replicate producing a non-finite statistic is redrawn once, then the
    run aborts. p-value = #(observed statistic <= replicate statistic) / b.

    `a_cache` may map index tuples to AMatrix objects shared across calls on
    the same sample; `observance` may be passed to share the one-time
    probability fit between the W and WL runs.
    """
    if b < 1:
        raise ValueError("bootstrap count must be at least 1")
    started = time.perf_counter()
    method_tag = method_tag.upper()
    if method_tag in ("W", "WL") and observance is None:
        observance = fit_observance(sample)
    slope = fit_slope(sample, basis, method_tag, seed=seed,
                      observance=observance, k_max=k_max,
                      observed_basis=observed_basis)

    eps = residuals(sample, slope)
    score_rows = _observed_score_rows(sample, slope)
    key = ("own" if slope.basis.n != sample.n else "full", slope.indices)
    if a_cache is not None and key in a_cache:
        a = a_cache[key]
    else:
        cols = np.asarray(slope.indices, dtype=int) - 1
        a = build_a_matrix(score_rows[:, cols])
        if a_cache is not None:
            a_cache[key] = a
    n_s = sample.n_obs
    observed_stat = pcvm_statistic(eps, a, n_s)

    # Noiseless-linear data leaves only round-off in the residuals; the test
    # then has nothing against linearity, so short-circuit to p = 1 instead
    # of comparing quadratic forms of numerical dust.
    y_scale = float(np.max(np.abs(sample.y_observed))) or 1.0
    if float(np.max(np.abs(eps))) <= 1e-10 * max(1.0, y_scale):
        return GofResult(
            statistic=0.0,
            bootstrap_statistics=np.zeros(b),
            p_value=1.0,
            method_tag=method_tag,
            indices=slope.indices,
            seed=seed,
            n_obs=n_s,
            elapsed_s=time.perf_counter() - started,
        )

    refitter = _FixedStructureRefitter(sample, slope, observance)
    mu = slope.predict_centered(score_rows)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, 0x426F6F)))
    v = np.where(rng.random((b, n_s)) < GOLDEN_P_LOW, GOLDEN_LOW, GOLDEN_HIGH)
    ystar = mu[None, :] + v * eps[None, :]
    res = refitter.residual_matrix(ystar)
    stats = np.einsum("bl,bl->b", res @ a.values, res) / float(n_s) ** 2
    np.maximum(stats, 0.0, out=stats)

    bad = ~np.isfinite(stats)
    if np.any(bad):
        v_retry = np.where(
            rng.random((int(bad.sum()), n_s)) < GOLDEN_P_LOW, GOLDEN_LOW, GOLDEN_HIGH
        )
        ystar_retry = mu[None, :] + v_retry * eps[None, :]
        res_retry = refitter.residual_matrix(ystar_retry)
        stats[bad] = np.einsum(
            "bl,bl->b", res_retry @ a.values, res_retry
        ) / float(n_s) ** 2
        if np.any(~np.isfinite(stats)):
            raise NumericalError(
                f"bootstrap replicates failed twice for method {method_tag}"
            )

    p_value = float(np.count_nonzero(observed_stat <= stats)) / b
    return GofResult(
        statistic=observed_stat,
        bootstrap_statistics=stats,
        p_value=p_value,
        method_tag=method_tag,
        indices=slope.indices,
        seed=seed,
        n_obs=n_s,
        elapsed_s=time.perf_counter() - started,
    )
