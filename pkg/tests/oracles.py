"""Independent Monte Carlo oracles for the projected Cramer-von Mises test.

These deliberately avoid the closed-form A-matrix route: directions are drawn
uniformly on the unit sphere of the score space, the marked empirical process
is evaluated through the projected ECDF, and the direction integral is the
sphere surface area times the sample mean over draws.
"""

import math

import numpy as np


def sphere_area(dim: int) -> float:
    return 2.0 * np.pi ** (dim / 2.0) / math.gamma(dim / 2.0)


def _unit_directions(rng, count, dim):
    g = rng.normal(size=(count, dim))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def mc_a_matrix(score_block, n_draws=100_000, seed=0, batch=20_000):
    """Direction-sampling estimate of sum_r omega{gamma: p_l <= p_r, p_m <= p_r}.

    Assumes almost-surely distinct projections (no duplicated score rows).
    """
    block = np.asarray(score_block, dtype=float)
    if block.ndim == 1:
        block = block[:, None]
    n, dim = block.shape
    rng = np.random.default_rng(seed)
    acc = np.zeros((n, n))
    done = 0
    while done < n_draws:
        b = min(batch, n_draws - done)
        gamma = _unit_directions(rng, b, dim)
        proj = block @ gamma.T  # (n, b)
        ranks = np.argsort(np.argsort(proj, axis=0), axis=0)
        above = n - ranks  # count of r with p_r >= p_l, self included
        acc += np.minimum(above[:, None, :], above[None, :, :]).sum(axis=2)
        done += b
    return sphere_area(dim) * acc / n_draws


def mc_pcvm_statistic(score_block, residual_vector, n_draws=100_000, seed=0, batch=20_000):
    """Projected-ECDF estimate of the Cramer-von Mises functional.

    For each direction the marked process is n^{-1/2} sum_l eps_l 1{p_l <= u}
    evaluated at the projected points, squared, and averaged against the ECDF;
    ties in projections are handled with right-continuous counts.
    """
    block = np.asarray(score_block, dtype=float)
    if block.ndim == 1:
        block = block[:, None]
    eps = np.asarray(residual_vector, dtype=float)
    n, dim = block.shape
    rng = np.random.default_rng(seed)
    total = 0.0
    done = 0
    while done < n_draws:
        b = min(batch, n_draws - done)
        gamma = _unit_directions(rng, b, dim)
        proj = block @ gamma.T  # (n, b)
        order = np.argsort(proj, axis=0, kind="stable")
        eps_sorted = np.take_along_axis(np.broadcast_to(eps[:, None], proj.shape), order, axis=0)
        # projections of distinct score rows tie with probability zero, so the
        # r-th sorted cumulative sum is the marked process at u = p_(r)
        cums = np.cumsum(eps_sorted, axis=0)
        total += float(np.sum(cums**2)) / n
        done += b
    return sphere_area(dim) * total / n_draws / n


def case_table_a_matrix(score_block):
    """Literal triple-loop evaluation of the angle case table."""
    block = np.asarray(score_block, dtype=float)
    if block.ndim == 1:
        block = block[:, None]
    n, dim = block.shape
    constant = np.pi ** (dim / 2.0 - 1.0) / math.gamma(dim / 2.0)
    out = np.zeros((n, n))
    for l in range(n):
        for m in range(n):
            total = 0.0
            for r in range(n):
                dl = block[l] - block[r]
                dm = block[m] - block[r]
                nl, nm = np.linalg.norm(dl), np.linalg.norm(dm)
                same_lm = np.allclose(block[l], block[m], rtol=0, atol=1e-300)
                if nl == 0.0 and nm == 0.0:
                    total += 2.0 * np.pi
                elif nl == 0.0 or nm == 0.0 or same_lm:
                    total += np.pi
                else:
                    cosang = np.clip(dl @ dm / (nl * nm), -1.0, 1.0)
                    total += abs(np.pi - np.arccos(cosang))
            out[l, m] = constant * total
    return out
