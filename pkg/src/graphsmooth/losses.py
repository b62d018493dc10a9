"""Training losses: edge reconstruction plus the three balancing terms.

The three balancing terms trade off how strongly each node's embedding is
pulled toward (neighbor term), tied across masked views (minimal term), or
pushed away from (divergence term) its neighborhood. Node-indexed terms
are sums over nodes, not means; the default weights assume that scale.

Also here: the closed-form conversion from a mean squared error between
two unit-variance Gaussian vectors to their mutual information, with a
Monte-Carlo checker for it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad


@dataclass
class LossWeights:
    lambda1: float = 0.0      # neighbor term
    lambda2: float = 0.0      # minimal term
    lambda3: float = 0.0      # divergence term
    margin: float = 0.0       # cosine margin of the divergence hinge
    mask_ratio: float = 0.7

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ValueError("loss weights must be nonnegative")
        if not -1.0 <= self.margin <= 1.0:
            raise ValueError("margin must lie in [-1, 1]")
        if not 0.0 <= self.mask_ratio <= 1.0:
            raise ValueError("mask ratio must lie in [0, 1]")


@dataclass
class LossBreakdown:
    l_st: float
    l_nei: float
    l_min: float
    l_div: float
    total: float

    def recombine(self, w: LossWeights) -> float:
        return (self.l_st + w.lambda1 * self.l_nei
                + w.lambda2 * self.l_min + w.lambda3 * self.l_div)

    def as_dict(self) -> dict:
        return {"l_st": self.l_st, "l_nei": self.l_nei, "l_min": self.l_min,
                "l_div": self.l_div, "total": self.total}


def _active_matrix(active: np.ndarray, cols: int) -> ad.Tensor:
    mask = np.ascontiguousarray(
        np.broadcast_to(np.asarray(active, dtype=np.float64).reshape(-1, 1),
                        (len(active), cols)))
    return ad.constant(mask)


def neighbor_loss(z_x: ad.Tensor, z_neigh: ad.Tensor, active: np.ndarray) -> ad.Tensor:
    """Sum over active nodes of the squared distance to the neighbor mean."""
    if z_x.shape != z_neigh.shape:
        raise ValueError(f"shape mismatch {z_x.shape} vs {z_neigh.shape}")
    sq = ad.square(ad.sub(z_x, z_neigh))
    return ad.reduce_sum(ad.mul(sq, _active_matrix(active, z_x.cols)))


def minimal_loss(z_x: ad.Tensor, z_s: ad.Tensor) -> ad.Tensor:
    """Sum of squared distances between the two masked-view encodings.

    Gradient flows into both representations; the encoder is shared.
    """
    if z_x.shape != z_s.shape:
        raise ValueError(f"shape mismatch {z_x.shape} vs {z_s.shape}")
    return ad.reduce_sum(ad.square(ad.sub(z_x, z_s)))


def divergence_loss(z_x: ad.Tensor, z_neigh: ad.Tensor, margin: float,
                    active: np.ndarray) -> ad.Tensor:
    """Hinge on cosine similarity to the neighbor mean above the margin."""
    if not -1.0 <= margin <= 1.0:
        raise ValueError("margin must lie in [-1, 1]")
    sim = ad.cosine_rows(z_x, z_neigh)
    hinge = ad.relu(ad.add_scalar(sim, -margin))
    return ad.reduce_sum(ad.mul(hinge, _active_matrix(active, 1)))


PROB_CLAMP = 1e-12


def structure_loss_edges(z: ad.Tensor, pos: np.ndarray, neg: np.ndarray,
                         v1: ad.Tensor, v2: ad.Tensor) -> ad.Tensor:
    """Mean negative log likelihood of masked edges vs sampled non-edges."""
    from .model import decode_edges

    pos = np.asarray(pos, dtype=np.int64).reshape(-1, 2)
    neg = np.asarray(neg, dtype=np.int64).reshape(-1, 2)
    if len(pos) == 0:
        raise ValueError("structure loss needs at least one masked (positive) edge")
    if len(neg) == 0:
        raise ValueError("structure loss needs at least one negative edge")
    # decode positives and negatives in one pass, split afterwards
    probs = ad.clamp(decode_edges(z, np.vstack([pos, neg]), v1, v2),
                     PROB_CLAMP, 1.0 - PROB_CLAMP)
    p_pos = ad.gather_rows(probs, np.arange(len(pos)))
    p_neg = ad.gather_rows(probs, np.arange(len(pos), len(pos) + len(neg)))
    ones = ad.constant(np.ones((len(neg), 1)))
    pos_term = ad.reduce_mean(ad.log(p_pos))
    neg_term = ad.reduce_mean(ad.log(ad.sub(ones, p_neg)))
    return ad.mul_scalar(ad.add(pos_term, neg_term), -1.0)


def structure_loss_features(z: ad.Tensor, masked_nodes: np.ndarray,
                            x: np.ndarray, w_feat: ad.Tensor) -> ad.Tensor:
    """Mean squared reconstruction error of masked node features."""
    idx = np.asarray(masked_nodes, dtype=np.int64).reshape(-1)
    if len(idx) == 0:
        raise ValueError("feature reconstruction needs at least one masked node")
    pred = ad.matmul(ad.gather_rows(z, idx), w_feat)
    target = ad.constant(np.asarray(x, dtype=np.float64)[idx])
    return ad.reduce_mean(ad.square(ad.sub(pred, target)))


def total_loss(l_st: ad.Tensor, l_nei: ad.Tensor, l_min: ad.Tensor,
               l_div: ad.Tensor, w: LossWeights) -> tuple[ad.Tensor, LossBreakdown]:
    """Pretext loss plus the weighted balancing terms."""
    for name, t in [("l_st", l_st), ("l_nei", l_nei), ("l_min", l_min),
                    ("l_div", l_div)]:
        if not math.isfinite(t.item()):
            raise ArithmeticError(f"{name} is not finite")
    total = ad.add(l_st, ad.add(ad.mul_scalar(l_nei, w.lambda1),
                                ad.add(ad.mul_scalar(l_min, w.lambda2),
                                       ad.mul_scalar(l_div, w.lambda3))))
    breakdown = LossBreakdown(l_st.item(), l_nei.item(), l_min.item(),
                              l_div.item(), total.item())
    return total, breakdown


# ---------------------------------------------------------------------------
# mutual information from mean squared error (unit Gaussian vectors)
# ---------------------------------------------------------------------------

def mi_from_mse(mse: float, d: int) -> float:
    """Exact MI of two zero-mean unit-variance d-dim Gaussian vectors whose
    expected squared distance is mse.

    mse = 2d(1 - rho) maps the error back to the per-dimension correlation;
    MI is finite only for mse strictly inside (0, 4d).
    """
    if d < 1:
        raise ValueError("dimension must be at least 1")
    if mse < 0.0 or mse > 4.0 * d:
        raise ValueError(f"mse must lie in [0, {4 * d}] for a valid correlation")
    if mse == 0.0 or mse == 4.0 * d:
        raise ValueError("mutual information diverges at perfect (anti)correlation")
    rho = 1.0 - mse / (2.0 * d)
    return -(d / 2.0) * math.log(1.0 - rho * rho)


def mi_from_mse_approx(mse: float, d: int) -> float:
    """Small-error approximation of mi_from_mse."""
    if d < 1:
        raise ValueError("dimension must be at least 1")
    if mse <= 0.0:
        raise ValueError("approximation requires mse > 0")
    return -(d / 2.0) * math.log(mse / d)


def gaussian_mi(rho: float, d: int) -> float:
    """Analytic MI of d independent unit-Gaussian pairs with correlation rho."""
    if not -1.0 < rho < 1.0:
        raise ValueError("correlation must lie strictly inside (-1, 1)")
    return -(d / 2.0) * math.log(1.0 - rho * rho)


def empirical_pair_mse(rho: float, d: int, samples: int, seed: int,
                       chunk: int = 100_000) -> float:
    """Monte-Carlo E[||X - Y||^2] for correlated unit-Gaussian vectors."""
    rng = np.random.default_rng(seed)
    total = 0.0
    remaining = samples
    scale = math.sqrt(max(0.0, 1.0 - rho * rho))
    while remaining > 0:
        m = min(chunk, remaining)
        x = rng.standard_normal((m, d))
        y = rho * x + scale * rng.standard_normal((m, d))
        diff = x - y
        total += float(np.einsum("ij,ij->", diff, diff))
        remaining -= m
    return total / samples


def run_mi_check(rhos, dims, samples: int, seed: int) -> list[dict]:
    """Compare MC-estimated MI (via the exact MSE form) to the analytic value.

    Also reports how far the small-error approximation drifts from the
    exact form at the same empirical MSE.
    """
    from .seeding import derive_seed

    results = []
    for rho in rhos:
        for d in dims:
            mse = empirical_pair_mse(rho, d, samples,
                                     seed=derive_seed(seed, "mi-check", round(rho * 1e6), d))
            exact = mi_from_mse(mse, d)
            approx = mi_from_mse_approx(mse, d)
            if rho == 0.0:
                analytic = 0.0
                rel_err = abs(exact - analytic)  # absolute nats at the zero point
            else:
                analytic = gaussian_mi(rho, d)
                rel_err = abs(exact - analytic) / analytic
            results.append({
                "rho": rho,
                "d": d,
                "samples": samples,
                "mse": mse,
                "mse_over_d": mse / d,
                "mi_exact_form": exact,
                "mi_approx_form": approx,
                "mi_analytic": analytic,
                "rel_error": rel_err,
                "approx_vs_exact": abs(approx - exact) / max(abs(exact), 1e-12),
            })
    return results
