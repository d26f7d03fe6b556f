"""2-D projections of an embedding space: PCA and exact t-SNE."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .align import EmbeddingSpace
from .rng import substream

log = logging.getLogger(__name__)


@dataclass
class Projection2D:
    keys: list[tuple[int, int]]  # (graph id, node index), one per row of coords
    coords: np.ndarray
    method: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if self.coords.shape != (len(self.keys), 2):
            raise ValueError("need exactly one (x, y) per node")
        if not np.isfinite(self.coords).all():
            raise ValueError("projection produced non-finite coordinates")

    def as_dict(self) -> dict[tuple[int, int], tuple[float, float]]:
        return {k: (float(x), float(y)) for k, (x, y) in zip(self.keys, self.coords)}


def power_iteration(A: np.ndarray, rng, tol: float = 1e-13, max_iter: int = 10000):
    """Dominant eigenpair of a symmetric PSD matrix."""
    v = rng.standard_normal(A.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = A @ v
        norm = np.linalg.norm(w)
        if norm == 0:
            return 0.0, v
        w /= norm
        lam_new = float(w @ A @ w)
        converged = abs(lam_new - lam) <= tol * max(abs(lam_new), 1e-300) and np.linalg.norm(w - v) < 1e-9
        v, lam = w, lam_new
        if converged:
            break
    return lam, v


def principal_components(X: np.ndarray, n_components: int = 2, rng_seed: int = 0):
    """Top principal directions by power iteration with deflation (columns of the result)."""
    Xc = X - X.mean(axis=0)
    C = Xc.T @ Xc / max(len(X) - 1, 1)
    rng = substream(rng_seed, "pca")
    comps, lams = [], []
    A = C.copy()
    for _ in range(n_components):
        lam, v = power_iteration(A, rng)
        # re-orthogonalise against earlier components to mop up deflation round-off
        for u in comps:
            v = v - (u @ v) * u
        nv = np.linalg.norm(v)
        v = v / nv if nv > 0 else v
        v = v if v[np.argmax(np.abs(v))] >= 0 else -v
        comps.append(v)
        lams.append(lam)
        A = A - lam * np.outer(v, v)
    return np.column_stack(comps), np.array(lams)


def pca(X: np.ndarray, rng_seed: int = 0) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < 2 or X.shape[1] < 2:
        raise ValueError("PCA needs at least 2 points of dimension >= 2")
    Xc = X - X.mean(axis=0)
    if not np.any(Xc):
        log.warning("all points identical; projection is all zeros")
        return np.zeros((len(X), 2))
    comps, _ = principal_components(X, 2, rng_seed)
    return Xc @ comps


def pca_project(space: EmbeddingSpace, rng_seed: int = 0) -> Projection2D:
    return Projection2D(space.keys(), pca(space.stacked(), rng_seed), "PCA", {"rng_seed": rng_seed})


def _entropy_and_probs(d_row: np.ndarray, beta: float):
    """Shannon entropy (nats) and conditional probabilities of a Gaussian kernel row."""
    shifted = d_row - d_row.min()
    p = np.exp(-shifted * beta)
    s = p.sum()
    p /= s
    H = float(beta * (shifted * p).sum() + math.log(s))
    return H, p


def conditional_affinities(X: np.ndarray, perplexity: float, tol: float = 1e-5, max_iter: int = 200):
    """Row-stochastic ``P[j|i]`` with each row's entropy matched to ``log(perplexity)`` by bisection.

    Returns ``(P, entropies)``.
    """
    n = X.shape[0]
    sq = (X * X).sum(axis=1)
    D = np.maximum(sq[:, None] + sq[None, :] - 2 * X @ X.T, 0.0)
    target = math.log(perplexity)
    P = np.zeros((n, n))
    H_all = np.zeros(n)
    for i in range(n):
        d_row = np.delete(D[i], i)
        beta, lo, hi = 1.0, 0.0, math.inf
        H, p = _entropy_and_probs(d_row, beta)
        for _ in range(max_iter):
            if abs(H - target) < tol:
                break
            if H > target:
                lo = beta
                beta = beta * 2 if hi == math.inf else (beta + hi) / 2
            else:
                hi = beta
                beta = (beta + lo) / 2
            H, p = _entropy_and_probs(d_row, beta)
        P[i, np.arange(n) != i] = p
        H_all[i] = H
    return P, H_all


def joint_affinities(X: np.ndarray, perplexity: float) -> np.ndarray:
    P, _ = conditional_affinities(X, perplexity)
    P = (P + P.T) / (2 * X.shape[0])
    return P


def _student_q(Y: np.ndarray):
    sq = (Y * Y).sum(axis=1)
    num = 1.0 / (1.0 + np.maximum(sq[:, None] + sq[None, :] - 2 * Y @ Y.T, 0.0))
    np.fill_diagonal(num, 0.0)
    return num / num.sum(), num


def kl_divergence(P: np.ndarray, Y: np.ndarray) -> float:
    Q, _ = _student_q(Y)
    mask = P > 0
    return float((P[mask] * np.log(P[mask] / np.maximum(Q[mask], 1e-300))).sum())


def tsne(X, perplexity: float = 30.0, iterations: int = 1000, rng_seed: int = 0,
         learning_rate: float = 200.0, exaggeration: float = 12.0, switch_iter: int = 250,
         history: dict | None = None) -> np.ndarray:
    """Exact t-SNE to two dimensions.

    Early exaggeration and momentum 0.5 for the first ``switch_iter``
    iterations, then momentum 0.8. Per-coordinate gains adapt the step.
    ``history``, when given, receives the KL divergence at ``switch_iter`` and
    at the last iteration.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if not 4 <= n <= 10000:
        raise ValueError(f"exact t-SNE needs 4 <= n <= 10000 points, got {n}")
    if not 1 < perplexity < (n - 1) / 3:
        raise ValueError(f"perplexity must lie in (1, {(n - 1) / 3:.3g}), got {perplexity}")
    P = joint_affinities(X, perplexity)
    P = np.maximum(P, 1e-300)
    np.fill_diagonal(P, 0.0)

    rng = substream(rng_seed, "tsne")
    Y = 1e-4 * rng.standard_normal((n, 2))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    for it in range(1, iterations + 1):
        early = it <= switch_iter
        Pe = P * exaggeration if early else P
        Q, num = _student_q(Y)
        W = (Pe - Q) * num
        grad = 4.0 * (np.diag(W.sum(axis=1)) - W) @ Y
        momentum = 0.5 if early else 0.8
        same_sign = np.sign(grad) == np.sign(update)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        gains = np.maximum(gains, 0.01)
        update = momentum * update - learning_rate * gains * grad
        Y = Y + update
        Y = Y - Y.mean(axis=0)
        if history is not None and it == switch_iter:
            history["kl_switch"] = kl_divergence(P, Y)
    if history is not None:
        history["kl_final"] = kl_divergence(P, Y)
    return Y


def tsne_project(space: EmbeddingSpace, perplexity: float = 30.0, iterations: int = 1000,
                 rng_seed: int = 0) -> Projection2D:
    info: dict = {}
    Y = tsne(space.stacked(), perplexity, iterations, rng_seed, history=info)
    params = {"perplexity": perplexity, "iterations": iterations, "rng_seed": rng_seed, **info}
    return Projection2D(space.keys(), Y, "TSNE", params)
