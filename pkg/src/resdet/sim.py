"""Synthetic data generators and evaluation metrics.

Data generators mirror the settings the detection pipeline is meant for:
autoregressive designs with strong local correlation, sparse Gaussian/probit
outcomes, and the step basis that turns change-point detection into sparse
regression. Evaluation scores a detection set against known truth with
resolution-adjusted power.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .core import CandidateGroup, DetectionSet, WeightFn, resolve_weights
from .errors import ValidationError

__all__ = [
    "gen_ark_design",
    "gen_sparse_glm",
    "GlmData",
    "changepoint_design",
    "evaluate",
    "EvalResult",
    "avg_jaccard",
]


def gen_ark_design(n: int, p: int, k: int = 5, seed: int = 0) -> np.ndarray:
    """n i.i.d. rows from a non-stationary order-k autoregression, unit variance.

    Column j is rho_0 Z_j + sum_l rho_l X_{j-l} with per-column coefficient
    vectors drawn from Dirichlet(0.2, 0.8/(k-1), ..., 0.8/(k-1)) and rescaled
    so the population variance of every column is exactly 1. k = 1
    degenerates to rho_0 = 1, i.e. independent standard normal columns.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 0], dtype=np.uint64)))
    Z = rng.standard_normal((n, p))
    if k == 1:
        return Z
    X = np.empty((n, p))
    # Population covariance of the columns, maintained alongside the samples
    # so the rescaling keeps Var(X_j) = 1 exactly.
    cov = np.zeros((p, p))
    alpha = np.concatenate([[0.2], np.full(k, 0.8 / (k - 1))])
    for j in range(p):
        lags = min(j, k)
        rho = rng.dirichlet(alpha[: lags + 1])
        if lags == 0:
            X[:, 0] = Z[:, 0]
            cov[0, 0] = 1.0
            continue
        lag_cov = cov[j - lags : j, j - lags : j][::-1, ::-1]
        var = rho[0] ** 2 + rho[1:] @ lag_cov @ rho[1:]
        rho = rho / math.sqrt(var)
        X[:, j] = rho[0] * Z[:, j]
        for l in range(1, lags + 1):
            X[:, j] += rho[l] * X[:, j - l]
        cov[j, j] = 1.0
        for i in range(j):
            c = 0.0
            for l in range(1, lags + 1):
                c += rho[l] * cov[j - l, i]
            cov[i, j] = cov[j, i] = c
    return X


@dataclass
class GlmData:
    outcome: np.ndarray  # y (gaussian) or z (probit)
    beta: np.ndarray
    signals: list[int]
    latent: Optional[np.ndarray] = None  # y behind a probit outcome


def gen_sparse_glm(
    X: np.ndarray,
    sparsity: float,
    tau2: float = 1.0,
    sigma2: float = 1.0,
    link: str = "gaussian",
    seed: int = 0,
) -> GlmData:
    """Sparse coefficients and an outcome for the given design.

    ceil(sparsity * p) coefficients are nonzero, drawn N(0, tau2) but
    resampled until |beta_j| > 0.1 * sqrt(tau2) so no signal is hopeless.
    Gaussian link returns y ~ N(X beta, sigma2 I); probit returns
    z = 1(y >= 0) with the latent y kept for reference.
    """
    if not (0.0 < sparsity <= 1.0):
        raise ValidationError(f"sparsity must lie in (0, 1], got {sparsity}")
    if link not in ("gaussian", "probit"):
        raise ValidationError(f"unknown link {link!r}")
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 1], dtype=np.uint64)))
    n_signals = math.ceil(sparsity * p)
    signals = sorted(rng.choice(p, size=n_signals, replace=False).tolist())
    tau = math.sqrt(tau2)
    beta = np.zeros(p)
    for j in signals:
        while True:
            b = rng.normal(0.0, tau)
            if abs(b) > 0.1 * tau:
                beta[j] = b
                break
    y = X @ beta + rng.normal(0.0, math.sqrt(sigma2), size=n)
    if link == "gaussian":
        return GlmData(outcome=y, beta=beta, signals=signals)
    return GlmData(outcome=(y >= 0).astype(np.int64), beta=beta, signals=signals, latent=y)


def changepoint_design(T: int) -> np.ndarray:
    """T x T step basis: column j is one from row j on.

    A sparse-regression signal at column j is a mean shift at time j, so
    change-point detection becomes variable selection on this design.
    """
    if T < 2:
        raise ValidationError(f"T must be >= 2, got {T}")
    return np.tril(np.ones((T, T)))


@dataclass
class EvalResult:
    power: float
    normalized_power: float
    fdp: float
    n_true: int
    n_false: int


def evaluate(
    detections: DetectionSet,
    truth: Union[Sequence[int], np.ndarray],
    weight_fn: Optional[WeightFn] = None,
    slack: float = 0.0,
) -> EvalResult:
    """Score discoveries against known truth.

    A plain discovery is true when a signal lies in (or within ``slack`` of)
    its region; a count-interval discovery is true when the number of signals
    in the region falls inside its interval. Power is the weighted count of
    true discoveries, normalized power divides by the number of true signals,
    and fdp is the false fraction of all discoveries.
    """
    if slack < 0:
        raise ValidationError("slack must be >= 0")
    groups = detections.groups
    weights = resolve_weights(groups, weight_fn) if groups else []
    truth_arr = np.asarray(truth)
    discrete = truth_arr.ndim <= 1

    power = 0.0
    n_true = 0
    for g, w in zip(groups, weights):
        if discrete:
            if g.region.kind != "index_set":
                raise ValidationError("discrete truth requires index_set regions")
            hits = sum(1 for t in truth_arr.tolist() if int(t) in g.region.indices)
        else:
            hits = sum(1 for pt in truth_arr if g.region.point_distance(pt) <= slack)
        if g.count_interval is not None:
            lo, hi = g.count_interval
            is_true = lo <= hits <= hi
        else:
            is_true = hits >= 1
        if is_true:
            n_true += 1
            power += w
    n_disc = len(groups)
    n_signals = len(truth_arr)
    return EvalResult(
        power=power,
        normalized_power=power / n_signals if n_signals else 0.0,
        fdp=(n_disc - n_true) / max(1, n_disc),
        n_true=n_true,
        n_false=n_disc - n_true,
    )


def _max_jaccard(g: CandidateGroup, others: Sequence[CandidateGroup]) -> float:
    a = set(g.region.indices)
    best = 0.0
    for o in others:
        b = set(o.region.indices)
        j = len(a & b) / len(a | b)
        best = max(best, j)
    return best


def avg_jaccard(det_a: DetectionSet, det_b: DetectionSet) -> float:
    """Symmetric average of best-match Jaccard similarities between two
    detection sets. Two empty sets count as identical (1); an empty set
    against a nonempty one counts as 0."""
    ga, gb = det_a.groups, det_b.groups
    for g in ga + gb:
        if g.region.kind != "index_set":
            raise ValidationError("avg_jaccard requires index_set regions")
    if not ga and not gb:
        return 1.0
    if not ga or not gb:
        return 0.0
    total = sum(_max_jaccard(g, gb) for g in ga) + sum(_max_jaccard(g, ga) for g in gb)
    return total / (len(ga) + len(gb))
