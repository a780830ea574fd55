"""Observation weights that make the covariate law look normal.

Weights ``w_i = sigma(x_i) / tau(x_i)`` with ``tau`` a kernel density
estimate of the covariates and ``sigma`` a normal target density.  Under
the weighted empirical law the covariates are approximately normal, hence
elliptical, so ``E(X | V)`` is linear in the index and the weighted QMLE
recovers the slope direction.

The target is the standard normal density of the *standardised*
covariates, i.e. ``N(mean(x), cov(x))``; since the QMLE is affine
equivariant this is the same as standardising first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy import ndimage, stats

from .dgp import Dataset
from .links import LinkFamily
from . import qmle

EXACT_LIMIT = 2e7  # kernel evaluations above which the binned estimator is used
GRID_PER_BANDWIDTH = 6


class WeightingError(ValueError):
    """Raised when weights cannot be formed reliably."""


def silverman_bandwidth(x: np.ndarray) -> np.ndarray:
    """Per-coordinate normal-reference bandwidth ``sd_j * (4 / ((m + 2) n))^(1 / (m + 4))``."""
    x = np.atleast_2d(np.asarray(x, dtype=float).T).T
    n, m = x.shape
    sd = x.std(axis=0, ddof=1)
    return sd * (4.0 / ((m + 2) * n)) ** (1.0 / (m + 4))


class ProductKDE:
    """Product Gaussian kernel density estimate.

    Evaluation is exact (chunked) when ``n * n_query`` is small and uses
    linear binning on a regular grid plus separable Gaussian smoothing
    otherwise.
    """

    def __init__(self, x: np.ndarray, bandwidth: np.ndarray, method: str = "auto"):
        self.x = np.atleast_2d(np.asarray(x, dtype=float).T).T
        self.bandwidth = np.asarray(bandwidth, dtype=float)
        self.method = method
        self._binned = None

    @property
    def m(self) -> int:
        return self.x.shape[1]

    def __call__(self, q) -> np.ndarray:
        q = np.atleast_2d(np.asarray(q, dtype=float))
        if q.shape[1] != self.m and q.shape[0] == self.m and self.m > 1:
            q = q.T
        if self.m == 1 and q.shape[1] != 1:
            q = q.reshape(-1, 1)
        method = self.method
        if method == "auto":
            method = "exact" if self.x.shape[0] * q.shape[0] <= EXACT_LIMIT else "binned"
        if method == "exact":
            return self._exact(q)
        if method == "binned":
            return self._binned_eval(q)
        raise ValueError(f"unknown KDE method {self.method!r}")

    def _exact(self, q):
        h = self.bandwidth
        norm = self.x.shape[0] * np.prod(h) * (2 * math.pi) ** (self.m / 2)
        out = np.empty(q.shape[0])
        chunk = max(1, int(4e6 // self.x.shape[0]))
        xs = self.x / h
        for start in range(0, q.shape[0], chunk):
            qs = q[start : start + chunk] / h
            d2 = ((qs[:, None, :] - xs[None, :, :]) ** 2).sum(axis=2)
            out[start : start + chunk] = np.exp(-0.5 * d2).sum(axis=1)
        return out / norm

    def _grid(self):
        if self._binned is None:
            h = self.bandwidth
            lo = self.x.min(axis=0) - 4 * h
            hi = self.x.max(axis=0) + 4 * h
            sizes = np.minimum(np.ceil((hi - lo) / h * GRID_PER_BANDWIDTH).astype(int) + 1, 2048)
            step = (hi - lo) / (sizes - 1)
            counts = _linear_binning(self.x, lo, step, sizes)
            smooth = ndimage.gaussian_filter(counts, sigma=h / step, mode="constant", truncate=5.0)
            smooth /= self.x.shape[0] * np.prod(step)
            self._binned = (lo, step, smooth)
        return self._binned

    def _binned_eval(self, q):
        lo, step, smooth = self._grid()
        coords = ((q - lo) / step).T
        return np.maximum(ndimage.map_coordinates(smooth, coords, order=1, mode="constant", cval=0.0), 0.0)


def _linear_binning(x, lo, step, sizes):
    # distribute each point's unit mass over the 2^m surrounding grid nodes
    pos = (x - lo) / step
    base = np.clip(np.floor(pos).astype(int), 0, sizes - 2)
    frac = pos - base
    counts = np.zeros(tuple(sizes))
    m = x.shape[1]
    for corner in range(2**m):
        bits = [(corner >> j) & 1 for j in range(m)]
        w = np.ones(x.shape[0])
        idx = []
        for j, bit in enumerate(bits):
            w = w * (frac[:, j] if bit else 1 - frac[:, j])
            idx.append(base[:, j] + bit)
        np.add.at(counts, tuple(idx), w)
    return counts


def kernel_density(data: Union[Dataset, np.ndarray], bandwidth: Union[str, np.ndarray] = "auto", method: str = "auto") -> ProductKDE:
    """Product Gaussian KDE of the covariates; ``bandwidth="auto"`` uses Silverman's rule."""
    x = data.x if isinstance(data, Dataset) else np.atleast_2d(np.asarray(data, dtype=float).T).T
    n, m = x.shape
    if n < 50 * m:
        raise WeightingError(f"kernel density needs n >= 50 m = {50 * m}, got {n}")
    if np.any(x.std(axis=0) == 0):
        raise WeightingError("degenerate covariate: a column has zero variance")
    h = silverman_bandwidth(x) if isinstance(bandwidth, str) and bandwidth == "auto" else np.broadcast_to(np.asarray(bandwidth, dtype=float), (m,)).copy()
    if np.any(h <= 0):
        raise WeightingError("bandwidths must be positive")
    return ProductKDE(x, h, method)


@dataclass(frozen=True, eq=False)
class WeightPlan:
    """Observation weights (mean one) with the densities that produced them."""

    target_density: Callable
    bandwidth: np.ndarray
    weights: np.ndarray
    trim_quantile: float
    trimmed_mass: float
    max_ratio: float

    def to_csv(self, path=None) -> Optional[str]:
        text = "w\n" + "".join(f"{w!r}\n" for w in self.weights.tolist())
        if path is None:
            return text
        with open(path, "w") as fh:
            fh.write(text)
        return None


def read_weights_csv(path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "w":
            raise WeightingError("weights CSV must have the single header 'w'")
        return np.array([float(line) for line in fh if line.strip()])


def normal_target(x: np.ndarray) -> Callable:
    """Normal density with the sample mean and covariance of ``x``."""
    mean = x.mean(axis=0)
    cov = np.atleast_2d(np.cov(x, rowvar=False))
    return stats.multivariate_normal(mean, cov).pdf


def compute_weights(
    data: Dataset,
    target: Union[str, Callable] = "normal",
    trim_quantile: float = 0.01,
    bandwidth: Union[str, np.ndarray] = "auto",
    max_ratio: float = 100.0,
    method: str = "auto",
) -> WeightPlan:
    """Form ``w_i = target(x_i) / kde(x_i)``, cap them and rescale to mean one.

    Weights above the ``1 - trim_quantile`` quantile are set to that
    quantile.  More than 20% of the weight mass removed this way signals
    that the target puts mass where the covariates have none.
    """
    if not 0 <= trim_quantile <= 0.2:
        raise WeightingError("trim_quantile must lie in [0, 0.2]")
    kde = kernel_density(data, bandwidth, method)
    sigma = normal_target(data.x) if target == "normal" else target
    if not callable(sigma):
        raise WeightingError(f"unknown target {target!r}")
    tau = kde(data.x)
    if np.any(tau <= 0):
        raise WeightingError("kernel density vanished at a sample point")
    raw = np.asarray(sigma(data.x), dtype=float).reshape(-1) / tau
    if not np.all(np.isfinite(raw) & (raw > 0)):
        raise WeightingError("non-finite or non-positive raw weights")
    cap = np.quantile(raw, 1 - trim_quantile) if trim_quantile > 0 else np.inf
    w = np.minimum(raw, cap)
    trimmed = float(1 - w.sum() / raw.sum())
    if trimmed > 0.2:
        raise WeightingError(f"trimming removed {trimmed:.1%} of the weight mass: target and covariate supports disagree")
    w = w / w.mean()
    ratio = float(w.max())
    if ratio > max_ratio:
        raise WeightingError(f"max weight / mean weight = {ratio:.1f} exceeds cap {max_ratio:g}")
    return WeightPlan(sigma, kde.bandwidth, w, trim_quantile, trimmed, max_ratio)


def fit_weighted(data: Dataset, link: LinkFamily, plan: Union[WeightPlan, np.ndarray], **kwargs) -> qmle.FitResult:
    """QMLE of the weighted objective ``mean(w_i l_i(theta))``; weights are treated as fixed."""
    w = plan.weights if isinstance(plan, WeightPlan) else np.asarray(plan, dtype=float)
    return qmle.fit(data, link, weights=w, **kwargs)


def linearity_gap(x: np.ndarray, v: np.ndarray, weights: Optional[np.ndarray] = None, bins: int = 10) -> float:
    """Largest deviation of within-decile covariate means from the (weighted) linear fit on ``v``.

    Deciles of ``v`` are formed under the weighted empirical law; the
    deviation is scaled by each covariate's standard deviation.
    """
    w = np.ones(v.size) if weights is None else np.asarray(weights, dtype=float)
    design = np.column_stack([np.ones_like(v), v])
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(design * sw[:, None], x * sw[:, None], rcond=None)
    resid = x - design @ coef
    order = np.argsort(v, kind="stable")
    cw = np.cumsum(w[order]) / w.sum()
    labels = np.empty(v.size, dtype=int)
    labels[order] = np.minimum((cw * bins).astype(int), bins - 1)
    sd = np.sqrt(np.average((x - np.average(x, axis=0, weights=w)) ** 2, axis=0, weights=w))
    gaps = [np.abs(np.average(resid[labels == k], axis=0, weights=w[labels == k])) / sd for k in range(bins)]
    return float(np.max(gaps))
