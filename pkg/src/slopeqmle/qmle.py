"""Quasi-maximum likelihood for binary choice with an assumed link.

The sample objective is the average quasi-log-likelihood

    Q_n(theta) = mean( 1{y=1} log F(z) + 1{y=-1} log(1 - F(z)) ),  z = alpha + x'beta,

maximised by Newton's method with step halving.  Because ``log F`` and
``log(1 - F)`` are strictly concave, ``Q_n`` is concave and any ascent
method started at zero reaches the unique interior maximum when one exists.

Inference uses the sandwich covariance ``A^{-1} B A^{-1} / n``, valid when
the link is misspecified.  Since the slope limit is a positive multiple of
the true slope, hypotheses invariant to scale (a zero slope, equal slopes,
a given slope ratio) can be tested with it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import stats

from .dgp import Dataset, ModelParams
from .links import LinkFamily, score_minus, score_plus

GRAD_TOL = 1e-9
STEP_TOL = 1e-10
MAX_ITER = 200
DIVERGENCE_NORM = 1e4


class EstimationError(RuntimeError):
    """Base class for estimation failures."""


class SeparationError(EstimationError):
    """No interior maximum: the sample is (quasi-)perfectly separated."""


class CollinearityError(EstimationError):
    """The design ``[1, X]`` is rank deficient or the Hessian is singular."""


class NotConvergedError(EstimationError):
    """Inference requested on a fit that did not converge."""


# --------------------------------------------------------------------- #
# Objective and derivatives
# --------------------------------------------------------------------- #


def _theta_vec(theta) -> np.ndarray:
    if isinstance(theta, ModelParams):
        return theta.as_vector()
    return np.asarray(theta, dtype=float)


def _weights(data: Dataset, weights) -> np.ndarray:
    if weights is None:
        return np.ones(data.n)
    w = np.asarray(weights, dtype=float)
    if w.shape != (data.n,):
        raise ValueError("weights must have one entry per observation")
    return w


class _Evaluator:
    """Per-dataset cache of the outcome split, design matrix and weights."""

    def __init__(self, data: Dataset, link: LinkFamily, weights=None):
        self.data = data
        self.link = link
        self.pos = data.y == 1
        self.neg = ~self.pos
        self.design = data.design()
        self.w = _weights(data, weights)

    def index(self, theta) -> np.ndarray:
        theta = _theta_vec(theta)
        if theta.size != self.data.m + 1:
            raise ValueError(f"theta has {theta.size} entries, expected {self.data.m + 1}")
        return self.design @ theta

    def loglik_obs(self, theta) -> np.ndarray:
        z = self.index(theta)
        out = np.empty_like(z)
        out[self.pos] = self.link.log_cdf(z[self.pos])
        out[self.neg] = self.link.log_sf(z[self.neg])
        return out

    def objective(self, theta) -> float:
        return float(np.mean(self.w * self.loglik_obs(theta)))

    def residual_and_curvature(self, theta, curvature=True):
        # d/dz and d^2/dz^2 of the per-observation log-likelihood
        z = self.index(theta)
        g = np.empty_like(z)
        sp = score_plus(self.link, z[self.pos])
        sm = score_minus(self.link, z[self.neg])
        g[self.pos] = sp
        g[self.neg] = -sm
        if not curvature:
            return g, None
        slope = self.link.log_density_slope(z)
        h = np.empty_like(z)
        h[self.pos] = sp * (slope[self.pos] - sp)
        h[self.neg] = -sm * (slope[self.neg] + sm)
        return g, h

    def gradient(self, theta) -> np.ndarray:
        g, _ = self.residual_and_curvature(theta, curvature=False)
        return self.design.T @ (self.w * g) / self.data.n

    def gradient_hessian(self, theta):
        g, h = self.residual_and_curvature(theta)
        grad = self.design.T @ (self.w * g) / self.data.n
        hess = (self.design * (self.w * h)[:, None]).T @ self.design / self.data.n
        return grad, hess

    def scores(self, theta) -> np.ndarray:
        g, _ = self.residual_and_curvature(theta, curvature=False)
        return (self.w * g)[:, None] * self.design


def loglik_obs(data: Dataset, link: LinkFamily, theta) -> np.ndarray:
    """Per-observation quasi-log-likelihood contributions."""
    return _Evaluator(data, link).loglik_obs(theta)


def objective(data: Dataset, link: LinkFamily, theta, weights=None) -> float:
    """Average (optionally weighted) quasi-log-likelihood; always <= 0."""
    return _Evaluator(data, link, weights).objective(theta)


def score_obs(data: Dataset, link: LinkFamily, theta, weights=None) -> np.ndarray:
    """``(n, m+1)`` matrix of per-observation (weighted) scores."""
    return _Evaluator(data, link, weights).scores(theta)


def gradient(data: Dataset, link: LinkFamily, theta, weights=None) -> np.ndarray:
    """Gradient of :func:`objective`."""
    return _Evaluator(data, link, weights).gradient(theta)


def hessian(data: Dataset, link: LinkFamily, theta, weights=None) -> np.ndarray:
    """Hessian of :func:`objective` (negative semidefinite)."""
    return _Evaluator(data, link, weights).gradient_hessian(theta)[1]


# --------------------------------------------------------------------- #
# Fitting
# --------------------------------------------------------------------- #


@dataclass(frozen=True, eq=False)
class FitResult:
    """Outcome of a Newton fit.

    ``history`` holds the objective at every accepted iterate, starting
    with the initial value.
    """

    theta_hat: ModelParams
    loglik: float
    gradient_norm: float
    hessian: np.ndarray
    sandwich_cov: np.ndarray
    iterations: int
    converged: bool
    link: str
    n: int
    history: tuple = field(default=(), repr=False)

    @property
    def se_sandwich(self) -> np.ndarray:
        return np.sqrt(np.diag(self.sandwich_cov))

    def hessian_cov(self) -> np.ndarray:
        """Inverse-information covariance ``-A^{-1} / n``, valid only under correct specification."""
        return -np.linalg.inv(self.hessian) / self.n

    def to_dict(self) -> dict:
        return {
            "theta_hat": self.theta_hat.as_vector().tolist(),
            "se_sandwich": self.se_sandwich.tolist(),
            "loglik": self.loglik,
            "converged": self.converged,
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
            "link": self.link,
            "n": self.n,
        }


def _check_design(data: Dataset) -> None:
    if data.n < data.m + 1:
        raise CollinearityError(f"need at least {data.m + 1} observations, got {data.n}")
    if np.all(data.y == 1) or np.all(data.y == -1):
        raise SeparationError("only one outcome class in sample: the quasi-likelihood has no interior maximum")
    if np.linalg.matrix_rank(data.design()) < data.m + 1:
        raise CollinearityError("design matrix [1, X] is rank deficient")


def fit(
    data: Dataset,
    link: LinkFamily,
    init: Optional[Union[ModelParams, np.ndarray]] = None,
    weights=None,
    max_iter: int = MAX_ITER,
) -> FitResult:
    """Maximise the quasi-log-likelihood by damped Newton iteration.

    Parameters
    ----------
    data : Dataset
    link : LinkFamily
        Assumed error CDF.
    init : ModelParams or array, optional
        Starting value; defaults to zero.
    weights : array, optional
        Observation weights for the weighted objective ``mean(w * l_i)``.
    max_iter : int
        Iteration cap; ``converged`` is False when it is reached.

    Raises
    ------
    SeparationError
        When the iterates diverge (norm above 1e4, or curvature vanishing
        while the objective still improves).
    CollinearityError
        When ``[1, X]`` is rank deficient.
    """
    _check_design(data)
    ev = _Evaluator(data, link, weights)
    theta = np.zeros(data.m + 1) if init is None else _theta_vec(init).astype(float, copy=True)
    q = ev.objective(theta)
    history = [q]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        grad, hess = ev.gradient_hessian(theta)
        step = _newton_step(grad, hess)
        gnorm = float(np.max(np.abs(grad)))
        if gnorm < GRAD_TOL and float(np.max(np.abs(step))) < STEP_TOL:
            theta = theta + step
            converged = True
            break
        # accept a step iff it does not lower the objective, up to the
        # rounding floor of Q_n
        floor = 16 * np.finfo(float).eps * max(1.0, abs(q))
        t = 1.0
        while True:
            cand = theta + t * step
            q_new = ev.objective(cand)
            if np.isfinite(q_new) and q_new >= q - floor:
                break
            t *= 0.5
            if t < 1e-12:
                cand, q_new = theta, q
                break
        moved = bool(np.any(cand != theta))
        theta, q = cand, q_new
        history.append(q)
        if np.max(np.abs(theta)) > DIVERGENCE_NORM:
            raise SeparationError(f"|theta| exceeded {DIVERGENCE_NORM:g}: no interior maximum (separated sample)")
        if not moved:
            converged = gnorm < GRAD_TOL
            break
    grad, hess = ev.gradient_hessian(theta)
    return FitResult(
        theta_hat=ModelParams.from_vector(theta),
        loglik=ev.objective(theta),
        gradient_norm=float(np.max(np.abs(grad))),
        hessian=hess,
        sandwich_cov=_sandwich(ev, theta, hess),
        iterations=it,
        converged=converged,
        link=link.name,
        n=data.n,
        history=tuple(history),
    )


def _newton_step(grad, hess):
    try:
        eig_max = np.linalg.eigvalsh(hess).max()
        if eig_max >= 0 or -eig_max < 1e-14 * max(1.0, -np.trace(hess)):
            raise np.linalg.LinAlgError
        return -np.linalg.solve(hess, grad)
    except np.linalg.LinAlgError:
        raise SeparationError(
            "quasi-likelihood curvature vanished while ascending: no interior maximum (separated sample)"
        ) from None


def _sandwich(ev: _Evaluator, theta, hess) -> np.ndarray:
    s = ev.scores(theta)
    meat = s.T @ s / ev.data.n
    try:
        a_inv = np.linalg.inv(hess)
    except np.linalg.LinAlgError:
        raise CollinearityError("singular Hessian: covariates are collinear") from None
    cov = a_inv @ meat @ a_inv / ev.data.n
    return (cov + cov.T) / 2


def sandwich_covariance(data: Dataset, link: LinkFamily, theta_hat, weights=None) -> np.ndarray:
    """Robust covariance ``A^{-1} B A^{-1} / n`` at ``theta_hat``.

    ``A`` is the Hessian of the average objective and ``B`` the average
    outer product of per-observation scores.
    """
    ev = _Evaluator(data, link, weights)
    hess = ev.gradient_hessian(theta_hat)[1]
    return _sandwich(ev, _theta_vec(theta_hat), hess)


# --------------------------------------------------------------------- #
# Scale-invariant inference
# --------------------------------------------------------------------- #


@dataclass(frozen=True)
class Zero:
    """``beta_j = 0`` (0-based slope index)."""

    j: int


@dataclass(frozen=True)
class Equal:
    """``beta_j = beta_k``."""

    j: int
    k: int


@dataclass(frozen=True)
class Ratio:
    """``beta_j = rho * beta_k``."""

    j: int
    k: int
    rho: float


Hypothesis = Union[Zero, Equal, Ratio]


@dataclass(frozen=True)
class HypothesisResult:
    statistic: float
    p_value: float
    hypothesis: Hypothesis


def _contrast(h: Hypothesis, m: int) -> np.ndarray:
    idx = [h.j] + ([h.k] if not isinstance(h, Zero) else [])
    if any(not 0 <= i < m for i in idx):
        raise ValueError(f"slope index out of range for m = {m}")
    if not isinstance(h, Zero) and h.j == h.k:
        raise ValueError("j and k must differ")
    r = np.zeros(m + 1)
    r[1 + h.j] = 1.0
    if isinstance(h, Equal):
        r[1 + h.k] = -1.0
    elif isinstance(h, Ratio):
        r[1 + h.k] = -h.rho
    return r


def test_scale_invariant(fit: FitResult, hypothesis: Hypothesis) -> HypothesisResult:
    """Wald test of a scale-invariant linear restriction on the slopes.

    Uses the sandwich covariance; the statistic is chi-squared with one
    degree of freedom under the null.
    """
    if not fit.converged:
        raise NotConvergedError("hypothesis tests need a converged fit")
    r = _contrast(hypothesis, fit.theta_hat.m)
    est = r @ fit.theta_hat.as_vector()
    var = r @ fit.sandwich_cov @ r
    stat = float(est * est / var)
    return HypothesisResult(stat, float(stats.chi2.sf(stat, 1)), hypothesis)


test_scale_invariant.__test__ = False  # not a pytest test


def ratio_confint(fit: FitResult, j: int, k: int, level: float = 0.95) -> tuple[float, float, float]:
    """Delta-method interval for ``beta_j / beta_k``; returns ``(estimate, lower, upper)``."""
    if not fit.converged:
        raise NotConvergedError("confidence intervals need a converged fit")
    b = fit.theta_hat.beta
    est = b[j] / b[k]
    grad = np.zeros(fit.theta_hat.m + 1)
    grad[1 + j] = 1.0 / b[k]
    grad[1 + k] = -b[j] / b[k] ** 2
    se = math.sqrt(grad @ fit.sandwich_cov @ grad)
    zq = stats.norm.ppf(0.5 + level / 2)
    return float(est), float(est - zq * se), float(est + zq * se)
