"""Population quantities of the restricted quasi-likelihood and their roots.

Everything here is a one-dimensional expectation over the law of the true
index ``V = alpha0 + X'beta0``.  Restricting the quasi-likelihood to the ray
``theta = c * theta0 + (r, 0)`` leaves the two moment functions

    phi(c, r) = E[ Pi(V) l+(cV + r) - (1 - Pi(V)) l-(cV + r) ]
    psi(c, r) = E[ (Pi(V) l+(cV + r) - (1 - Pi(V)) l-(cV + r)) V ]

where ``Pi(v) = P{Y = 1 | V = v}`` and ``l+``/``l-`` are the link's score
ratios.  The pseudo-true pair ``(c*, r*)`` is found by the nested scheme:

1. for fixed ``c >= 0``, ``phi(c, .)`` is strictly decreasing, so its root
   ``r(c)`` is bracketed by doubling and polished with Brent's method;
2. ``psi(0, r(0)) > 0``;
3. ``psi(c, r(c)) < 0`` for some finite ``c``, found by doubling ``c``;

after which Brent's method on ``c -> psi(c, r(c))`` gives ``c* > 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize, special, stats

from .links import LinkFamily, score_minus, score_plus

DEFAULT_NODES = 256
C_CAP = 2.0**60
R_CAP = 1e6


class PopulationError(RuntimeError):
    """Base class for failures of the population solver."""


class IntegrandError(PopulationError):
    """A quadrature integrand was not finite at some node."""


class IntegrabilityError(PopulationError):
    """The root of phi(c, .) could not be bracketed within |r| <= 1e6."""


class AssumptionViolation(PopulationError):
    """psi(0) <= 0: the sign structure the existence argument needs fails."""


class BracketFailure(PopulationError):
    """psi(c) kept its sign up to the cap on c."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


# --------------------------------------------------------------------- #
# Index laws and quadrature grids
# --------------------------------------------------------------------- #


@dataclass(frozen=True, eq=False)
class IndexLaw:
    """One-dimensional law of the index ``V``.

    ``kind`` is ``"normal"``, ``"t"`` (location-scale Student t) or
    ``"normal-mixture"``.  For the first two ``loc``/``scale`` locate the
    law; the mixture uses ``weights``, ``locs`` and ``scales``.
    """

    kind: str
    loc: float = 0.0
    scale: float = 1.0
    dof: Optional[float] = None
    weights: tuple = ()
    locs: tuple = ()
    scales: tuple = ()

    @classmethod
    def normal(cls, mean: float, variance: float) -> "IndexLaw":
        if not variance > 0:
            raise ValueError("index variance must be positive")
        return cls("normal", loc=float(mean), scale=math.sqrt(variance))

    @classmethod
    def student_t(cls, loc: float, scale: float, dof: float) -> "IndexLaw":
        if not (scale > 0 and dof > 0):
            raise ValueError("t index law needs positive scale and dof")
        return cls("t", loc=float(loc), scale=float(scale), dof=float(dof))

    @classmethod
    def normal_mixture(cls, weights, means, variances) -> "IndexLaw":
        w = np.asarray(weights, dtype=float)
        if np.any(w <= 0) or abs(w.sum() - 1) > 1e-12:
            raise ValueError("mixture weights must be positive and sum to one")
        sd = np.sqrt(np.asarray(variances, dtype=float))
        return cls(
            "normal-mixture",
            weights=tuple(w),
            locs=tuple(float(m) for m in means),
            scales=tuple(float(s) for s in sd),
        )

    def _frozen(self):
        if self.kind == "normal":
            return stats.norm(self.loc, self.scale)
        if self.kind == "t":
            return stats.t(self.dof, loc=self.loc, scale=self.scale)
        raise AttributeError

    def density(self, v):
        v = np.asarray(v, dtype=float)
        if self.kind == "normal-mixture":
            return sum(w * stats.norm.pdf(v, m, s) for w, m, s in zip(self.weights, self.locs, self.scales))
        return self._frozen().pdf(v)

    def cdf(self, v):
        v = np.asarray(v, dtype=float)
        if self.kind == "normal-mixture":
            return sum(w * stats.norm.cdf(v, m, s) for w, m, s in zip(self.weights, self.locs, self.scales))
        return self._frozen().cdf(v)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind != "normal-mixture":
            return self._frozen().ppf(u)
        lo = min(m - 40 * s for m, s in zip(self.locs, self.scales))
        hi = max(m + 40 * s for m, s in zip(self.locs, self.scales))
        flat = [optimize.brentq(lambda x, p=p: float(self.cdf(x)) - p, lo, hi, xtol=1e-13) for p in u.ravel()]
        return np.asarray(flat).reshape(u.shape)

    @property
    def moments(self) -> tuple[float, float]:
        """(mean, variance); the variance is ``inf`` for t with dof <= 2."""
        if self.kind == "normal":
            return self.loc, self.scale**2
        if self.kind == "t":
            var = self.scale**2 * self.dof / (self.dof - 2) if self.dof > 2 else math.inf
            return self.loc, var
        w, m, s = (np.asarray(a) for a in (self.weights, self.locs, self.scales))
        mean = float(w @ m)
        return mean, float(w @ (s**2 + m**2) - mean**2)


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Nodes and probability weights approximating ``E[g(V)]`` by ``sum(w * g(nodes))``."""

    nodes: np.ndarray
    weights: np.ndarray
    scheme: str

    @property
    def node_count(self) -> int:
        return int(self.nodes.size)

    def expect(self, values) -> float:
        return np.asarray(values) @ self.weights


def _gauss_hermite(loc, scale, n):
    x, w = special.roots_hermitenorm(n)
    return loc + scale * x, w / math.sqrt(2.0 * math.pi)


def _tanh_sinh_quantile(law: IndexLaw, n: int):
    # u(t) = 1 / (1 + exp(-pi sinh t)); both tails reach ~1e-200 at t = +-t_max.
    t_max = math.asinh(460.0 / math.pi)
    t = np.linspace(-t_max, t_max, n)
    h = t[1] - t[0]
    s = math.pi * np.sinh(t)
    u = special.expit(s)
    upper = special.expit(-s)
    du = h * math.pi * np.cosh(t) * u * upper
    frozen = law._frozen()
    nodes = np.where(u < 0.5, frozen.ppf(u), frozen.isf(upper))
    keep = np.isfinite(nodes) & (du > 0)
    return nodes[keep], du[keep]


def make_grid(law: IndexLaw, node_count: int = DEFAULT_NODES, scheme: Optional[str] = None) -> QuadratureGrid:
    """Build a probability-normalised quadrature grid for ``law``.

    Gauss-Hermite is used for normal laws (per component for mixtures),
    tanh-sinh in the quantile domain for t laws.  ``"quantile-midpoint"``
    is available for any law as a crude cross-check.
    """
    if node_count < 64:
        raise ValueError("quadrature grids need at least 64 nodes")
    if scheme is None:
        scheme = "tanh-sinh" if law.kind == "t" else "gauss-hermite"
    if scheme == "gauss-hermite":
        if law.kind == "normal":
            nodes, weights = _gauss_hermite(law.loc, law.scale, node_count)
        elif law.kind == "normal-mixture":
            parts = [_gauss_hermite(m, s, node_count) for m, s in zip(law.locs, law.scales)]
            nodes = np.concatenate([p[0] for p in parts])
            weights = np.concatenate([w * p[1] for w, p in zip(law.weights, parts)])
        else:
            raise ValueError("Gauss-Hermite grids need a normal or normal-mixture index law")
    elif scheme == "tanh-sinh":
        if law.kind == "normal-mixture":
            raise ValueError("tanh-sinh grids are built from a closed-form quantile")
        nodes, weights = _tanh_sinh_quantile(law, node_count)
    elif scheme == "quantile-midpoint":
        nodes = np.asarray(law.quantile((np.arange(node_count) + 0.5) / node_count), dtype=float)
        weights = np.full(node_count, 1.0 / node_count)
    else:
        raise ValueError(f"unknown quadrature scheme {scheme!r}")
    weights = weights / weights.sum()
    order = np.argsort(nodes, kind="stable")
    return QuadratureGrid(nodes=nodes[order], weights=weights[order], scheme=scheme)


# --------------------------------------------------------------------- #
# Moment functions
# --------------------------------------------------------------------- #


def _grid(law, grid):
    return make_grid(law) if grid is None else grid


def generalized_residual(c, r, pi_values, nodes, link: LinkFamily):
    """``Pi(v) l+(cv + r) - (1 - Pi(v)) l-(cv + r)`` evaluated at ``nodes``.

    ``c`` and ``r`` broadcast against ``nodes``.
    """
    z = np.asarray(c)[..., None] * nodes + np.asarray(r)[..., None]
    if not np.all(np.isfinite(z)):
        raise IntegrandError("non-finite index at a quadrature node")
    g = pi_values * score_plus(link, z) - (1.0 - pi_values) * score_minus(link, z)
    if not np.all(np.isfinite(g)):
        raise IntegrandError(f"non-finite {link.name} score at a quadrature node")
    return g


def phi(c, r, pi, law: IndexLaw, link: LinkFamily, grid: Optional[QuadratureGrid] = None):
    """Intercept moment ``E[Pi(V) l+(cV+r) - (1-Pi(V)) l-(cV+r)]``."""
    grid = _grid(law, grid)
    g = generalized_residual(c, r, pi(grid.nodes), grid.nodes, link)
    return g @ grid.weights


def psi(c, r, pi, law: IndexLaw, link: LinkFamily, grid: Optional[QuadratureGrid] = None):
    """Index moment ``E[(Pi(V) l+(cV+r) - (1-Pi(V)) l-(cV+r)) V]``."""
    grid = _grid(law, grid)
    g = generalized_residual(c, r, pi(grid.nodes), grid.nodes, link)
    return g @ (grid.weights * grid.nodes)


def restricted_population_loglik(c, r, pi, law: IndexLaw, link: LinkFamily, grid: Optional[QuadratureGrid] = None):
    """Population quasi-log-likelihood on the ray ``theta = c*theta0 + (r, 0)``.

    ``c`` and ``r`` may be arrays; they broadcast against each other.
    """
    grid = _grid(law, grid)
    p = pi(grid.nodes)
    z = np.asarray(c, dtype=float)[..., None] * grid.nodes + np.asarray(r, dtype=float)[..., None]
    ll = p * link.log_cdf(z) + (1.0 - p) * link.log_sf(z)
    if not np.all(np.isfinite(ll)):
        raise IntegrandError("non-finite log-likelihood at a quadrature node")
    return ll @ grid.weights


# --------------------------------------------------------------------- #
# Root finding
# --------------------------------------------------------------------- #


class _Problem:
    """Caches ``Pi`` on the grid so the nested solver evaluates it once."""

    def __init__(self, pi, law, link, grid):
        self.link = link
        self.grid = _grid(law, grid)
        self.pi_values = pi(self.grid.nodes)
        self.vw = self.grid.weights * self.grid.nodes

    def moments(self, c, r):
        g = generalized_residual(c, r, self.pi_values, self.grid.nodes, self.link)
        return g @ self.grid.weights, g @ self.vw

    def phi(self, c, r):
        return self.moments(c, r)[0]

    def r_of_c(self, c, tol):
        f = lambda r: self.phi(c, r)
        k = 0
        while True:
            width = 2.0**k
            lo, hi = -width, width
            if f(lo) > 0 and f(hi) < 0:
                break
            k += 1
            if width > R_CAP:
                raise IntegrabilityError(f"phi({c}, r) did not change sign for |r| <= {R_CAP:g}")
        root = optimize.brentq(f, lo, hi, xtol=1e-12, rtol=4 * np.finfo(float).eps, maxiter=500)
        if abs(f(root)) >= tol:
            raise IntegrabilityError(f"|phi({c}, r(c))| = {abs(f(root)):.3g} exceeds tolerance {tol:g}")
        return root


def solve_r_given_c(c: float, pi, law: IndexLaw, link: LinkFamily, grid: Optional[QuadratureGrid] = None, tol: float = 1e-10) -> float:
    """Unique root ``r(c)`` of ``phi(c, .)`` for ``c >= 0``."""
    if c < 0:
        raise ValueError("c must be non-negative")
    return _Problem(pi, law, link, grid).r_of_c(float(c), tol)


@dataclass(frozen=True, eq=False)
class PseudoTrue:
    """Solution of the two restricted first-order conditions.

    ``bracket_history`` holds ``(c, r(c), psi(c))`` for every outer
    evaluation, in evaluation order.
    """

    c_star: float
    r_star: float
    phi_value: float
    psi_value: float
    theta_star: Optional[object] = None
    residual_full_foc: float = math.nan
    bracket_history: list = field(default_factory=list)

    @property
    def s_star(self) -> float:
        return self.r_star / self.c_star

    def trace_csv(self) -> str:
        lines = ["c,r,psi"]
        lines += [f"{c!r},{r!r},{p!r}" for c, r, p in self.bracket_history]
        return "\n".join(lines) + "\n"


def solve_pseudo_true(
    pi,
    law: IndexLaw,
    link: LinkFamily,
    grid: Optional[QuadratureGrid] = None,
    tol: float = 1e-10,
    theta0=None,
    a=None,
    b=None,
    c_cap: float = C_CAP,
) -> PseudoTrue:
    """Find ``(c*, r*)`` with ``c* > 0`` solving ``phi = psi = 0``.

    When ``theta0`` is given the result carries ``theta* = (c* alpha0 + r*,
    c* beta0)``; with ``a``/``b`` (the coefficients of ``E(X|V) = aV + b``)
    it also carries the sup-norm of the full first-order condition.
    The outer bracket doubles ``c`` from 1 up to ``c_cap``.
    """
    prob = _Problem(pi, law, link, grid)
    history = []

    def psi_of_c(c):
        r = prob.r_of_c(c, tol)
        val = prob.moments(c, r)[1]
        history.append((float(c), float(r), float(val)))
        return val

    psi0 = psi_of_c(0.0)
    if not psi0 > 0:
        raise AssumptionViolation(
            f"psi(0) = {psi0:.6g} <= 0; requires E(V | U <= V) > E(V | U > V) and P(U <= V) > 0"
        )
    lo, hi = 0.0, 1.0
    while True:
        try:
            if psi_of_c(hi) < 0:
                break
        except IntegrabilityError as exc:
            raise BracketFailure(f"bracket expansion stopped at c = {hi:g}: {exc}", list(history)) from None
        lo, hi = hi, 2.0 * hi
        if hi > c_cap:
            raise BracketFailure(f"psi(c) did not turn negative for c <= {c_cap:g}", list(history))
    c_star = optimize.brentq(psi_of_c, lo, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=500)
    r_star = prob.r_of_c(c_star, tol)
    phi_v, psi_v = prob.moments(c_star, r_star)
    if abs(psi_v) >= tol:
        raise PopulationError(f"|psi(c*)| = {abs(psi_v):.3g} exceeds tolerance {tol:g}")

    theta_star = None
    if theta0 is not None:
        theta_star = type(theta0)(c_star * theta0.alpha + r_star, c_star * np.asarray(theta0.beta, dtype=float))
    residual = math.nan
    if a is not None and b is not None:
        residual = _linear_foc_norm(phi_v, psi_v, a, b)
    return PseudoTrue(
        c_star=float(c_star),
        r_star=float(r_star),
        phi_value=float(phi_v),
        psi_value=float(psi_v),
        theta_star=theta_star,
        residual_full_foc=residual,
        bracket_history=history,
    )


def _linear_foc_norm(phi_v, psi_v, a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.max(np.abs(np.concatenate([[phi_v], a * psi_v + b * phi_v]))))


def foc_vector(c, r, pi, law, link, cond_mean: Callable, grid: Optional[QuadratureGrid] = None) -> np.ndarray:
    """Full ``(m+1)``-vector ``E[g(V) (1, E(X|V))]`` of the unrestricted FOC on the ray.

    ``cond_mean`` maps an array of index values to the ``(len(v), m)``
    array of ``E(X | V = v)``.  Valid whenever ``Pi`` is the conditional
    probability given ``V`` alone.
    """
    grid = _grid(law, grid)
    g = generalized_residual(c, r, pi(grid.nodes), grid.nodes, link)
    gw = g * grid.weights
    return np.concatenate([[gw.sum()], gw @ np.asarray(cond_mean(grid.nodes), dtype=float)])


def full_foc_residual(pt: PseudoTrue, a, b, pi, law, link, grid: Optional[QuadratureGrid] = None) -> float:
    """Sup-norm of the full FOC at ``(c*, r*)`` when ``E(X|V) = aV + b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cm = lambda v: np.outer(v, a) + b
    return float(np.max(np.abs(foc_vector(pt.c_star, pt.r_star, pi, law, link, cm, grid))))


def psi_curve(cs: Sequence[float], pi, law, link, grid=None, tol: float = 1e-10) -> np.ndarray:
    """``psi(c, r(c))`` on a list of ``c`` values."""
    prob = _Problem(pi, law, link, grid)
    out = []
    for c in cs:
        r = prob.r_of_c(float(c), tol)
        out.append(prob.moments(float(c), r)[1])
    return np.asarray(out)


def pseudo_true_for(spec, link: LinkFamily, node_count: int = DEFAULT_NODES, scheme: Optional[str] = None, tol: float = 1e-10) -> PseudoTrue:
    """Solve for ``(c*, r*)`` of a data generating process.

    The full-FOC residual uses the exact ``E(X | V)`` of the covariate law
    (linear for elliptical covariates).
    """
    from . import dgp

    law = dgp.index_distribution(spec)
    grid = make_grid(law, node_count, scheme)
    pi = dgp.pi_function(spec)
    a = b = None
    if spec.covariates.satisfies_linearity:
        a, b = dgp.linearity_coefficients(spec)
    pt = solve_pseudo_true(pi, law, link, grid, tol, theta0=spec.theta0, a=a, b=b)
    if not spec.errors.index_dependent:
        res = joint_index_foc_residual(spec, link, pt.c_star, pt.r_star)
        pt = PseudoTrue(**{**pt.__dict__, "residual_full_foc": res})
    elif a is None:
        cm = dgp.conditional_mean(spec)
        res = float(np.max(np.abs(foc_vector(pt.c_star, pt.r_star, pi, law, link, cm, grid))))
        pt = PseudoTrue(**{**pt.__dict__, "residual_full_foc": res})
    return pt


def joint_index_foc_residual(spec, link: LinkFamily, c: float, r: float, nodes: int = 96) -> float:
    """Full FOC sup-norm on the ray when the error scale depends on ``S = X'd``.

    For normal covariates ``(V, S)`` is bivariate normal, ``P(U <= V | X)
    = F_eps(V / sigma(S))`` and ``E(X | V, S)`` is linear, so the FOC is a
    two-dimensional Gauss-Hermite integral.
    """
    from . import dgp

    cov, th, err = spec.covariates, spec.theta0, spec.errors
    if cov.kind != "normal" or err.kind != "covariate-heteroskedastic":
        raise dgp.UnsupportedAnalysis("needs normal covariates and covariate-heteroskedastic errors")
    load = np.column_stack([th.beta, err.direction])
    mu = np.array([th.alpha + th.beta @ cov.mean, err.direction @ cov.mean])
    jcov = load.T @ cov.scale @ load
    chol = np.linalg.cholesky(jcov)
    x, w = special.roots_hermitenorm(nodes)
    w = w / w.sum()
    z1, z2 = np.meshgrid(x, x, indexing="ij")
    pts = mu + np.column_stack([z1.ravel(), z2.ravel()]) @ chol.T
    v, s = pts[:, 0], pts[:, 1]
    g = generalized_residual(c, r, err.base_cdf(v / err.scale_fn(s)), v, link)
    cond = cov.mean + (pts - mu) @ np.linalg.solve(jcov, load.T @ cov.scale)
    gw = g * np.outer(w, w).ravel()
    return float(np.max(np.abs(np.concatenate([[gw.sum()], gw @ cond]))))
