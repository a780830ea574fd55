"""Data generating processes for the binary choice model ``Y = sgn(alpha0 + X'beta0 - U)``.

A :class:`DgpSpec` pairs a covariate law with an error law and records which
of the identification / index assumptions it satisfies:

``A2.1``  median of ``U`` given ``X`` is zero
``A2.2``  last covariate has a positive density and nonzero coefficient,
          ``0 < P(Y=1|X) < 1``, covariates not confined to a subspace
``A3.1``  the law of ``U`` given ``X`` depends on ``X`` only through ``V``
``A3.2``  ``E(X | V)`` is affine in ``V``
"""

from __future__ import annotations

import configparser
import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import special, stats

from .population import IndexLaw

FLAGS = ("A2.1", "A2.2", "A3.1", "A3.2")


class SpecError(ValueError):
    """A model component violates one of its declared invariants."""


class DatasetError(ValueError):
    """A dataset violates a structural invariant."""


class UnsupportedAnalysis(RuntimeError):
    """A population quantity is not available in closed form for this spec."""


# --------------------------------------------------------------------- #
# Parameters
# --------------------------------------------------------------------- #


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Intercept and slope vector ``theta = (alpha, beta')'``."""

    alpha: float
    beta: np.ndarray

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float)).copy()
        if beta.ndim != 1 or beta.size < 1:
            raise SpecError("beta must be a non-empty vector")
        beta.setflags(write=False)
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", beta)

    @property
    def m(self) -> int:
        return self.beta.size

    def as_vector(self) -> np.ndarray:
        return np.concatenate([[self.alpha], self.beta])

    @classmethod
    def from_vector(cls, theta) -> "ModelParams":
        theta = np.asarray(theta, dtype=float)
        return cls(theta[0], theta[1:])

    @classmethod
    def zeros(cls, m: int) -> "ModelParams":
        return cls(0.0, np.zeros(m))

    def __repr__(self):
        return f"ModelParams(alpha={self.alpha!r}, beta={self.beta.tolist()!r})"


# --------------------------------------------------------------------- #
# Covariates
# --------------------------------------------------------------------- #


@dataclass(frozen=True, eq=False)
class CovariateModel:
    """Law of the covariate vector ``X``.

    ``kind`` is one of ``"normal"``, ``"t"``, ``"normal-mixture"`` or
    ``"custom"``.  Normal and t laws are elliptical and therefore satisfy
    linearity in expectation.  Custom samplers can declare an index law and
    a conditional mean through the optional callables.
    """

    kind: str
    mean: np.ndarray = None
    scale: np.ndarray = None
    dof: Optional[float] = None
    satisfies_linearity: bool = False
    components: tuple = ()
    sampler: Optional[Callable] = field(default=None, repr=False)
    dim: Optional[int] = None
    index_law_fn: Optional[Callable] = field(default=None, repr=False)
    conditional_mean_fn: Optional[Callable] = field(default=None, repr=False)

    @classmethod
    def normal(cls, mean, cov) -> "CovariateModel":
        mean, cov = _check_location_scale(mean, cov)
        return cls("normal", mean=mean, scale=cov, satisfies_linearity=True)

    @classmethod
    def student_t(cls, mean, scale, dof: float) -> "CovariateModel":
        mean, scale = _check_location_scale(mean, scale)
        if not dof > 2:
            raise SpecError("multivariate t covariates need dof > 2 for finite second moments")
        return cls("t", mean=mean, scale=scale, dof=float(dof), satisfies_linearity=True)

    @classmethod
    def normal_mixture(cls, weights, means, covs) -> "CovariateModel":
        """Finite Gaussian mixture; not elliptical unless it has one component."""
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or np.any(w <= 0) or abs(w.sum() - 1) > 1e-12:
            raise SpecError("mixture weights must be positive and sum to one")
        comps = tuple((float(wk),) + _check_location_scale(mk, ck) for wk, mk, ck in zip(w, means, covs))
        if len({c[1].size for c in comps}) != 1 or len(comps) != w.size:
            raise SpecError("mixture components must share one dimension")
        return cls("normal-mixture", components=comps, satisfies_linearity=len(comps) == 1)

    @classmethod
    def custom(cls, sampler: Callable, dim: int, index_law_fn=None, conditional_mean_fn=None, satisfies_linearity=False):
        """``sampler(rng, n)`` must return an ``(n, dim)`` array."""
        return cls(
            "custom",
            sampler=sampler,
            dim=int(dim),
            index_law_fn=index_law_fn,
            conditional_mean_fn=conditional_mean_fn,
            satisfies_linearity=satisfies_linearity,
        )

    @property
    def m(self) -> int:
        if self.kind in ("normal", "t"):
            return self.mean.size
        if self.kind == "normal-mixture":
            return self.components[0][1].size
        return self.dim

    @property
    def continuous(self) -> bool:
        return self.kind != "custom"

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "normal":
            return rng.multivariate_normal(self.mean, self.scale, size=n, method="cholesky")
        if self.kind == "t":
            z = rng.multivariate_normal(np.zeros(self.m), self.scale, size=n, method="cholesky")
            mix = rng.chisquare(self.dof, size=n) / self.dof
            return self.mean + z / np.sqrt(mix)[:, None]
        if self.kind == "normal-mixture":
            w = np.array([c[0] for c in self.components])
            labels = rng.choice(w.size, size=n, p=w)
            x = np.empty((n, self.m))
            for k, (_, mu, cov) in enumerate(self.components):
                idx = np.flatnonzero(labels == k)
                x[idx] = rng.multivariate_normal(mu, cov, size=idx.size, method="cholesky")
            return x
        x = np.asarray(self.sampler(rng, n), dtype=float)
        if x.shape != (n, self.dim):
            raise SpecError(f"custom sampler returned shape {x.shape}, expected {(n, self.dim)}")
        return x


def _check_location_scale(mean, scale):
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    scale = np.atleast_2d(np.asarray(scale, dtype=float))
    if scale.shape != (mean.size, mean.size):
        raise SpecError("scale matrix shape does not match mean")
    if not np.allclose(scale, scale.T):
        raise SpecError("scale matrix must be symmetric")
    if np.linalg.eigvalsh(scale).min() <= 0:
        raise SpecError("scale matrix must be positive definite")
    return mean, scale


# --------------------------------------------------------------------- #
# Errors
# --------------------------------------------------------------------- #

_BASES = ("logistic", "normal", "t", "gumbel", "zero")
_GUMBEL_MEDIAN = -math.log(math.log(2.0))


@dataclass(frozen=True)
class ScaleFunction:
    """Positive scale ``sigma(s)``: ``"constant"``, ``"quadratic"`` (a + b s^2) or ``"exp"`` (exp(g s))."""

    form: str = "constant"
    params: tuple = ()

    def __post_init__(self):
        p = tuple(float(x) for x in self.params)
        object.__setattr__(self, "params", p)
        if self.form == "constant":
            if p and not p[0] > 0:
                raise SpecError("constant scale must be positive")
        elif self.form == "quadratic":
            if len(p) != 2 or not (p[0] > 0 and p[1] >= 0):
                raise SpecError("quadratic scale a + b s^2 needs a > 0, b >= 0")
        elif self.form == "exp":
            if len(p) != 1:
                raise SpecError("exp scale needs one parameter")
        else:
            raise SpecError(f"unknown scale form {self.form!r}")

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.form == "constant":
            return np.full_like(s, self.params[0] if self.params else 1.0)
        if self.form == "quadratic":
            return self.params[0] + self.params[1] * s * s
        return np.exp(self.params[0] * s)


@dataclass(frozen=True, eq=False)
class ErrorModel:
    """Law of ``U`` given ``X``, always of the form ``U = sigma(S) * eps``.

    ``kind``:

    * ``"independent"``: ``S`` is irrelevant, ``U = eps``;
    * ``"index-heteroskedastic"``: ``S = V`` (index dependence holds);
    * ``"covariate-heteroskedastic"``: ``S = X'direction``, which in
      general breaks index dependence.

    ``eps`` is drawn from ``base`` (``logistic``, ``normal``, ``t``,
    median-centred ``gumbel`` or the degenerate ``zero``), independent of
    ``X``.  Every base has median zero.
    """

    kind: str = "independent"
    base: str = "logistic"
    base_dof: Optional[float] = None
    scale_fn: ScaleFunction = ScaleFunction()
    direction: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("independent", "index-heteroskedastic", "covariate-heteroskedastic"):
            raise SpecError(f"unknown error kind {self.kind!r}")
        if self.base not in _BASES:
            raise SpecError(f"unknown error base {self.base!r}")
        if self.base == "t" and not (self.base_dof and self.base_dof > 0):
            raise SpecError("t errors need positive dof")
        if self.base_dof is not None:
            object.__setattr__(self, "base_dof", float(self.base_dof))
        if self.kind == "covariate-heteroskedastic":
            if self.direction is None:
                raise SpecError("covariate-heteroskedastic errors need a direction vector")
            object.__setattr__(self, "direction", np.atleast_1d(np.asarray(self.direction, dtype=float)))
        if self.base != "zero" and abs(float(self.base_cdf(0.0)) - 0.5) > 1e-12:
            raise SpecError("error base must have median zero")

    @property
    def index_dependent(self) -> bool:
        return self.kind != "covariate-heteroskedastic"

    def _dist(self):
        if self.base == "logistic":
            return stats.logistic()
        if self.base == "normal":
            return stats.norm()
        if self.base == "t":
            return stats.t(self.base_dof)
        if self.base == "gumbel":
            return stats.gumbel_r(loc=-_GUMBEL_MEDIAN)
        return None

    def base_cdf(self, e):
        e = np.asarray(e, dtype=float)
        if self.base == "zero":
            return (e >= 0).astype(float)
        with np.errstate(over="ignore"):
            return self._dist().cdf(e)

    def sample_base(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.base == "zero":
            return np.zeros(n)
        if self.base == "logistic":
            return rng.logistic(size=n)
        if self.base == "normal":
            return rng.standard_normal(n)
        if self.base == "t":
            return rng.standard_t(self.base_dof, size=n)
        return rng.gumbel(loc=-_GUMBEL_MEDIAN, size=n)

    def scale_at(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        if self.kind == "independent":
            return np.ones_like(v)
        if self.kind == "index-heteroskedastic":
            return self.scale_fn(v)
        return self.scale_fn(x @ self.direction)


# --------------------------------------------------------------------- #
# Spec and data
# --------------------------------------------------------------------- #


@dataclass(frozen=True, eq=False)
class DgpSpec:
    """A covariate law, an error law and the true parameter.

    ``assumption_flags`` is derived from the components; passing it
    explicitly asserts it and raises :class:`SpecError` on disagreement.
    """

    covariates: CovariateModel
    errors: ErrorModel
    theta0: ModelParams
    assumption_flags: Optional[frozenset] = None
    label: str = ""

    def __post_init__(self):
        if self.theta0.m != self.covariates.m:
            raise SpecError(f"theta0 has {self.theta0.m} slopes but covariates have dimension {self.covariates.m}")
        if not np.any(self.theta0.beta != 0):
            raise SpecError("theta0.beta must have a nonzero entry")
        if self.errors.kind == "covariate-heteroskedastic" and self.errors.direction.size != self.covariates.m:
            raise SpecError("heteroskedasticity direction has the wrong dimension")
        derived = derive_flags(self.covariates, self.errors, self.theta0)
        if self.assumption_flags is not None and frozenset(self.assumption_flags) != derived:
            raise SpecError(
                f"declared assumption flags {sorted(self.assumption_flags)} disagree with components {sorted(derived)}"
            )
        object.__setattr__(self, "assumption_flags", derived)

    @property
    def m(self) -> int:
        return self.theta0.m


def derive_flags(cov: CovariateModel, err: ErrorModel, theta0: ModelParams) -> frozenset:
    flags = set()
    if err.base in _BASES:
        flags.add("A2.1")
    if cov.continuous and err.base != "zero" and theta0.beta[-1] != 0:
        flags.add("A2.2")
    if err.index_dependent:
        flags.add("A3.1")
    if cov.satisfies_linearity:
        flags.add("A3.2")
    return frozenset(flags)


@dataclass(frozen=True, eq=False)
class Dataset:
    """``n`` observations of ``y`` in {-1, +1} and an ``(n, m)`` covariate matrix."""

    y: np.ndarray
    x: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        y = np.asarray(self.y)
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if y.ndim != 1 or x.shape[0] != y.size:
            raise DatasetError("y must be a vector with one entry per row of x")
        if not np.all(np.isin(y, (-1, 1))):
            raise DatasetError("y must take values in {-1, +1}")
        if not np.all(np.isfinite(x)):
            raise DatasetError("x contains non-finite entries")
        y = y.astype(np.int8)
        y.setflags(write=False)
        x = np.ascontiguousarray(x)
        x.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def m(self) -> int:
        return self.x.shape[1]

    def design(self) -> np.ndarray:
        return np.column_stack([np.ones(self.n), self.x])

    def validate(self) -> None:
        """Check ``n >= m + 1`` and that both outcomes occur."""
        if self.n < self.m + 1:
            raise DatasetError(f"need at least m + 1 = {self.m + 1} observations, got {self.n}")
        if np.all(self.y == 1) or np.all(self.y == -1):
            raise DatasetError("only one outcome class is present")

    def condition_number(self) -> float:
        """Condition number of the standardised design; large values flag near-collinearity."""
        x = self.x - self.x.mean(axis=0)
        sd = x.std(axis=0)
        sd[sd == 0] = 1.0
        return float(np.linalg.cond(np.column_stack([np.ones(self.n), x / sd])))

    def to_csv(self, path=None) -> Optional[str]:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["y"] + [f"x{j + 1}" for j in range(self.m)])
        for yi, xi in zip(self.y.tolist(), self.x.tolist()):
            w.writerow([yi] + [repr(v) for v in xi])
        text = buf.getvalue()
        if path is None:
            return text
        with open(path, "w", newline="") as fh:
            fh.write(text)
        return None

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if not header or header[0] != "y" or header[1:] != [f"x{j + 1}" for j in range(len(header) - 1)]:
            raise DatasetError("CSV header must be y,x1,...,xm")
        arr = np.array(body, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != len(header):
            raise DatasetError("ragged CSV rows")
        return cls(arr[:, 0].astype(int), arr[:, 1:], {"source": str(path)})


def sample(spec: DgpSpec, n: int, seed) -> Dataset:
    """Draw ``n`` observations; ``seed`` is anything :func:`numpy.random.default_rng` accepts.

    Ties ``alpha0 + X'beta0 - U == 0`` map to ``y = +1``.
    """
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    x = spec.covariates.sample(rng, n)
    v = spec.theta0.alpha + x @ spec.theta0.beta
    u = spec.errors.scale_at(x, v) * spec.errors.sample_base(rng, n)
    y = np.where(v - u >= 0, 1, -1)
    meta = {"seed": _seed_repr(seed), "dgp": spec.label or "unnamed"}
    return Dataset(y, x, meta)


def _seed_repr(seed):
    if isinstance(seed, np.random.SeedSequence):
        return {"entropy": seed.entropy, "spawn_key": list(seed.spawn_key)}
    return seed


# --------------------------------------------------------------------- #
# Population objects
# --------------------------------------------------------------------- #


def index_distribution(spec: DgpSpec) -> IndexLaw:
    """Exact law of ``V = alpha0 + X'beta0``."""
    cov, th = spec.covariates, spec.theta0
    if cov.kind == "normal":
        return IndexLaw.normal(th.alpha + th.beta @ cov.mean, th.beta @ cov.scale @ th.beta)
    if cov.kind == "t":
        return IndexLaw.student_t(th.alpha + th.beta @ cov.mean, math.sqrt(th.beta @ cov.scale @ th.beta), cov.dof)
    if cov.kind == "normal-mixture":
        return IndexLaw.normal_mixture(
            [c[0] for c in cov.components],
            [th.alpha + th.beta @ c[1] for c in cov.components],
            [th.beta @ c[2] @ th.beta for c in cov.components],
        )
    if cov.index_law_fn is not None:
        return cov.index_law_fn(th)
    raise UnsupportedAnalysis("custom covariate sampler declares no index law; use Monte Carlo instead")


def linearity_coefficients(spec: DgpSpec) -> tuple[np.ndarray, np.ndarray]:
    """``(a, b)`` with ``E(X | V) = aV + b`` for elliptical covariates."""
    cov, th = spec.covariates, spec.theta0
    if cov.kind not in ("normal", "t") and not (cov.kind == "normal-mixture" and len(cov.components) == 1):
        raise UnsupportedAnalysis("closed-form linearity coefficients need elliptical covariates")
    mean, scale = (cov.mean, cov.scale) if cov.kind != "normal-mixture" else cov.components[0][1:]
    a = scale @ th.beta / (th.beta @ scale @ th.beta)
    b = mean - a * (th.alpha + th.beta @ mean)
    return a, b


def estimate_linearity_coefficients(x: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares fit of each covariate on ``(V, 1)``."""
    design = np.column_stack([v, np.ones_like(v)])
    coef, *_ = np.linalg.lstsq(design, x, rcond=None)
    return coef[0], coef[1]


def conditional_mean(spec: DgpSpec) -> Callable:
    """``v -> E(X | V = v)`` as an ``(len(v), m)`` array."""
    cov, th = spec.covariates, spec.theta0
    if cov.satisfies_linearity:
        a, b = linearity_coefficients(spec)
        return lambda v: np.outer(np.asarray(v, dtype=float), a) + b
    if cov.kind == "normal-mixture":
        comps = []
        for w, mu, sig in cov.components:
            mk = th.alpha + th.beta @ mu
            vk = th.beta @ sig @ th.beta
            comps.append((w, mu, sig @ th.beta / vk, mk, math.sqrt(vk)))

        def cm(v):
            v = np.asarray(v, dtype=float)
            logd = np.stack([math.log(w) + stats.norm.logpdf(v, mk, sk) for w, _, _, mk, sk in comps])
            post = np.exp(logd - special.logsumexp(logd, axis=0))
            return sum(p[:, None] * (mu + np.outer(v - mk, ak)) for p, (_, mu, ak, mk, _) in zip(post, comps))

        return cm
    if cov.conditional_mean_fn is not None:
        return cov.conditional_mean_fn(th)
    raise UnsupportedAnalysis("no conditional mean available for this covariate law")


def pi_function(spec: DgpSpec) -> Callable:
    """``v -> P{Y = 1 | V = v} = P{U <= V | V = v}``."""
    err = spec.errors
    if err.kind == "independent":
        return lambda v: err.base_cdf(v)
    if err.kind == "index-heteroskedastic":
        return lambda v: err.base_cdf(np.asarray(v, dtype=float) / err.scale_fn(v))
    cov, th = spec.covariates, spec.theta0
    if cov.kind != "normal":
        raise UnsupportedAnalysis("covariate-heteroskedastic Pi needs normal covariates")
    # (V, S) jointly normal with S = X'direction; integrate S | V = v.
    d = err.direction
    mv = th.alpha + th.beta @ cov.mean
    vv = th.beta @ cov.scale @ th.beta
    ms = d @ cov.mean
    vs = d @ cov.scale @ d
    cvs = th.beta @ cov.scale @ d
    slope = cvs / vv
    cond_sd = math.sqrt(max(vs - cvs**2 / vv, 0.0))
    nodes, weights = special.roots_hermitenorm(64)
    weights = weights / weights.sum()

    def pi(v):
        v = np.asarray(v, dtype=float)
        s = (ms + slope * (v - mv))[..., None] + cond_sd * nodes
        return err.base_cdf(v[..., None] / err.scale_fn(s)) @ weights

    return pi


# --------------------------------------------------------------------- #
# Declarative config
# --------------------------------------------------------------------- #


def _fmt_vec(v) -> str:
    return ", ".join(repr(float(x)) for x in np.ravel(v))


def _fmt_mat(m) -> str:
    return "; ".join(_fmt_vec(row) for row in np.atleast_2d(m))


def _parse_vec(s: str) -> np.ndarray:
    return np.array([float(t) for t in s.replace(";", ",").split(",") if t.strip()])


def _parse_mat(s: str) -> np.ndarray:
    return np.array([[float(t) for t in row.split(",")] for row in s.split(";")])


def write_config(spec: DgpSpec, parser: Optional[configparser.ConfigParser] = None) -> configparser.ConfigParser:
    """Add ``[model]``, ``[covariates]`` (plus components) and ``[errors]`` sections."""
    cp = parser if parser is not None else configparser.ConfigParser()
    cp["model"] = {"alpha": repr(spec.theta0.alpha), "beta": _fmt_vec(spec.theta0.beta)}
    if spec.label:
        cp["model"]["label"] = spec.label
    cov = spec.covariates
    if cov.kind in ("normal", "t"):
        cp["covariates"] = {"kind": cov.kind, "mean": _fmt_vec(cov.mean), "scale": _fmt_mat(cov.scale)}
        if cov.kind == "t":
            cp["covariates"]["dof"] = repr(cov.dof)
    elif cov.kind == "normal-mixture":
        cp["covariates"] = {"kind": cov.kind, "components": str(len(cov.components))}
        for k, (w, mu, sig) in enumerate(cov.components, start=1):
            cp[f"covariates.component.{k}"] = {"weight": repr(w), "mean": _fmt_vec(mu), "scale": _fmt_mat(sig)}
    else:
        raise SpecError("custom covariate samplers cannot be written to a config")
    err = spec.errors
    cp["errors"] = {"kind": err.kind, "base": err.base, "scale_form": err.scale_fn.form}
    if err.scale_fn.params:
        cp["errors"]["scale_params"] = _fmt_vec(err.scale_fn.params)
    if err.base_dof is not None:
        cp["errors"]["base_dof"] = repr(err.base_dof)
    if err.direction is not None:
        cp["errors"]["direction"] = _fmt_vec(err.direction)
    return cp


def read_config(cp: configparser.ConfigParser) -> DgpSpec:
    """Inverse of :func:`write_config`; raises :class:`SpecError` on bad input."""
    try:
        model = cp["model"]
        theta0 = ModelParams(float(model["alpha"]), _parse_vec(model["beta"]))
        sec = cp["covariates"]
        kind = sec["kind"]
        if kind == "normal":
            cov = CovariateModel.normal(_parse_vec(sec["mean"]), _parse_mat(sec["scale"]))
        elif kind == "t":
            cov = CovariateModel.student_t(_parse_vec(sec["mean"]), _parse_mat(sec["scale"]), float(sec["dof"]))
        elif kind == "normal-mixture":
            comps = [cp[f"covariates.component.{k}"] for k in range(1, int(sec["components"]) + 1)]
            cov = CovariateModel.normal_mixture(
                [float(c["weight"]) for c in comps],
                [_parse_vec(c["mean"]) for c in comps],
                [_parse_mat(c["scale"]) for c in comps],
            )
        else:
            raise SpecError(f"unknown covariate kind {kind!r}")
        e = cp["errors"]
        err = ErrorModel(
            kind=e.get("kind", "independent"),
            base=e.get("base", "logistic"),
            base_dof=float(e["base_dof"]) if "base_dof" in e else None,
            scale_fn=ScaleFunction(e.get("scale_form", "constant"), tuple(_parse_vec(e.get("scale_params", "")))),
            direction=_parse_vec(e["direction"]) if "direction" in e else None,
        )
    except KeyError as exc:
        raise SpecError(f"missing config entry {exc}") from None
    except ValueError as exc:
        if isinstance(exc, SpecError):
            raise
        raise SpecError(f"malformed config value: {exc}") from None
    return DgpSpec(cov, err, theta0, label=model.get("label", ""))


def load_spec(path) -> DgpSpec:
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise SpecError(f"cannot read config {path}")
    return read_config(cp)


def dump_spec(spec: DgpSpec) -> str:
    buf = io.StringIO()
    write_config(spec).write(buf)
    return buf.getvalue()
