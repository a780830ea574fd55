"""Assumed error distributions ("links") for binary choice quasi-likelihoods.

A link is a CDF ``F`` with density ``f``.  The quasi-likelihood only ever
needs ``log F``, ``log(1 - F)`` and the two score ratios

    score_plus(z)  = f(z) / F(z)
    score_minus(z) = f(z) / (1 - F(z))

so every link carries log-space implementations of these.  The built-in
logistic and probit links use closed forms that stay accurate far into the
tails; user supplied links fall back to ``exp(log f - log F)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import special

ArrayFn = Callable[[np.ndarray], np.ndarray]

_SQRT_HALF_PI = math.sqrt(math.pi / 2.0)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class LinkDomainError(ValueError):
    """Raised when a link function is evaluated at a non-finite argument."""


class LinkValidationError(ValueError):
    """Raised when a user supplied link violates a required property."""


@dataclass(frozen=True)
class LinkFamily:
    """Immutable bundle of the functions describing an assumed error CDF.

    ``score_plus_fn``/``score_minus_fn``/``dlog_pdf`` are optional fast
    paths; when absent they are derived from the log-space primitives.
    """

    name: str
    cdf: ArrayFn
    log_cdf: ArrayFn
    log_sf: ArrayFn
    pdf: ArrayFn
    pdf_derivative: ArrayFn
    log_pdf: Optional[ArrayFn] = None
    dlog_pdf: Optional[ArrayFn] = None
    score_plus_fn: Optional[ArrayFn] = field(default=None, repr=False)
    score_minus_fn: Optional[ArrayFn] = field(default=None, repr=False)

    def _log_pdf(self, z):
        if self.log_pdf is not None:
            return self.log_pdf(z)
        with np.errstate(divide="ignore"):
            return np.log(self.pdf(z))

    def score_plus(self, z):
        return score_plus(self, z)

    def score_minus(self, z):
        return score_minus(self, z)

    def log_density_slope(self, z):
        """d/dz log f(z), used for Hessians of the quasi-likelihood."""
        z = np.asarray(z, dtype=float)
        if self.dlog_pdf is not None:
            return self.dlog_pdf(z)
        return self.pdf_derivative(z) / self.pdf(z)


def _check_finite(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise LinkDomainError("link evaluated at a non-finite argument")
    return z


def score_plus(link: LinkFamily, z):
    """Return ``f(z)/F(z)``, computed without forming ``F`` directly."""
    z = _check_finite(z)
    if link.score_plus_fn is not None:
        return link.score_plus_fn(z)
    return np.exp(link._log_pdf(z) - link.log_cdf(z))


def score_minus(link: LinkFamily, z):
    """Return ``f(z)/(1 - F(z))``, computed without forming ``1 - F``."""
    z = _check_finite(z)
    if link.score_minus_fn is not None:
        return link.score_minus_fn(z)
    return np.exp(link._log_pdf(z) - link.log_sf(z))


# --------------------------------------------------------------------- #
# Logistic
# --------------------------------------------------------------------- #


def _logistic_log_cdf(z):
    return -np.logaddexp(0.0, -np.asarray(z, dtype=float))


def _logistic_log_sf(z):
    return -np.logaddexp(0.0, np.asarray(z, dtype=float))


def _logistic_log_pdf(z):
    a = np.abs(np.asarray(z, dtype=float))
    return -a - 2.0 * np.log1p(np.exp(-a))


def _logistic_pdf(z):
    return np.exp(_logistic_log_pdf(z))


def _logistic_pdf_derivative(z):
    z = np.asarray(z, dtype=float)
    return _logistic_pdf(z) * np.tanh(-z / 2.0)


def _logistic_dlog_pdf(z):
    # 1 - 2F(z) == -tanh(z/2)
    return -np.tanh(np.asarray(z, dtype=float) / 2.0)


LOGISTIC = LinkFamily(
    name="logistic",
    cdf=special.expit,
    log_cdf=_logistic_log_cdf,
    log_sf=_logistic_log_sf,
    pdf=_logistic_pdf,
    pdf_derivative=_logistic_pdf_derivative,
    log_pdf=_logistic_log_pdf,
    dlog_pdf=_logistic_dlog_pdf,
    # f/F = 1 - F and f/(1-F) = F for the logistic law
    score_plus_fn=lambda z: special.expit(-z),
    score_minus_fn=special.expit,
)


# --------------------------------------------------------------------- #
# Probit
# --------------------------------------------------------------------- #


def _inverse_mills(z):
    # phi(z) / (1 - Phi(z)) = 1 / (sqrt(pi/2) * erfcx(z / sqrt 2)); erfcx
    # overflows to inf for z << 0, which correctly sends the ratio to 0.
    with np.errstate(over="ignore"):
        return 1.0 / (_SQRT_HALF_PI * special.erfcx(np.asarray(z, dtype=float) / math.sqrt(2.0)))


def _probit_log_pdf(z):
    z = np.asarray(z, dtype=float)
    return -0.5 * z * z - _LOG_SQRT_2PI


PROBIT = LinkFamily(
    name="probit",
    cdf=special.ndtr,
    log_cdf=special.log_ndtr,
    log_sf=lambda z: special.log_ndtr(-np.asarray(z, dtype=float)),
    pdf=lambda z: np.exp(_probit_log_pdf(z)),
    pdf_derivative=lambda z: -np.asarray(z, dtype=float) * np.exp(_probit_log_pdf(z)),
    log_pdf=_probit_log_pdf,
    dlog_pdf=lambda z: -np.asarray(z, dtype=float),
    score_plus_fn=lambda z: _inverse_mills(-z),
    score_minus_fn=_inverse_mills,
)


_REGISTRY: dict[str, LinkFamily] = {"logistic": LOGISTIC, "probit": PROBIT}


def builtin_links() -> list[LinkFamily]:
    """Return the built-in links (logistic and probit)."""
    return [LOGISTIC, PROBIT]


def get_link(name: str) -> LinkFamily:
    """Look up a registered link by its string key."""
    try:
        return _REGISTRY[name]
    except KeyError:
        known = ", ".join(sorted(_REGISTRY))
        raise KeyError(f"unknown link {name!r}; known links: {known}") from None


def link_violations(link: LinkFamily, lo: float = -10.0, hi: float = 10.0, step: float = 0.01) -> list[str]:
    """Check the properties the quasi-likelihood theory relies on.

    Returns a list of human readable violations (empty when the link is
    acceptable).  Checked on the grid ``lo:step:hi``:

    * ``0 < F < 1`` and ``F`` strictly increasing,
    * strict concavity of ``log F`` and ``log(1 - F)`` (negative second
      differences),
    * ``F(z) + (1 - F(z)) = 1`` in log space,
    * ``pdf`` agrees with a central difference of ``cdf``,
    * ``F(0) = 1/2`` so that the two score ratios meet at zero,
    * density tails decay faster than ``1/|z|``.
    """
    problems = []
    z = np.arange(lo, hi + step / 2, step)
    with np.errstate(all="ignore"):
        # checked in log space: F itself rounds to 1 in the upper tail
        lc = np.asarray(link.log_cdf(z), dtype=float)
        ls = np.asarray(link.log_sf(z), dtype=float)
        if not np.all(np.isfinite(lc) & np.isfinite(ls) & (lc < 0) & (ls < 0)):
            problems.append("cdf must lie strictly inside (0, 1)")
        if not (np.all(np.diff(lc) > 0) and np.all(np.diff(ls) < 0)):
            problems.append("cdf must be strictly increasing")
        for label, fn in (("log_cdf", link.log_cdf), ("log_sf", link.log_sf)):
            v = np.asarray(fn(z), dtype=float)
            d2 = v[2:] - 2.0 * v[1:-1] + v[:-2]
            if not np.all(d2 < 0):
                problems.append(f"{label} must be strictly concave")
        zz = z[np.abs(z) <= 30]
        total = np.exp(link.log_cdf(zz)) + np.exp(link.log_sf(zz))
        if not np.allclose(total, 1.0, rtol=0, atol=1e-12):
            problems.append("exp(log_cdf) + exp(log_sf) must equal 1")
        fd = cdf_central_difference(link, z, 1e-5)
        pdf = np.asarray(link.pdf(z), dtype=float)
        if not np.all(np.abs(fd - pdf) <= 1e-6 * pdf):
            problems.append("pdf must be the derivative of cdf")
        if not np.all(np.isfinite(link.pdf_derivative(z))):
            problems.append("pdf_derivative must be finite")
        if abs(float(link.cdf(np.array(0.0))) - 0.5) > 1e-12:
            problems.append("cdf(0) must equal 1/2")
        tails = np.array([50.0])
        if not (50.0 * score_plus(link, tails)[0] < 1e-10 and 50.0 * score_minus(link, -tails)[0] < 1e-10):
            problems.append("density must decay faster than 1/|z| in both tails")
    return problems


def cdf_central_difference(link: LinkFamily, z, h: float):
    """Central difference of the CDF, taken on whichever tail is not saturated.

    For ``z > 0`` the increment ``F(z+h) - F(z-h)`` is formed as
    ``S(z-h) - S(z+h)`` with ``S = exp(log_sf)``, so the difference keeps
    its relative precision where ``F`` rounds to one.
    """
    z = np.asarray(z, dtype=float)
    lower = link.cdf(z + h) - link.cdf(z - h)
    upper = np.exp(link.log_sf(z - h)) - np.exp(link.log_sf(z + h))
    return np.where(z < 0, lower, upper) / (2 * h)


def register_link(link: LinkFamily) -> LinkFamily:
    """Validate ``link`` and make it available through :func:`get_link`."""
    problems = link_violations(link)
    if problems:
        raise LinkValidationError(f"link {link.name!r} rejected: " + "; ".join(problems))
    _REGISTRY[link.name] = link
    return link
