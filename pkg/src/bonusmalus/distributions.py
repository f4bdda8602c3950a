"""Claim-count laws and Gamma-mixture priors."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.special import gammaln, pdtrc

from .errors import DomainError

__all__ = [
    "ClaimCountModel",
    "Poisson",
    "ZIPoisson",
    "GammaComponent",
    "GammaMixturePrior",
]


def _poisson_pmf(n, mu):
    n = np.asarray(n, dtype=float)
    mu = np.asarray(mu, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = n * np.log(mu) - mu - gammaln(n + 1.0)
    logp = np.where(n == 0, -mu, logp)
    return np.where(n < 0, 0.0, np.exp(logp))


def _poisson_sf(n, mu):
    """``P(N > n)`` for Poisson(``mu``)."""
    n = np.asarray(n, dtype=float)
    mu = np.asarray(mu, dtype=float)
    out = pdtrc(np.maximum(n, 0.0), mu)
    return np.where(n < 0, 1.0, np.where(mu == 0, 0.0, out))


class ClaimCountModel:
    """Law of the annual number of reported claims given a Poisson rate ``mu``.

    Subclasses implement :meth:`pmf` and :meth:`sf`; both broadcast over
    ``n`` and ``mu``.
    """

    name = "abstract"

    def pmf(self, n, mu):
        raise NotImplementedError

    def sf(self, n, mu):
        """``P(N > n)``."""
        raise NotImplementedError

    def tail(self, n, mu):
        """``P(N >= n)``, computed without cancellation."""
        n = np.asarray(n)
        return np.where(n <= 0, 1.0, self.sf(n - 1, mu))

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Poisson(ClaimCountModel):
    """Poisson claim counts."""

    name = "poisson"

    def pmf(self, n, mu):
        return _poisson_pmf(n, mu)

    def sf(self, n, mu):
        return _poisson_sf(n, mu)

    def to_dict(self) -> dict:
        return {"type": "poisson"}


@dataclass(frozen=True)
class ZIPoisson(ClaimCountModel):
    """Zero-inflated Poisson: extra mass ``p`` at zero, Poisson(``mu``) otherwise."""

    p: float = 0.2
    name = "zip"

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0):
            raise DomainError(f"zero-inflation p must lie in [0, 1], got {self.p}")

    def pmf(self, n, mu):
        n = np.asarray(n)
        base = (1.0 - self.p) * _poisson_pmf(n, mu)
        return np.where(n == 0, self.p + base, base)

    def sf(self, n, mu):
        n = np.asarray(n)
        return np.where(n < 0, 1.0, (1.0 - self.p) * _poisson_sf(n, mu))

    def to_dict(self) -> dict:
        return {"type": "zip", "p": self.p}


@dataclass(frozen=True)
class GammaComponent:
    """Gamma law with ``shape`` and ``rate`` (mean ``shape / rate``)."""

    shape: float
    rate: float

    def __post_init__(self):
        object.__setattr__(self, "shape", float(self.shape))
        object.__setattr__(self, "rate", float(self.rate))
        if not (self.shape > 0 and self.rate > 0):
            raise DomainError(
                f"Gamma shape and rate must be positive, got ({self.shape}, {self.rate})"
            )

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        a, b = self.shape, self.rate
        with np.errstate(divide="ignore", invalid="ignore"):
            out = a * math.log(b) - gammaln(a) + (a - 1.0) * np.log(x) - b * x
        if a == 1.0:
            out = np.where(x == 0, math.log(b), out)
        return np.where(x < 0, -np.inf, out)

    def __str__(self):
        return f"Gamma({self.shape:g},{self.rate:g})"


@dataclass(frozen=True)
class GammaMixturePrior:
    """Finite mixture ``sum_l w_l Gamma(a_l, b_l)``.

    Used as the structure function of the claim frequency, as the per-level
    priors, and as the prior of the claim-size parameter.
    """

    weights: tuple
    components: tuple

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        comps = tuple(
            c if isinstance(c, GammaComponent) else GammaComponent(*c) for c in self.components
        )
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "components", comps)
        if len(w) != len(comps) or not w:
            raise DomainError("weights and components must be non-empty and of equal length")
        if any(x < 0 or x > 1 for x in w):
            raise DomainError("mixture weights must lie in [0, 1]")
        if abs(math.fsum(w) - 1.0) > 1e-12:
            raise DomainError(f"mixture weights sum to {math.fsum(w)!r}, not 1")

    @classmethod
    def from_components(cls, components: Sequence, weights: Sequence | None = None):
        components = tuple(components)
        if weights is None:
            weights = [1.0 / len(components)] * len(components)
        return cls(tuple(weights), components)

    @classmethod
    def normalized(cls, weights: Sequence, components: Sequence):
        """Build a prior after rescaling ``weights`` to sum to one."""
        tot = math.fsum(weights)
        if tot <= 0:
            raise DomainError("weights must have a positive sum")
        return cls(tuple(w / tot for w in weights), tuple(components))

    @classmethod
    def odd_shapes(cls, count: int, rate: float):
        """Equal-weight mixture ``Gamma(1, rate), Gamma(3, rate), ..., Gamma(2*count-1, rate)``."""
        return cls.from_components([GammaComponent(2 * l - 1, rate) for l in range(1, count + 1)])

    def __len__(self):
        return len(self.components)

    @property
    def mean(self) -> float:
        return math.fsum(w * c.mean for w, c in zip(self.weights, self.components))

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        terms = [math.log(w) + c.logpdf(x) for w, c in zip(self.weights, self.components) if w > 0]
        return np.logaddexp.reduce(np.stack(terms), axis=0)

    def to_dict(self) -> dict:
        return {
            "components": [
                {"weight": w, "shape": c.shape, "rate": c.rate}
                for w, c in zip(self.weights, self.components)
            ]
        }


def weight_fraction(w: float) -> str:
    """Short display form of a mixture weight (``1/7`` rather than ``0.142857``)."""
    f = Fraction(w).limit_denominator(1000)
    if abs(float(f) - w) < 1e-12:
        return f"{f.numerator}/{f.denominator}" if f.denominator != 1 else str(f.numerator)
    return repr(w)
