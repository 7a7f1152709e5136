"""Edge capacity laws, reproducible sampling and log moment generating functions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate, special

BOUNDED = "bounded"
SOME_EXP_MOMENT = "some_exp_moment"
ALL_EXP_MOMENTS = "all_exp_moments"

_KINDS = {
    "constant": 1,
    "bernoulli": 1,
    "uniform": 1,
    "exponential": 1,
    "half_gaussian": 1,
}


class InvalidDistributionError(ValueError):
    pass


@dataclass(frozen=True)
class DistributionSpec:
    """A capacity law F.

    ``constant(c)``, ``bernoulli(p)`` (capacity 1 with probability p, else 0),
    ``uniform(b)`` on [0, b], ``exponential(rate)`` and ``half_gaussian(sigma)``
    (the law of sigma*|Z|).
    """

    kind: str
    params: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InvalidDistributionError(f"unknown distribution kind {self.kind!r}")
        params = tuple(float(p) for p in self.params)
        object.__setattr__(self, "params", params)
        if len(params) != _KINDS[self.kind]:
            raise InvalidDistributionError(f"{self.kind} takes {_KINDS[self.kind]} parameter(s)")
        (a,) = params
        if not math.isfinite(a):
            raise InvalidDistributionError("parameters must be finite")
        if self.kind == "constant" and a < 0:
            raise InvalidDistributionError("constant capacity must be nonnegative")
        if self.kind == "bernoulli" and not 0.0 <= a <= 1.0:
            raise InvalidDistributionError("bernoulli p must lie in [0, 1]")
        if self.kind in ("uniform", "exponential", "half_gaussian") and a <= 0:
            raise InvalidDistributionError(f"{self.kind} parameter must be positive")

    @classmethod
    def parse(cls, text: str) -> "DistributionSpec":
        """Parse ``kind:param`` strings such as ``"exponential:1"``."""
        kind, _, rest = text.strip().partition(":")
        if not rest:
            raise InvalidDistributionError(f"expected 'kind:param', got {text!r}")
        try:
            params = tuple(float(x) for x in rest.split(","))
        except ValueError:
            raise InvalidDistributionError(f"bad parameter in {text!r}") from None
        return cls(kind.strip(), params)

    def __str__(self) -> str:
        return f"{self.kind}:" + ",".join(f"{p:g}" for p in self.params)

    @property
    def param(self) -> float:
        return self.params[0]

    @property
    def integer_valued(self) -> bool:
        if self.kind == "bernoulli":
            return True
        return self.kind == "constant" and float(self.param).is_integer()

    def support_max(self) -> float:
        if self.kind == "constant":
            return self.param
        if self.kind == "bernoulli":
            return 1.0 if self.param > 0 else 0.0
        if self.kind == "uniform":
            return self.param
        return math.inf

    def mean(self) -> float:
        a = self.param
        return {
            "constant": a,
            "bernoulli": a,
            "uniform": a / 2,
            "exponential": 1 / a,
            "half_gaussian": a * math.sqrt(2 / math.pi),
        }[self.kind]

    def inverse_cdf(self, u: np.ndarray) -> np.ndarray:
        """Quantile transform of uniforms in [0, 1)."""
        a = self.param
        if self.kind == "constant":
            return np.full(u.shape, a)
        if self.kind == "bernoulli":
            return (u < a).astype(np.float64)
        if self.kind == "uniform":
            return a * u
        if self.kind == "exponential":
            return -np.log1p(-u) / a
        return a * special.ndtri(0.5 + 0.5 * u)


def moment_class(dist: DistributionSpec) -> str:
    if dist.kind in ("constant", "bernoulli", "uniform"):
        return BOUNDED
    if dist.kind == "exponential":
        return SOME_EXP_MOMENT
    return ALL_EXP_MOMENTS


def log_mgf(dist: DistributionSpec, theta: float) -> float:
    """``log E exp(theta * t(e))``; ``inf`` where the expectation diverges."""
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    if theta == 0:
        return 0.0
    a = dist.param
    if dist.kind == "constant":
        return theta * a
    if dist.kind == "bernoulli":
        return math.log1p(a * math.expm1(theta))
    if dist.kind == "uniform":
        x = theta * a
        # log((e^x - 1)/x), stable for small and large x
        if x < 1e-8:
            return x / 2
        if x < 30:
            return math.log(math.expm1(x) / x)
        return x + math.log1p(-math.exp(-x)) - math.log(x)
    if dist.kind == "exponential":
        return -math.log1p(-theta / a) if theta < a else math.inf
    return _half_gaussian_log_mgf(a, theta)


def _half_gaussian_log_mgf(sigma: float, theta: float) -> float:
    # E exp(theta*sigma*|Z|) = exp(s^2/2) * 2/sqrt(2pi) * int_{-s}^inf exp(-u^2/2) du,
    # s = theta*sigma; the remaining integral lies in [1, 2] so its absolute
    # quadrature error bounds the error of the log.
    s = theta * sigma
    val, err = integrate.quad(lambda u: math.exp(-0.5 * u * u), -s, math.inf,
                              epsabs=1e-13, epsrel=1e-13, limit=200)
    return 0.5 * s * s + math.log(val * 2 / math.sqrt(2 * math.pi))


@dataclass(frozen=True, eq=False)
class CapacityAssignment:
    """Per-edge capacities for one replication; ``values[e]`` is t(e)."""

    values: np.ndarray
    seed: int
    replication_index: int
    stream: int = 0

    @property
    def integer_mode(self) -> bool:
        return np.issubdtype(self.values.dtype, np.integer)


def uniforms(num: int, seed: int, replication_index: int, stream: int = 0) -> np.ndarray:
    """``num`` uniforms from a Philox stream keyed on (seed, replication).

    Philox is counter based: uniform ``e`` is the e-th 64-bit output, so it is
    a pure function of (seed, replication_index, stream, e).  ``stream``
    occupies the top counter word and separates experiments sharing a seed.
    """
    key = np.array([seed % 2**64, replication_index % 2**64], dtype=np.uint64)
    counter = np.array([0, 0, 0, stream % 2**64], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key, counter=counter))
    return gen.random(num)


def sample_capacities(graph, dist: DistributionSpec, seed: int, replication_index: int,
                      stream: int = 0, integer: bool | None = None) -> CapacityAssignment:
    """I.i.d. capacities for every edge of ``graph`` in canonical edge order.

    ``integer`` defaults to True for integer-valued laws (exact solver mode).
    """
    num = graph.num_edges
    if num == 0:
        raise ValueError("graph has no edges")
    values = dist.inverse_cdf(uniforms(num, seed, replication_index, stream))
    if integer is None:
        integer = dist.integer_valued
    if integer:
        if not dist.integer_valued:
            raise InvalidDistributionError(f"{dist} is not integer valued; use quantize()")
        values = values.astype(np.int64)
    return CapacityAssignment(values, seed, replication_index, stream)


def quantize(values: np.ndarray, scale: float) -> np.ndarray:
    """Integer capacities ``round(scale * t(e))`` for exact-arithmetic checks."""
    return np.rint(np.asarray(values, dtype=np.float64) * scale).astype(np.int64)


def empirical_log_mgf(samples: Sequence[float], theta: float) -> float:
    x = np.asarray(samples, dtype=np.float64)
    return float(special.logsumexp(theta * x) - math.log(len(x)))
