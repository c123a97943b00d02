"""Edge-weight distributions and their cumulant machinery.

Every distribution knows its log moment generating function of -omega,

    psi(beta) = log E exp(-beta * omega),

together with the first two derivatives and the derived tilted variance

    v2(beta) = exp(psi(2*beta) - 2*psi(beta)) - 1.

Weights may take the value +inf (censored construction): exp(-beta * inf)
is defined as exactly 0, which makes random-graph annealing exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "WeightDistribution",
    "Exponential",
    "Uniform",
    "Censored",
    "CustomCGF",
    "WeightVector",
    "psi",
    "psi_prime",
    "psi_double_prime",
    "v_squared",
    "xi",
    "sample_weights",
    "distribution_from_string",
    "numeric_cgf_derivatives",
]

# Central-difference step for the numeric-derivative fallback; one Richardson
# refinement brings agreement with analytic derivatives to ~1e-8.
_FD_STEP = float(np.finfo(float).eps) ** (1.0 / 3.0)


def _check_beta(beta: float, allow_zero: bool = True) -> float:
    beta = float(beta)
    if math.isnan(beta) or beta < 0 or (beta == 0 and not allow_zero):
        raise ValueError(f"beta must be {'>= 0' if allow_zero else '> 0'}, got {beta}")
    return beta


class WeightDistribution:
    """Base class for edge-weight laws. Subclasses are immutable."""

    closed_form_cgf: bool = False

    def psi(self, beta: float) -> float:
        raise NotImplementedError

    def psi_prime(self, beta: float) -> float:
        return numeric_cgf_derivatives(self.psi, beta)[0]

    def psi_double_prime(self, beta: float) -> float:
        return numeric_cgf_derivatives(self.psi, beta)[1]

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no sampler")

    def descriptor(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class Exponential(WeightDistribution):
    """Exponential(rate) weights on [0, inf)."""

    rate: float = 1.0
    closed_form_cgf = True

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"rate must be positive, got {self.rate}")

    def psi(self, beta: float) -> float:
        beta = _check_beta(beta)
        # E e^{-beta w} = rate / (rate + beta)
        return -math.log1p(beta / self.rate)

    def psi_prime(self, beta: float) -> float:
        _check_beta(beta)
        return -1.0 / (self.rate + beta)

    def psi_double_prime(self, beta: float) -> float:
        _check_beta(beta)
        return 1.0 / (self.rate + beta) ** 2

    def sample(self, rng, size):
        return rng.exponential(scale=1.0 / self.rate, size=size)

    def descriptor(self) -> str:
        return f"exp:{self.rate:g}"


@dataclass(frozen=True)
class Uniform(WeightDistribution):
    """Uniform(lower, upper) weights."""

    lower: float = 0.0
    upper: float = 1.0
    closed_form_cgf = True

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"need lower < upper, got [{self.lower}, {self.upper}]")

    def _tilted_moments(self, beta: float) -> tuple[float, float, float]:
        """(E e^{-bw}, E w e^{-bw}, E w^2 e^{-bw}) in closed form."""
        a, b = self.lower, self.upper
        span = b - a
        if beta < 1e-8:
            # Taylor around beta = 0 avoids the 0/0 forms.
            m1 = (a + b) / 2.0
            m2 = (a * a + a * b + b * b) / 3.0
            m3 = (a + b) * (a * a + b * b) / 4.0
            return (1.0 - beta * m1 + beta * beta * m2 / 2.0,
                    m1 - beta * m2 + beta * beta * m3 / 2.0,
                    m2 - beta * m3)
        ea, eb = math.exp(-beta * a), math.exp(-beta * b)
        m0 = (ea - eb) / (beta * span)
        m1 = ((a * beta + 1) * ea - (b * beta + 1) * eb) / (beta * beta * span)
        m2 = (((a * beta) ** 2 + 2 * a * beta + 2) * ea
              - ((b * beta) ** 2 + 2 * b * beta + 2) * eb) / (beta ** 3 * span)
        return m0, m1, m2

    def psi(self, beta: float) -> float:
        beta = _check_beta(beta)
        if beta == 0.0:
            return 0.0
        return math.log(self._tilted_moments(beta)[0])

    def psi_prime(self, beta: float) -> float:
        _check_beta(beta)
        m0, m1, _ = self._tilted_moments(beta)
        return -m1 / m0

    def psi_double_prime(self, beta: float) -> float:
        _check_beta(beta)
        m0, m1, m2 = self._tilted_moments(beta)
        return m2 / m0 - (m1 / m0) ** 2

    def sample(self, rng, size):
        return rng.uniform(self.lower, self.upper, size=size)

    def descriptor(self) -> str:
        return f"uniform:{self.lower:g}:{self.upper:g}"


@dataclass(frozen=True)
class Censored(WeightDistribution):
    """Base weight with probability keep_prob, +inf otherwise.

    Realizes optimization on a homogeneous random graph: deleting an edge
    is the same as giving it infinite weight, and
    psi_censored(beta) = log(keep_prob) + psi_base(beta).
    """

    base: WeightDistribution = field(default_factory=Exponential)
    keep_prob: float = 1.0

    def __post_init__(self):
        if not 0 < self.keep_prob <= 1:
            raise ValueError(f"keep_prob must be in (0, 1], got {self.keep_prob}")

    @property
    def closed_form_cgf(self) -> bool:  # type: ignore[override]
        return self.base.closed_form_cgf

    def psi(self, beta: float) -> float:
        beta = _check_beta(beta)
        # exp(-beta * inf) == 0 for every beta >= 0 (deleted edges stay
        # deleted at beta = 0), so psi(0) = log(keep_prob) here, not 0.
        return math.log(self.keep_prob) + self.base.psi(beta)

    def psi_prime(self, beta: float) -> float:
        return self.base.psi_prime(beta)

    def psi_double_prime(self, beta: float) -> float:
        return self.base.psi_double_prime(beta)

    def sample(self, rng, size):
        vals = self.base.sample(rng, size)
        drop = rng.random(size) >= self.keep_prob
        vals = np.asarray(vals, dtype=float)
        vals[drop] = np.inf
        return vals

    def descriptor(self) -> str:
        return f"censored:{self.base.descriptor()}:{self.keep_prob:g}"


@dataclass(frozen=True)
class CustomCGF(WeightDistribution):
    """User-supplied cumulant machinery: a callable beta -> psi(beta).

    Derivatives fall back to central differences with Richardson refinement.
    No sampler is provided; only the analytic side of the pipeline works.
    """

    cgf: Callable[[float], float] = None  # type: ignore[assignment]
    name: str = "custom"

    def psi(self, beta: float) -> float:
        beta = _check_beta(beta)
        if beta == 0.0:
            return 0.0
        return float(self.cgf(beta))

    def descriptor(self) -> str:
        return f"custom:{self.name}"


def numeric_cgf_derivatives(psi_fn: Callable[[float], float], beta: float) -> tuple[float, float]:
    """Central-difference (psi', psi'') at beta with one Richardson refinement."""
    beta = float(beta)
    h = _FD_STEP * max(1.0, abs(beta))

    def d1(step):
        return (psi_fn(beta + step) - psi_fn(beta - step)) / (2 * step)

    first = (4 * d1(h / 2) - d1(h)) / 3

    h2 = _FD_STEP ** 0.75 * max(1.0, abs(beta))  # coarser step: second differences
    f0 = psi_fn(beta)

    def d2(step):
        return (psi_fn(beta + step) - 2 * f0 + psi_fn(beta - step)) / step ** 2

    second = (4 * d2(h2 / 2) - d2(h2)) / 3
    return first, second


# ---------------------------------------------------------------------------
# Module-level operations (thin wrappers; the dispatch lives on the classes).


def psi(dist: WeightDistribution, beta: float) -> float:
    """log E exp(-beta * omega). Requires beta >= 0; psi(0) = 0 for proper laws."""
    return dist.psi(beta)


def psi_prime(dist: WeightDistribution, beta: float) -> float:
    return dist.psi_prime(beta)


def psi_double_prime(dist: WeightDistribution, beta: float) -> float:
    return dist.psi_double_prime(beta)


def v_squared(dist: WeightDistribution, beta: float) -> float:
    """exp(psi(2 beta) - 2 psi(beta)) - 1, the variance of xi."""
    beta = _check_beta(beta)
    return math.expm1(dist.psi(2 * beta) - 2 * dist.psi(beta))


def xi(omega, dist: WeightDistribution, beta: float):
    """Centered tilted weight exp(-beta*omega - psi(beta)) - 1, in [-1, inf).

    Accepts scalars or arrays; omega = +inf maps to exactly -1.
    """
    _check_beta(beta)
    p = dist.psi(beta)
    arr = np.asarray(omega, dtype=float)
    with np.errstate(invalid="ignore"):  # 0 * inf at beta == 0
        out = np.expm1(-beta * arr - p)
    out = np.where(np.isinf(arr), -1.0, out)
    if np.ndim(omega) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class WeightVector:
    """One realization of i.i.d. edge weights, indexed by edge index."""

    values: np.ndarray
    source_seed: int
    distribution: WeightDistribution

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if np.isinf(vals).any() and not isinstance(self.distribution, Censored):
            raise ValueError("+inf weights are only allowed for Censored distributions")

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def finite_mask(self) -> np.ndarray:
        return np.isfinite(self.values)


def sample_weights(dist: WeightDistribution, count: int, seed: int) -> WeightVector:
    """Draw `count` i.i.d. weights; deterministic given (dist, count, seed)."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    values = np.asarray(dist.sample(rng, count), dtype=float)
    return WeightVector(values=values, source_seed=int(seed), distribution=dist)


def distribution_from_string(text: str) -> WeightDistribution:
    """Inverse of descriptor(): exp:R | uniform:A:B | censored:<base>:KEEP."""
    parts = text.split(":")
    kind = parts[0].lower()
    if kind == "exp" and len(parts) <= 2:
        return Exponential(rate=float(parts[1]) if len(parts) == 2 else 1.0)
    if kind == "uniform" and len(parts) == 3:
        return Uniform(lower=float(parts[1]), upper=float(parts[2]))
    if kind == "censored" and len(parts) >= 3:
        return Censored(base=distribution_from_string(":".join(parts[1:-1])),
                        keep_prob=float(parts[-1]))
    raise ValueError(f"cannot parse distribution descriptor {text!r}")
