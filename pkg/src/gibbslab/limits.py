"""Closed-form limit-law parameters for the fixed-temperature theorems.

Everything is computed from the model constant gamma and the weight
cumulants (psi, psi', psi'') alone; no parameter is hard-coded per family:

  * log-partition CLT:  log Z - m psi(beta)  =>  N(-gamma v2, 2 gamma v2);
  * two-sample overlap  =>  Poisson(2 gamma exp(psi(2b) - 2 psi(b)));
  * typical weight:     (W + m psi'(beta))/sqrt(m)  =>  N(0, psi''(beta));
  * Gibbs average:      <W> + m psi'(beta)  =>  N(mu, sigma2) with
        mu     = 2 gamma (psi'(b) - psi'(2b)) exp(psi(2b) - 2 psi(b)),
        sigma2 = 2 gamma ((psi'(b) - psi'(2b))^2 + psi''(2b))
                         * exp(psi(2b) - 2 psi(b)).

The multipartite variant sums -gamma_st v2_st blockwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from scipy.stats import norm, poisson

from .models import ProblemModel
from .weights import WeightDistribution, psi, psi_double_prime, psi_prime, v_squared

__all__ = [
    "LimitLaw",
    "logz_limit",
    "overlap_lambda",
    "typical_clt",
    "gibbs_avg_clt",
    "multipartite_logz_limit",
]


@dataclass(frozen=True)
class LimitLaw:
    """A predicted Normal or Poisson limit, with centering/scaling metadata."""

    kind: str  # "normal" | "poisson"
    mean: float
    variance: float
    centering: str
    scaling: str

    @staticmethod
    def normal(mean: float, variance: float, centering: str,
               scaling: str = "none") -> "LimitLaw":
        return LimitLaw("normal", float(mean), float(variance), centering, scaling)

    @staticmethod
    def poisson_law(rate: float, centering: str = "none",
                    scaling: str = "none") -> "LimitLaw":
        return LimitLaw("poisson", float(rate), float(rate), centering, scaling)

    @property
    def rate(self) -> float:
        if self.kind != "poisson":
            raise ValueError("rate is only defined for Poisson laws")
        return self.mean

    def cdf(self, x):
        if self.kind != "normal":
            raise ValueError("cdf(x) on a non-normal law")
        if self.variance == 0.0:
            return (x >= self.mean) * 1.0
        return norm.cdf(x, loc=self.mean, scale=math.sqrt(self.variance))

    def pmf(self, k):
        if self.kind != "poisson":
            raise ValueError("pmf(k) on a non-poisson law")
        return poisson.pmf(k, self.rate)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "centering": self.centering, "scaling": self.scaling}
        if self.kind == "poisson":
            out["rate"] = self.mean
        else:
            out["mean"] = self.mean
            out["variance"] = self.variance
        return out


def _tilted_second_moment_factor(dist: WeightDistribution, beta: float) -> float:
    return math.exp(psi(dist, 2 * beta) - 2 * psi(dist, beta))


def logz_limit(model: ProblemModel, dist: WeightDistribution, beta: float) -> LimitLaw:
    """Limit of log Z - m psi(beta): N(-gamma v2, 2 gamma v2)."""
    gamma = float(model.gamma)
    v2 = v_squared(dist, beta)
    return LimitLaw.normal(-gamma * v2, 2 * gamma * v2,
                           centering="log Z - m*psi(beta)")


def overlap_lambda(model: ProblemModel, dist: WeightDistribution,
                   beta: float) -> LimitLaw:
    """Two independent Gibbs samples share Poisson(2 gamma e^{psi(2b)-2psi(b)}) edges."""
    gamma = float(model.gamma)
    return LimitLaw.poisson_law(2 * gamma * _tilted_second_moment_factor(dist, beta))


def typical_clt(dist: WeightDistribution, beta: float) -> LimitLaw:
    """Quenched limit of (W(pi) + m psi'(beta)) / sqrt(m): N(0, psi''(beta))."""
    return LimitLaw.normal(0.0, psi_double_prime(dist, beta),
                           centering="+ m*psi'(beta)", scaling="/ sqrt(m)")


def gibbs_avg_clt(model: ProblemModel, dist: WeightDistribution,
                  beta: float) -> LimitLaw:
    """Limit of <W(pi)> + m psi'(beta)."""
    gamma = float(model.gamma)
    factor = _tilted_second_moment_factor(dist, beta)
    gap = psi_prime(dist, beta) - psi_prime(dist, 2 * beta)
    mu = 2 * gamma * gap * factor
    sigma2 = 2 * gamma * (gap**2 + psi_double_prime(dist, 2 * beta)) * factor
    return LimitLaw.normal(mu, sigma2, centering="+ m*psi'(beta)")


def multipartite_logz_limit(
    blocks: Sequence[tuple[int, float, WeightDistribution]], beta: float
) -> LimitLaw:
    """Blockwise log-partition limit for complete multipartite families.

    Each block contributes (m_st, gamma_st, dist_st); the limit is
    N(-sum gamma v2, 2 sum gamma v2) centered at log Z - sum m_st psi_st.
    Parameter calculator only; no multipartite oracle or sampler exists here.
    """
    if not blocks:
        raise ValueError("need at least one block")
    total = 0.0
    for _, gamma_st, dist_st in blocks:
        if gamma_st <= 0:
            raise ValueError("block gamma must be positive")
        total += float(gamma_st) * v_squared(dist_st, beta)
    return LimitLaw.normal(-total, 2 * total,
                           centering="log Z - sum_st m_st*psi_st(beta)")
