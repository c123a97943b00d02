"""Limit-law parameter calculators: frozen worked values and structure."""

import math

import pytest

from gibbslab.limits import (
    LimitLaw,
    gibbs_avg_clt,
    logz_limit,
    multipartite_logz_limit,
    overlap_lambda,
    typical_clt,
)
from gibbslab.models import (
    KFactor,
    MatchingBipartite,
    MatchingComplete,
    SpanningTree,
    TravelingSalesman,
)
from gibbslab.weights import Exponential, Uniform, numeric_cgf_derivatives

EXP1 = Exponential(1.0)
U01 = Uniform(0.0, 1.0)


class TestLogZLimit:
    def test_bipartite_matching_worked_example(self):
        law = logz_limit(MatchingBipartite(12), EXP1, 1.0)
        assert law.kind == "normal"
        assert law.mean == pytest.approx(-1 / 6, abs=1e-14)
        assert law.variance == pytest.approx(1 / 3, abs=1e-14)

    def test_spanning_tree_worked_example(self):
        law = logz_limit(SpanningTree(400), EXP1, 1.0)
        assert law.mean == pytest.approx(-1 / 3, abs=1e-14)
        assert law.variance == pytest.approx(2 / 3, abs=1e-14)

    def test_variance_is_minus_twice_mean(self):
        for model in (MatchingBipartite(8), MatchingComplete(8),
                      TravelingSalesman(8), SpanningTree(8), KFactor(8, 3)):
            for dist in (EXP1, U01, Exponential(2.0)):
                for beta in (0.3, 1.0, 2.5):
                    law = logz_limit(model, dist, beta)
                    assert law.variance == pytest.approx(-2 * law.mean, rel=1e-12)

    def test_beta_zero_degenerate(self):
        law = logz_limit(SpanningTree(10), EXP1, 0.0)
        assert law.mean == 0.0 and law.variance == 0.0


class TestOverlapLambda:
    def test_beta_zero_is_two_gamma(self):
        assert overlap_lambda(MatchingBipartite(10), EXP1, 0.0).rate == pytest.approx(1.0)
        assert overlap_lambda(SpanningTree(10), EXP1, 0.0).rate == pytest.approx(2.0)
        assert overlap_lambda(TravelingSalesman(10), EXP1, 0.0).rate == pytest.approx(2.0)
        assert overlap_lambda(MatchingComplete(10), EXP1, 0.0).rate == pytest.approx(0.5)
        assert overlap_lambda(KFactor(10, 2), EXP1, 0.0).rate == pytest.approx(2.0)

    def test_spanning_tree_beta_one(self):
        # 2 * 1 * e^{psi(2)-2psi(1)} = 2 * (1+1)^2/(1+2) = 8/3
        law = overlap_lambda(SpanningTree(300), EXP1, 1.0)
        assert law.rate == pytest.approx(8 / 3, abs=1e-13)

    def test_pmf_available(self):
        law = overlap_lambda(SpanningTree(10), EXP1, 1.0)
        assert law.pmf(0) == pytest.approx(math.exp(-law.rate))


class TestTypicalCLT:
    def test_exponential_beta_one(self):
        law = typical_clt(EXP1, 1.0)
        assert law.mean == 0.0
        assert law.variance == pytest.approx(0.25, abs=1e-14)
        assert law.scaling == "/ sqrt(m)"

    def test_beta_zero_variance_is_weight_variance(self):
        assert typical_clt(EXP1, 0.0).variance == pytest.approx(1.0, abs=1e-9)
        assert typical_clt(U01, 0.0).variance == pytest.approx(1 / 12, abs=1e-9)

    def test_uniform_matches_numeric_derivative(self):
        _, d2 = numeric_cgf_derivatives(U01.psi, 1.0)
        assert typical_clt(U01, 1.0).variance == pytest.approx(d2, abs=1e-6)


class TestGibbsAvgCLT:
    def test_spanning_tree_worked_example(self):
        law = gibbs_avg_clt(SpanningTree(400), EXP1, 1.0)
        assert law.mean == pytest.approx(-4 / 9, abs=1e-13)
        assert law.variance == pytest.approx(10 / 27, abs=1e-13)

    def test_bipartite_worked_example(self):
        law = gibbs_avg_clt(MatchingBipartite(12), EXP1, 1.0)
        assert law.mean == pytest.approx(-2 / 9, abs=1e-13)
        assert law.variance == pytest.approx(5 / 27, abs=1e-13)

    def test_mean_vanishes_as_beta_to_zero(self):
        law = gibbs_avg_clt(SpanningTree(10), EXP1, 1e-8)
        assert abs(law.mean) < 1e-6
        # variance tends to 2*gamma*Var(omega)
        assert law.variance == pytest.approx(2.0, rel=1e-4)


class TestMultipartite:
    def test_single_block_reduces_to_logz_limit(self):
        model = SpanningTree(50)
        base = logz_limit(model, EXP1, 1.0)
        law = multipartite_logz_limit([(model.config_size, float(model.gamma), EXP1)],
                                      1.0)
        assert law.mean == pytest.approx(base.mean, abs=1e-14)
        assert law.variance == pytest.approx(base.variance, abs=1e-14)

    def test_two_half_blocks_additivity(self):
        gamma = 0.8
        whole = multipartite_logz_limit([(60, gamma, EXP1)], 1.0)
        split = multipartite_logz_limit([(30, gamma / 2, EXP1),
                                         (30, gamma / 2, EXP1)], 1.0)
        assert split.mean == pytest.approx(whole.mean, abs=1e-14)
        assert split.variance == pytest.approx(whole.variance, abs=1e-14)

    def test_mixed_blocks_worked_example(self):
        # v2(Exp(1), 1) = 1/3 and v2(U(0,1), 1) = 0.08197670686932645
        law = multipartite_logz_limit([(100, 0.5, EXP1), (50, 0.25, U01)], 1.0)
        assert law.mean == pytest.approx(-0.18716084338399827, abs=1e-12)
        assert law.variance == pytest.approx(2 * 0.18716084338399827, abs=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            multipartite_logz_limit([], 1.0)
        with pytest.raises(ValueError):
            multipartite_logz_limit([(10, 0.0, EXP1)], 1.0)


class TestLimitLawType:
    def test_kind_guards(self):
        normal = LimitLaw.normal(0.0, 1.0, centering="c")
        pois = LimitLaw.poisson_law(2.0)
        with pytest.raises(ValueError):
            normal.rate
        with pytest.raises(ValueError):
            normal.pmf(1)
        with pytest.raises(ValueError):
            pois.cdf(0.5)

    def test_serialization(self):
        law = logz_limit(SpanningTree(10), EXP1, 1.0)
        d = law.to_dict()
        assert d["kind"] == "normal" and "mean" in d and "variance" in d
        d2 = overlap_lambda(SpanningTree(10), EXP1, 0.0).to_dict()
        assert d2["kind"] == "poisson" and "rate" in d2
