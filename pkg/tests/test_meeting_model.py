import math

import numpy as np
import pytest
from scipy import stats

from psnsim.errors import ConfigurationError
from psnsim.interest_space import (
    WORST_CASE,
    Population,
    make_endpoints,
    sample_profile,
    sample_profile_coords,
)
from psnsim.meeting_model import (
    INTEREST_BASED,
    SOCIAL_OBLIVIOUS,
    RateMatrix,
    RateModel,
    build_rate_matrix,
    normalization_k,
    pair_rate,
    sample_min_meeting,
)


class TestNormalization:
    def test_value(self):
        assert math.isclose(normalization_k(1.0, 0.0), math.pi / 2.0)
        assert math.isclose(normalization_k(2.0, 0.5), (math.pi / 2.0) * 1.5)

    @pytest.mark.parametrize("lam,delta", [(1.0, 1.0), (1.0, 1.5), (1.0, -0.1)])
    def test_invalid_delta(self, lam, delta):
        with pytest.raises(ConfigurationError):
            normalization_k(lam, delta)

    def test_mean_rate_equals_lambda(self):
        # The coupling constant is chosen so the rate to a uniformly drawn
        # profile averages to lambda.
        model = RateModel(INTEREST_BASED, lam=1.3, delta=0.2)
        rng = np.random.default_rng(31)
        coords = sample_profile_coords(rng, 4, 100_000)
        rates = model.k * coords[:, 0] + model.delta
        assert abs(float(rates.mean()) - 1.3) < 0.013


class TestRateModel:
    def test_oblivious_rate_is_constant(self):
        model = RateModel(SOCIAL_OBLIVIOUS, lam=2.0)
        rng = np.random.default_rng(1)
        a, b = sample_profile(rng, 3), sample_profile(rng, 3)
        assert pair_rate(model, a, b) == 2.0

    def test_interest_rate_orthogonal_pair(self):
        model = RateModel(INTEREST_BASED, lam=1.0, delta=0.01)
        rng = np.random.default_rng(1)
        s, d = make_endpoints(WORST_CASE, rng, 4)
        assert math.isclose(pair_rate(model, s, d), 0.01)

    def test_interest_rate_formula(self):
        model = RateModel(INTEREST_BASED, lam=1.0, delta=0.1)
        rng = np.random.default_rng(2)
        a, b = sample_profile(rng, 4), sample_profile(rng, 4)
        cos = float(np.dot(a.coords, b.coords))
        assert math.isclose(pair_rate(model, a, b), model.k * cos + 0.1)

    def test_invalid_kind_and_lambda(self):
        with pytest.raises(ConfigurationError):
            RateModel("weird", lam=1.0)
        with pytest.raises(ConfigurationError):
            RateModel(SOCIAL_OBLIVIOUS, lam=0.0)


class TestRateMatrix:
    def test_build_matches_pair_rate(self):
        rng = np.random.default_rng(3)
        s, d = make_endpoints(WORST_CASE, rng, 4)
        relays = [sample_profile(rng, 4) for _ in range(3)]
        pop = Population(s, d, relays)
        model = RateModel(INTEREST_BASED, lam=1.0, delta=0.05)
        matrix = build_rate_matrix(model, pop)
        assert matrix.size == 5
        assert np.allclose(np.diag(matrix.rates), 0.0)
        assert math.isclose(matrix.rates[0, 2], pair_rate(model, s, relays[0]))
        assert np.allclose(matrix.rates, matrix.rates.T)

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            RateMatrix(np.array([[0.0, 1.0]]))
        with pytest.raises(ConfigurationError):
            RateMatrix(np.array([[0.0, -1.0], [-1.0, 0.0]]))
        with pytest.raises(ConfigurationError):
            RateMatrix(np.array([[0.0, 1.0], [2.0, 0.0]]))


class TestMinMeeting:
    def test_rejects_bad_rates(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ConfigurationError):
            sample_min_meeting(rng, [])
        with pytest.raises(ConfigurationError):
            sample_min_meeting(rng, [1.0, 0.0])

    def test_time_is_exponential_in_total_rate(self):
        rng = np.random.default_rng(41)
        rates = [1.0, 2.0, 3.0, 4.0]
        times = np.array(
            [sample_min_meeting(rng, rates)[0] for _ in range(100_000)]
        )
        result = stats.kstest(times, "expon", args=(0.0, 0.1))
        assert result.pvalue > 0.001

    def test_index_follows_rate_proportions(self):
        # With rates (1,2,3,4) the last clock wins with probability 4/10.
        rng = np.random.default_rng(43)
        rates = [1.0, 2.0, 3.0, 4.0]
        counts = np.zeros(4)
        draws = 100_000
        for _ in range(draws):
            counts[sample_min_meeting(rng, rates)[1]] += 1
        expected = np.array([0.1, 0.2, 0.3, 0.4]) * draws
        result = stats.chisquare(counts, expected)
        assert result.pvalue > 0.001
        assert abs(counts[3] / draws - 0.4) < 0.01
