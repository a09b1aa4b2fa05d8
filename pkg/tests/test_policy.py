import math

import numpy as np
import pytest

from pilesort.features import (COLOR_LAYOUT_LEN, SUCCESS_LAYOUT_LEN,
                               FeatureVector)
from pilesort.grasp import GraspRectangle
from pilesort.policy import (Decision, EvaluatedGrasp, Proposal, evaluate,
                             purity_value, select)


class StubModels:
    """Fixed per-proposal predictions keyed by the first feature value."""

    def __init__(self, p_success, colors):
        self.p = np.asarray(p_success, dtype=float)
        self.c = np.asarray(colors, dtype=float)

    def success_probabilities(self, X):
        return self.p[X[:, 0].astype(int)]

    def color_proportions(self, X):
        return self.c[X[:, 0].astype(int)]


def make_proposal(i):
    g = GraspRectangle(100.0 * i, 50.0, 0.0, 60.0, 80.0, 10.0)
    xs = np.zeros(SUCCESS_LAYOUT_LEN)
    xs[0] = i
    xc = np.zeros(COLOR_LAYOUT_LEN)
    xc[0] = i
    return Proposal(g, FeatureVector(xs, "success"), FeatureVector(xc, "color"))


class TestPurityValue:
    def test_half_at_center(self):
        assert purity_value(0.8) == 0.5

    def test_monotone(self):
        xs = np.linspace(0.0, 1.0, 101)
        ys = [purity_value(x) for x in xs]
        assert all(b > a for a, b in zip(ys, ys[1:]))

    def test_extremes(self):
        assert purity_value(0.0) < 1e-6
        assert purity_value(1.0) > 0.98

    def test_logistic_form(self):
        for p in (0.3, 0.6, 0.85, 0.95):
            want = 1.0 / (1.0 + math.exp(-20.0 * (p - 0.8)))
            assert purity_value(p) == pytest.approx(want, abs=1e-12)

    def test_domain(self):
        with pytest.raises(ValueError):
            purity_value(-0.1)
        with pytest.raises(ValueError):
            purity_value(1.1)


class TestEvaluate:
    def test_worked_example(self):
        models = StubModels([0.5], [[90.0, 10.0, 0.0, 0.0]])
        out = evaluate(models, [make_proposal(0)], pixel_scale=1.0)
        e = out[0]
        assert e.target == 0
        assert e.p_success == 0.5
        want = purity_value(0.9) * 90.0 * 0.5
        assert e.value == pytest.approx(want, abs=1e-6)
        assert e.value == pytest.approx(39.6359, abs=1e-3)

    def test_pixel_scale(self):
        models = StubModels([1.0], [[0.9, 0.1, 0.0, 0.0]])
        out = evaluate(models, [make_proposal(0)], pixel_scale=1000.0)
        assert out[0].expected_colors.tolist() == [900.0, 100.0, 0.0, 0.0]

    def test_negative_proportions_clipped(self):
        models = StubModels([1.0], [[-0.5, 1.0, 0.0, 0.0]])
        out = evaluate(models, [make_proposal(0)], pixel_scale=1.0)
        assert out[0].expected_colors[0] == 0.0
        assert out[0].target == 1

    def test_zero_mass_gives_zero_value(self):
        models = StubModels([1.0], [[0.0, 0.0, 0.0, 0.0]])
        out = evaluate(models, [make_proposal(0)], pixel_scale=1.0)
        assert out[0].value == 0.0

    def test_empty(self):
        assert evaluate(StubModels([], np.empty((0, 4))), []) == []

    def test_purity_drives_preference(self):
        # same mass and success; the purer pick must score higher
        models = StubModels([0.8, 0.8],
                            [[0.95, 0.05, 0.0, 0.0], [0.55, 0.45, 0.0, 0.0]])
        out = evaluate(models, [make_proposal(0), make_proposal(1)])
        assert out[0].value > out[1].value


def ev(value, p_success=0.9, target=0):
    g = GraspRectangle(0, 0, 0, 60, 80, 0)
    return EvaluatedGrasp(g, p_success, np.zeros(4), target, value)


class TestSelect:
    def test_empty_skips(self):
        d = select([], np.random.default_rng(0))
        assert d.skip and d.index == -1

    def test_picks_max_value(self):
        d = select([ev(1.0), ev(5.0), ev(2.0)], np.random.default_rng(0))
        assert d.execute and d.index == 1

    def test_tie_goes_to_lowest_index(self):
        d = select([ev(3.0), ev(3.0), ev(3.0)], np.random.default_rng(0))
        assert d.index == 0

    def test_confident_pick_never_skipped(self):
        for seed in range(50):
            d = select([ev(1.0, p_success=0.1)], np.random.default_rng(seed))
            assert d.execute

    def test_low_probability_skip_rate(self):
        n = 20_000
        rng = np.random.default_rng(1)
        skips = sum(select([ev(1.0, p_success=0.05)], rng).skip
                    for _ in range(n))
        # binomial(n, 0.95): 3 sigma is about 0.0046
        assert abs(skips / n - 0.95) < 0.005

    def test_skip_decision_still_reports_grasp(self):
        rng = np.random.default_rng(2)
        while True:
            d = select([ev(1.0, p_success=0.05)], rng)
            if d.skip:
                break
        assert d.index == 0 and d.grasp is not None and d.evaluated is not None
