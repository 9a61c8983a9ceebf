import math
from itertools import product

import numpy as np
import pytest

from fintime.errors import AlphaOutOfRange, ZeroGradient
from fintime.flows import FlowConfig
from fintime.lyapunov import (
    EnvelopeParams,
    Source,
    envelope,
    envelope_exp,
    envelope_oracle,
    lemma1_gnf1,
    oracle_batch,
    predicted_settling,
    settling_time,
    v_grad_l1,
    v_grad_sq,
)
from fintime.objective import Objective, RosenbrockParams, quadratic, rosenbrock

Q_I = quadratic(np.eye(2), np.zeros(2))


def test_lyapunov_function_examples(rng):
    assert v_grad_sq(Q_I, Q_I.known_minimizer) == 0.0
    assert v_grad_sq(Q_I, [3.0, 4.0]) == 25.0
    assert v_grad_sq(rosenbrock(RosenbrockParams(2, 50)), [2.0, 4.0]) == 0.0
    assert v_grad_l1(Q_I, Q_I.known_minimizer) == 0.0
    assert v_grad_l1(Q_I, [3.0, -4.0]) == 7.0
    rb = rosenbrock(RosenbrockParams(2, 50))
    for x in rng.uniform(-2, 4, size=(20, 2)):
        assert v_grad_l1(rb, x) >= math.sqrt(v_grad_sq(rb, x))


def test_envelope_examples():
    assert envelope(EnvelopeParams(1, 1, 0), 0.5) == pytest.approx(0.5)
    assert envelope(EnvelopeParams(1, 1, 0.5), 1.0) == pytest.approx(0.25)
    for prm in (EnvelopeParams(1, 1, 0), EnvelopeParams(4, 2, 0.5), EnvelopeParams(3, 0.7, -1)):
        assert envelope(prm, settling_time(prm)) == 0.0
        assert envelope(prm, 2 * settling_time(prm)) == 0.0
    with pytest.raises(AlphaOutOfRange):
        envelope(EnvelopeParams(1, 1, 1.0), 0.3)


def test_settling_time_examples():
    assert settling_time(EnvelopeParams(1, 1, 0)) == 1.0
    assert settling_time(EnvelopeParams(4, 2, 0.5)) == pytest.approx(2.0)
    assert settling_time(EnvelopeParams(1, 1, 1)) == math.inf
    assert settling_time(EnvelopeParams(1, 1, 3)) == math.inf


def test_settling_time_is_oracle_root():
    prm = EnvelopeParams(4, 2, 0.5)
    t, e = envelope_oracle(prm, 2.5, n_steps=250_000)
    first_zero = t[np.argmax(e <= 1e-12)]
    assert first_zero == pytest.approx(settling_time(prm), abs=1e-3)


def test_envelope_exp_examples():
    assert envelope_exp(EnvelopeParams(1, 1, 1), 1.0) == pytest.approx(math.exp(-1))
    assert envelope_exp(EnvelopeParams(1, 1, 2), 1.0) == pytest.approx(0.5)
    for a in (1.0, 1.5, 2.0):
        vals = [envelope_exp(EnvelopeParams(1, 1, a), t) for t in (10.0, 100.0, 500.0)]
        assert all(v > 0 for v in vals) and vals[0] > vals[1] > vals[2]
    with pytest.raises(AlphaOutOfRange):
        envelope_exp(EnvelopeParams(1, 1, 0.5), 1.0)


def test_oracle_examples():
    _, e = envelope_oracle(EnvelopeParams(1, 1, 0), 1.0, n_steps=100_000)
    assert abs(e[-1]) <= 1e-4
    t, e = envelope_oracle(EnvelopeParams(1, 1, 0.5), 1.0, n_steps=100_000)
    assert t[-1] == 1.0 and e[-1] == pytest.approx(0.25, abs=1e-4)
    _, e = envelope_oracle(EnvelopeParams(1, 1, 1), 1.0, n_steps=100_000)
    assert e[-1] == pytest.approx(math.exp(-1), abs=1e-4)


def test_oracle_numpy_fallback_matches_kernel():
    params = [EnvelopeParams(e0, c, a) for a, c, e0 in product((-1.0, 0.5, 2.0), (0.5, 3.0), (0.1, 10.0))]
    t_fast, fast = oracle_batch(params, 0.01, 2000, stride=100, use_numba=True)
    t_slow, slow = oracle_batch(params, 0.01, 2000, stride=100, use_numba=False)
    np.testing.assert_array_equal(t_fast, t_slow)
    np.testing.assert_allclose(fast, slow, rtol=1e-12, atol=1e-300)


ALPHAS = (-1.0, 0.0, 0.25, 0.5, 0.9)
GAINS = (0.5, 1.0, 3.0)
LEVELS = (0.1, 1.0, 10.0)


def test_envelope_matches_oracle_on_grid():
    params = [EnvelopeParams(e0, c, a) for a, c, e0 in product(ALPHAS, GAINS, LEVELS)]
    horizons = np.array([settling_time(p) * 20 / 21 for p in params])
    t, approx = oracle_batch(params, horizons, 100_000, stride=5_000)
    for j, prm in enumerate(params):
        for k in range(1, t.shape[0]):
            exact = envelope(prm, t[k, j])
            assert abs(approx[k, j] - exact) <= 1e-4 * exact


def test_envelope_nonincreasing():
    for a, c, e0 in product(ALPHAS, GAINS, LEVELS):
        prm = EnvelopeParams(e0, c, a)
        ts = np.linspace(0, 1.2 * settling_time(prm), 200)
        vals = np.array([envelope(prm, t) for t in ts])
        assert np.all(np.diff(vals) <= 0)


def test_settling_time_monotone_in_level_and_gain():
    for a in ALPHAS:
        for c in GAINS:
            ts = [settling_time(EnvelopeParams(e0, c, a)) for e0 in LEVELS]
            assert ts[0] < ts[1] < ts[2]
        for e0 in LEVELS:
            ts = [settling_time(EnvelopeParams(e0, c, a)) for c in GAINS]
            assert ts[0] > ts[1] > ts[2]


def _fixed_gradient(g0):
    g0 = np.asarray(g0, dtype=float)
    return Objective(2, lambda x: 0.0, lambda x: g0, lambda x: np.eye(2))


def test_predicted_settling_examples():
    obj = _fixed_gradient([3.0, 4.0])  # |g| = 5
    [pred] = predicted_settling(obj, [0, 0], FlowConfig("gnf1", 5.0, 1.0, -1.0))
    assert pred.source is Source.EQ8_GNF1 and pred.t_star == pytest.approx(1.0)
    obj2 = _fixed_gradient([2.0, 0.0])
    [pred] = predicted_settling(obj2, [0, 0], FlowConfig("gnf1", 2.0, 1.0, 0.0))
    assert pred.t_star == pytest.approx(1.0)
    obj3 = _fixed_gradient([1.0, -2.0])  # |g|_1 = 3
    preds = predicted_settling(obj3, [0, 0], FlowConfig("gnf2", 1.0, 1.0, 0.0))
    assert {p.source for p in preds} == {Source.EQ8_GNF2_PAPER, Source.EQ8_GNF2_DERIVED}
    assert all(p.t_star == pytest.approx(3.0) for p in preds)
    with pytest.raises(ZeroGradient):
        predicted_settling(Q_I, [0.0, 0.0], FlowConfig("gnf1"))


@pytest.mark.parametrize("p", [1.0, 1.2, 1.5, 1.99])
@pytest.mark.parametrize("c", [0.3, 1.0, 7.0])
def test_gnf1_prediction_equals_generic_envelope(p, c, rng):
    for x0 in rng.normal(size=(5, 2)) * 3:
        cfg = FlowConfig("gnf1", c, p, 0.0)
        [eq8] = predicted_settling(Q_I, x0, cfg)
        generic = lemma1_gnf1(Q_I, x0, cfg)
        assert eq8.t_star == pytest.approx(generic.t_star, rel=1e-12)
