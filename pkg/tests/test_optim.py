import numpy as np
import pytest

from voicecount.errors import PipelineError
from voicecount.nn import Adam, Parameter


def test_zero_gradient_is_fixed_point():
    p = Parameter("w", np.array([1.0, -2.0]))
    opt = Adam([p])
    for _ in range(5):
        p.grad[...] = 0.0
        opt.step()
    np.testing.assert_array_equal(p.value, [1.0, -2.0])


def test_first_step_is_minus_lr():
    p = Parameter("w", np.array([0.0]))
    opt = Adam([p], lr=0.001)
    p.grad[...] = 1.0
    opt.step()
    # bias-corrected first step has magnitude ~lr
    assert p.value[0] == pytest.approx(-0.001, rel=1e-6)


def test_constant_gradient_keeps_unit_ratio():
    p = Parameter("w", np.array([0.0]))
    opt = Adam([p], lr=0.01)
    for _ in range(10):
        p.grad[...] = 1.0
        opt.step()
    assert p.value[0] == pytest.approx(-0.1, rel=1e-4)


def test_quadratic_bowl_converges():
    # f(w) = w^2, gradient 2w, from w = 1
    p = Parameter("w", np.array([1.0]))
    opt = Adam([p], lr=0.01)
    for _ in range(2000):
        p.grad[...] = 2.0 * p.value
        opt.step()
    assert abs(p.value[0]) < 1e-3


def test_deterministic():
    def run():
        p = Parameter("w", np.array([1.0, 2.0]))
        opt = Adam([p], lr=0.05)
        rng = np.random.default_rng(0)
        for _ in range(50):
            p.grad[...] = rng.standard_normal(2) + p.value
            opt.step()
        return p.value.copy()

    np.testing.assert_array_equal(run(), run())


def test_non_finite_gradient_rejected_with_name():
    p = Parameter("blstm.wx", np.array([1.0]))
    opt = Adam([p])
    p.grad[...] = np.nan
    with pytest.raises(PipelineError, match="blstm.wx"):
        opt.step()
