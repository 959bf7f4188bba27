import numpy as np
import pytest

from trimine.errors import UsageError
from trimine.optim import SGD, Adam, create_optimizer


def arrays():
    rng = np.random.default_rng(0)
    return {"w": rng.standard_normal((3, 2)), "b": rng.standard_normal(3)}


class TestOptimizers:
    @pytest.mark.parametrize("name", ["sgd", "adam"])
    def test_zero_learning_rate_is_a_no_op(self, name):
        params = arrays()
        before = {k: v.copy() for k, v in params.items()}
        optimizer = create_optimizer(name, 0.0)
        for _ in range(3):
            optimizer.step(params, arrays())
        for k in params:
            assert np.array_equal(params[k], before[k])

    def test_sgd_step(self):
        params = arrays()
        grads = {"w": np.ones((3, 2)), "b": np.full(3, 2.0)}
        before = {k: v.copy() for k, v in params.items()}
        SGD(0.1).step(params, grads)
        np.testing.assert_allclose(params["w"], before["w"] - 0.1)
        np.testing.assert_allclose(params["b"], before["b"] - 0.2)

    def test_adam_first_step_has_learning_rate_size(self):
        # bias correction makes the first update lr * sign(g)
        params = {"x": np.zeros(4)}
        Adam(0.01).step(params, {"x": np.array([3.0, -0.5, 1e-3, -20.0])})
        np.testing.assert_allclose(params["x"], [-0.01, 0.01, -0.01, 0.01], rtol=1e-4)

    def test_adam_minimizes_a_quadratic(self):
        params = {"x": np.array([5.0, -3.0])}
        optimizer = Adam(0.1)
        for _ in range(1000):
            optimizer.step(params, {"x": 2.0 * params["x"]})
        np.testing.assert_allclose(params["x"], [0.0, 0.0], atol=5e-2)

    def test_unknown_optimizer(self):
        with pytest.raises(UsageError, match="rmsprop"):
            create_optimizer("rmsprop", 0.1)

    def test_negative_learning_rate(self):
        with pytest.raises(UsageError):
            SGD(-1.0)
