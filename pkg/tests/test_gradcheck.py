import numpy as np

from facerestore.gradcheck import grad_check, grad_check_tensors
from facerestore.tensor import Tensor, conv2d, deconv2d, mse, mul, relu, sigmoid


def test_linear_op_exact():
    report = grad_check(lambda x: mul(x, 3.0), [(4, 5)], seed=0, op_name="scale3")
    assert report.passed
    assert report.max_rel_err < 1e-9


def test_conv2d_random_instances():
    for seed in range(5):
        def op(x, w, b):
            return conv2d(x, w, b, stride=1, padding=1)
        report = grad_check(op, [(2, 3, 5, 5), (4, 3, 3, 3), (4,)], seed=seed, op_name="conv2d")
        assert report.passed, str(report)


def test_conv2d_strided():
    report = grad_check(lambda x, w, b: conv2d(x, w, b, stride=2, padding=1),
                        [(1, 2, 6, 6), (3, 2, 3, 3), (3,)], seed=3)
    assert report.passed, str(report)


def test_deconv2d():
    for seed in range(5):
        report = grad_check(lambda x, w, b: deconv2d(x, w, b, stride=2, padding=1),
                            [(1, 2, 4, 4), (2, 3, 4, 4), (3,)], seed=seed, op_name="deconv2d")
        assert report.passed, str(report)


def test_relu_away_from_kink():
    def push(arr):
        return np.where(np.abs(arr) < 0.1, arr + 0.3 * np.sign(arr + 1e-12), arr)
    for seed in range(5):
        report = grad_check(relu, [(3, 7)], seed=seed, transform=push, op_name="relu")
        assert report.passed, str(report)


def test_sigmoid_and_mse():
    assert grad_check(sigmoid, [(4, 4)], seed=1).passed
    assert grad_check(mse, [(3, 3), (3, 3)], seed=2).passed


def test_nonfinite_gradient_yields_failed_report_not_crash():
    def bad_op(x):
        data = x.data.copy()
        data[0] = np.nan
        out = Tensor(data, requires_grad=True, _parents=(x,),
                     _backward_fn=lambda g: None)
        return out

    report = grad_check(bad_op, [(3,)], seed=0, op_name="nan_op")
    assert not report.passed


def test_grad_check_tensors_on_prebuilt_graph():
    rng = np.random.default_rng(0)
    x = Tensor(rng.uniform(-1, 1, (2, 3)), requires_grad=True)
    w = Tensor(rng.uniform(-1, 1, (2, 3)), requires_grad=True)
    report = grad_check_tensors(lambda: mse(mul(x, w), Tensor(np.zeros((2, 3)))),
                                [x, w], op_name="weighted_mse")
    assert report.passed, str(report)


def test_report_pass_rule():
    # passed iff max_rel <= rtol or max_abs <= atol; the rel side carries this one
    report = grad_check(lambda x: mul(x, 2.0), [(3,)], seed=5, rtol=1e-9, atol=1e-30)
    assert report.max_rel_err <= 1e-9
    assert report.passed
    # and an impossible pair of tolerances must fail
    report = grad_check(lambda x: mul(x, 2.0), [(3,)], seed=5, rtol=1e-30, atol=1e-30)
    assert not report.passed
