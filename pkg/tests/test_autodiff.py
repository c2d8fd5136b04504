import numpy as np
import pytest

from vdnfields import autodiff as ad
from vdnfields.autodiff import Tape, Tensor, no_grad

from oracles import gradcheck


def test_matmul_identity():
    eye = Tensor(np.eye(2, dtype=np.float32))
    out = ad.matmul(eye, eye)
    assert np.allclose(out.data, np.eye(2))


def test_matmul_hand_case():
    a = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32))
    b = Tensor(np.array([[1.0], [1.0]], dtype=np.float32))
    out = ad.matmul(a, b)
    assert np.allclose(out.data, [[3.0], [7.0]])


def test_matmul_shape_mismatch():
    a = Tensor(np.ones((2, 3), dtype=np.float32))
    b = Tensor(np.ones((2, 3), dtype=np.float32))
    with pytest.raises(ad.ShapeError):
        ad.matmul(a, b)


def test_matmul_grad_column_sums():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(4, 2))
    err = gradcheck(lambda x, y: ad.reduce_sum(ad.matmul(x, y)), [a, b])
    assert err < 1e-4
    # gradient of sum(A.B) wrt A is the column sums of B, broadcast over rows
    ta = Tensor(a, dtype=np.float64, requires_grad=True)
    tb = Tensor(b, dtype=np.float64)
    with Tape() as tape:
        tape.backward(ad.reduce_sum(ad.matmul(ta, tb)))
    assert np.allclose(ta.grad, np.tile(b.sum(axis=1), (3, 1)))


def test_sigmoid_at_zero():
    assert ad.sigmoid(Tensor(np.zeros(1, dtype=np.float32))).item() == 0.5


def test_max0_negative_input_zero_grad():
    x = Tensor(np.array([-3.0]), dtype=np.float64, requires_grad=True)
    with Tape() as tape:
        y = ad.max0(x)
        tape.backward(ad.reduce_sum(y))
    assert y.item() == 0.0
    assert x.grad[0] == 0.0


def test_softplus_derivative_matches_sigmoid_of_one():
    x = Tensor(np.array([1.0]), dtype=np.float64, requires_grad=True)
    with Tape() as tape:
        tape.backward(ad.reduce_sum(ad.softplus(x)))
    expected = 1.0 / (1.0 + np.exp(-1.0))  # 0.7310585786300049
    assert abs(x.grad[0] - expected) < 1e-10
    err = gradcheck(lambda t: ad.reduce_sum(ad.softplus(t)), [np.array([1.0])])
    assert err < 1e-6


def test_log_domain_error():
    with pytest.raises(ad.DomainError):
        ad.log(Tensor(np.array([0.0, 1.0], dtype=np.float32)))


def test_reduce_examples():
    assert ad.reduce_sum(Tensor(np.array([1.0, 2.0, 3.0], dtype=np.float32))).item() == 6.0
    assert ad.reduce_mean(Tensor(np.full(7, 4.25, dtype=np.float32))).item() == 4.25


def test_mean_grad_is_one_over_n():
    x = np.linspace(-1, 1, 5)
    t = Tensor(x, dtype=np.float64, requires_grad=True)
    with Tape() as tape:
        tape.backward(ad.reduce_mean(t))
    assert np.allclose(t.grad, 1.0 / 5.0)
    assert gradcheck(lambda a: ad.reduce_mean(a), [x]) < 1e-6


def test_backward_sum_of_squares():
    x = Tensor(np.array([1.0, 2.0]), dtype=np.float64, requires_grad=True)
    with Tape() as tape:
        tape.backward(ad.reduce_sum(ad.square(x)))
    assert np.allclose(x.grad, [2.0, 4.0])


def test_backward_detached_leaf_grad_zero():
    x = Tensor(np.array([1.0, 2.0]), dtype=np.float64, requires_grad=True)
    y = Tensor(np.array([3.0]), dtype=np.float64, requires_grad=True)
    with Tape() as tape:
        loss = ad.reduce_sum(ad.square(x.detach()) + y)
        tape.backward(loss)
    assert np.all(x.grad == 0.0)
    assert np.allclose(y.grad, [2.0])


def test_backward_requires_scalar():
    x = Tensor(np.ones(3), dtype=np.float64, requires_grad=True)
    with Tape() as tape:
        y = ad.square(x)
        with pytest.raises(ad.GraphError):
            tape.backward(y)


def test_grad_accumulates_across_backward_calls():
    x = Tensor(np.array([2.0]), dtype=np.float64, requires_grad=True)
    with Tape() as tape:
        loss = ad.reduce_sum(ad.square(x))
        tape.backward(loss)
        tape.backward(loss)
    assert np.allclose(x.grad, [8.0])


@pytest.mark.parametrize(
    "name,build",
    [
        ("add", lambda a, b: ad.reduce_sum(ad.add(a, b))),
        ("sub", lambda a, b: ad.reduce_sum(ad.sub(a, b))),
        ("mul", lambda a, b: ad.reduce_sum(ad.mul(a, b))),
        ("div", lambda a, b: ad.reduce_sum(ad.div(a, ad.add(ad.square(b), ad.tensor(np.ones(1)))))),
    ],
)
def test_binary_op_grads(name, build):
    rng = np.random.default_rng(7)
    a = rng.normal(size=(4, 3))
    b = rng.normal(size=(4, 3))
    assert gradcheck(build, [a, b]) < 1e-6


@pytest.mark.parametrize(
    "name,fn",
    [
        ("exp", ad.exp),
        ("sin", ad.sin),
        ("cos", ad.cos),
        ("square", ad.square),
        ("sigmoid", ad.sigmoid),
        ("softplus", ad.softplus),
        ("max0", ad.max0),
        ("abs", ad.absolute),
    ],
)
def test_unary_op_grads(name, fn):
    rng = np.random.default_rng(11)
    x = rng.normal(size=(5,)) + 0.67  # keep away from relu/abs kinks
    assert gradcheck(lambda t: ad.reduce_sum(fn(t)), [x]) < 1e-5


def test_softplus_and_sigmoid_pair_grad():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(6,))

    def build(t):
        sp, sig = ad.softplus_and_sigmoid(t, beta=10.0)
        return ad.reduce_sum(ad.add(ad.square(sp), ad.mul(sig, sig)))

    assert gradcheck(build, [x]) < 1e-5


def test_broadcast_add_unbroadcasts_grad():
    a = np.ones((3, 4))
    b = np.ones((1, 4))
    assert gradcheck(lambda x, y: ad.reduce_sum(ad.mul(ad.add(x, y), ad.add(x, y))), [a, b]) < 1e-6


def test_cumsum_narrow_concat_gather_grads():
    rng = np.random.default_rng(5)
    a = rng.normal(size=(4, 5))

    def build(t):
        c = ad.cumsum(t, axis=1)
        left = ad.narrow(c, 1, 0, 3)
        right = ad.narrow(c, 1, 3, 2)
        back = ad.concat([right, left], axis=1)
        picked = ad.gather_rows(back, np.array([0, 2, 2, 3]))
        return ad.reduce_sum(ad.square(picked))

    assert gradcheck(build, [a]) < 1e-6


def test_tile_rows_grad():
    rng = np.random.default_rng(9)
    a = rng.normal(size=(3, 2))
    assert gradcheck(lambda t: ad.reduce_sum(ad.square(ad.tile_rows(t, 3))), [a]) < 1e-6


def test_affine_grad():
    rng = np.random.default_rng(13)
    x = rng.normal(size=(4, 3))
    w = rng.normal(size=(3, 2))
    b = rng.normal(size=(2,))
    assert gradcheck(lambda a, c, d: ad.reduce_sum(ad.square(ad.affine(a, c, d))), [x, w, b]) < 1e-6


def test_no_grad_suppresses_recording():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        with no_grad():
            y = ad.square(x)
        assert len(tape) == 0
        assert y._node is None


def test_tape_cleared_after_step():
    x = Tensor(np.ones(3), dtype=np.float64, requires_grad=True)
    tape = Tape()
    sizes = []
    for _ in range(3):
        with tape:
            loss = ad.reduce_sum(ad.square(x))
            tape.backward(loss)
        sizes.append(len(tape))
        tape.clear()
        assert len(tape) == 0
    assert sizes == [sizes[0]] * 3


def test_backward_deterministic_bitwise():
    rng = np.random.default_rng(21)
    x = rng.normal(size=(64, 8)).astype(np.float32)
    w = rng.normal(size=(8, 8)).astype(np.float32)

    def run():
        tx = Tensor(x.copy(), requires_grad=True)
        tw = Tensor(w.copy(), requires_grad=True)
        with Tape() as tape:
            y = ad.softplus(ad.matmul(tx, tw))
            tape.backward(ad.reduce_mean(ad.square(y)))
        return tx.grad.copy(), tw.grad.copy()

    g1 = run()
    g2 = run()
    assert np.array_equal(g1[0], g2[0])
    assert np.array_equal(g1[1], g2[1])


def test_primitive_grad_sweep_100_seeds():
    """Spec gradient suite: primitives vs central differences on random seeds."""
    ops = [
        lambda t: ad.reduce_sum(ad.exp(t)),
        lambda t: ad.reduce_sum(ad.sigmoid(t)),
        lambda t: ad.reduce_sum(ad.softplus(t, beta=3.0)),
        lambda t: ad.reduce_mean(ad.square(t)),
        lambda t: ad.reduce_sum(ad.sin(ad.cos(t))),
    ]
    for seed in range(100):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(4,))
        op = ops[seed % len(ops)]
        assert gradcheck(op, [x]) < 1e-5, f"seed {seed}"


def test_conv2d_grad():
    rng = np.random.default_rng(17)
    x = rng.normal(size=(1, 2, 6, 6))
    w = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=(3,))

    def build(a, c, d):
        return ad.reduce_sum(ad.square(ad.conv2d(a, c, d, stride=2, pad=1)))

    assert gradcheck(build, [x, w, b]) < 1e-5


def test_conv2d_output_shape_halves():
    x = Tensor(np.zeros((1, 3, 16, 16), dtype=np.float32))
    w = Tensor(np.zeros((8, 3, 3, 3), dtype=np.float32))
    b = Tensor(np.zeros(8, dtype=np.float32))
    y = ad.conv2d(x, w, b, stride=2, pad=1)
    assert y.shape == (1, 8, 8, 8)


def test_upsample_nearest_grad_and_shape():
    rng = np.random.default_rng(19)
    x = rng.normal(size=(1, 2, 3, 3))
    assert gradcheck(lambda t: ad.reduce_sum(ad.square(ad.upsample_nearest2(t))), [x]) < 1e-6
    y = ad.upsample_nearest2(Tensor(np.ones((1, 1, 4, 4), dtype=np.float32)))
    assert y.shape == (1, 1, 8, 8)
