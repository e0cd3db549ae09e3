import os
import subprocess
import sys

import numpy as np
import pytest

from mrgcn.autodiff import Adam, Parameter, ShapeError, SparseMatrix, Tensor, kernels, ops
from mrgcn.autodiff.checkpoint import CheckpointError, load_tensors, save_tensors

from helpers import check_op_gradients, gradient_cases

TOL = 1e-4


# --------------------------------------------------------------------------
# forward values
# --------------------------------------------------------------------------


def test_identity_times_matrix():
    m = np.random.default_rng(0).normal(size=(3, 4))
    out = ops.sparse_matmul(SparseMatrix.from_dense(np.eye(3)), Tensor(m))
    np.testing.assert_array_equal(out.data, m)


def test_zero_row_sparse_gives_zero_output_row():
    a = np.array([[1.0, 0.0], [0.0, 0.0]])
    out = ops.sparse_matmul(SparseMatrix.from_dense(a), Tensor(np.ones((2, 3))))
    np.testing.assert_array_equal(out.data[1], 0.0)


def test_matmul_against_triple_loop():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=(5, 4)), rng.normal(size=(4, 3))
    expected = np.zeros((5, 3))
    for i in range(5):
        for j in range(3):
            for k in range(4):
                expected[i, j] += a[i, k] * b[k, j]
    np.testing.assert_allclose(ops.matmul(Tensor(a), Tensor(b)).data, expected, rtol=0, atol=1e-12)
    np.testing.assert_allclose(ops.sparse_matmul(SparseMatrix.from_dense(a), Tensor(b)).data, expected,
                               rtol=0, atol=1e-12)


def test_sparse_equals_dense_product():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(30, 20)) * (rng.random((30, 20)) < 0.2)
    x = rng.normal(size=(20, 6))
    np.testing.assert_allclose(ops.sparse_matmul(SparseMatrix.from_dense(a), Tensor(x)).data, a @ x,
                               rtol=0, atol=1e-12)


def test_matmul_shape_error_lists_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
        ops.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 5))))


def test_conv1d_identity_kernel():
    x = np.random.default_rng(3).normal(size=(2, 1, 9))
    out = ops.conv1d(Tensor(x), Tensor(np.ones((1, 1, 1))), Tensor(np.zeros(1)), padding=0)
    np.testing.assert_array_equal(out.data, x)


def test_conv1d_sliding_window_oracle():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(1, 3, 5))
    w = rng.normal(size=(2, 3, 3))
    b = rng.normal(size=2)
    xp = np.pad(x[0], [(0, 0), (1, 1)])
    expected = np.zeros((2, 5))
    for f in range(2):
        for t in range(5):
            expected[f, t] = b[f] + sum(w[f, c, j] * xp[c, t + j] for c in range(3) for j in range(3))
    out = ops.conv1d(Tensor(x), Tensor(w), Tensor(b), padding=1)
    assert out.shape == (1, 2, 5)
    np.testing.assert_allclose(out.data[0], expected, rtol=0, atol=1e-12)


def test_convolutions_match_torch():
    torch = pytest.importorskip("torch")
    rng = np.random.default_rng(5)
    x, w, b = rng.normal(size=(3, 4, 17)), rng.normal(size=(6, 4, 5)), rng.normal(size=6)
    ours = ops.conv1d(Tensor(x), Tensor(w), Tensor(b), padding=2).data
    ref = torch.nn.functional.conv1d(torch.tensor(x), torch.tensor(w), torch.tensor(b), padding=2).numpy()
    np.testing.assert_allclose(ours, ref, rtol=0, atol=1e-12)
    x, w, b = rng.normal(size=(2, 3, 9, 7)), rng.normal(size=(4, 3, 3, 3)), rng.normal(size=4)
    ours = ops.conv2d(Tensor(x), Tensor(w), Tensor(b), padding=1).data
    ref = torch.nn.functional.conv2d(torch.tensor(x), torch.tensor(w), torch.tensor(b), padding=1).numpy()
    np.testing.assert_allclose(ours, ref, rtol=0, atol=1e-12)


def test_conv_input_too_short():
    with pytest.raises(ShapeError):
        ops.conv1d(Tensor(np.zeros((1, 1, 2))), Tensor(np.zeros((1, 1, 7))), padding=1)
    with pytest.raises(ShapeError):
        ops.maxpool1d(Tensor(np.zeros((1, 1, 1))), 2)


def test_relu_values():
    np.testing.assert_array_equal(ops.relu(Tensor(np.array([-2.0, 3.0]))).data, [0.0, 3.0])


def test_adaptive_pools_fixed_output_length():
    for length in (1, 4, 13, 100):
        x = Tensor(np.random.default_rng(length).normal(size=(2, 3, length)))
        assert ops.adaptive_max_pool1d(x, 1).shape == (2, 3, 1)
        assert ops.adaptive_avg_pool1d(x, 1).shape == (2, 3, 1)
        np.testing.assert_allclose(ops.adaptive_max_pool1d(x, 1).data[..., 0], x.data.max(axis=2))
        np.testing.assert_allclose(ops.adaptive_avg_pool1d(x, 1).data[..., 0], x.data.mean(axis=2))


def test_softmax_rows_sum_to_one():
    x = Tensor(np.random.default_rng(6).normal(scale=30.0, size=(50, 7)))
    np.testing.assert_allclose(ops.softmax_rows(x).data.sum(axis=1), 1.0, rtol=0, atol=1e-9)


def test_concat_columns():
    a, b = np.ones((2, 1)), np.zeros((2, 3))
    np.testing.assert_array_equal(ops.concat_columns([Tensor(a), Tensor(b)]).data, np.hstack([a, b]))


# --------------------------------------------------------------------------
# cross entropy
# --------------------------------------------------------------------------


def test_cross_entropy_uniform_logits():
    loss = ops.cross_entropy(Tensor(np.zeros((3, 4))), [0, 1, 3], [0, 1, 2])
    assert abs(float(loss.data) - np.log(4)) < 1e-12


def test_cross_entropy_confident_limit():
    logits = np.array([[1000.0, 0.0], [0.0, 1000.0]])
    assert float(ops.cross_entropy(Tensor(logits), [0, 1], [0, 1]).data) < 1e-12


def test_cross_entropy_hand_softmax():
    logits = np.array([[0.2, -1.3], [1.7, 0.4], [-0.5, -0.1]])
    labels, rows = [1, 0], [0, 2]
    p = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    expected = -(np.log(p[0, 1]) + np.log(p[2, 0])) / 2
    assert abs(float(ops.cross_entropy(Tensor(logits), labels, rows).data) - expected) < 1e-12


def test_cross_entropy_empty_mask():
    with pytest.raises(ValueError):
        ops.cross_entropy(Tensor(np.zeros((3, 2))), [], [])


# --------------------------------------------------------------------------
# backward
# --------------------------------------------------------------------------


def test_backward_sum_gives_ones():
    w = Parameter(np.random.default_rng(7).normal(size=(2, 2)))
    ops.sum_all(w).backward()
    np.testing.assert_array_equal(w.grad, np.ones((2, 2)))


def test_backward_linear_map_adjoint():
    rng = np.random.default_rng(8)
    a = rng.normal(size=(3, 2))
    w = Parameter(rng.normal(size=(2, 4)))
    ops.sum_all(ops.matmul(Tensor(a), w)).backward()
    np.testing.assert_allclose(w.grad, a.T @ np.ones((3, 4)), rtol=0, atol=1e-12)


def test_backward_requires_scalar():
    w = Parameter(np.ones((2, 2)))
    with pytest.raises(ShapeError):
        ops.mul(w, 2.0).backward()


@pytest.mark.parametrize("case", gradient_cases(), ids=lambda c: c[0])
def test_layer_gradient_matches_finite_differences(case):
    _, build, tensors = case
    assert check_op_gradients(build, tensors, h=1e-5) < TOL


def test_gradients_accumulate_across_shared_uses():
    w = Parameter(np.array([[2.0]]))
    ops.sum_all(ops.add(ops.mul(w, w), w)).backward()
    assert w.grad[0, 0] == pytest.approx(2 * 2.0 + 1)


# --------------------------------------------------------------------------
# Adam
# --------------------------------------------------------------------------


def test_adam_first_step_closed_form():
    g = np.array([0.3, -2.0, 1e-3])
    p = Parameter(np.zeros(3))
    opt = Adam([p], lr=0.01)
    p.grad = g.copy()
    opt.step()
    # first step: m_hat = g, v_hat = g^2  ->  update = -lr * g / (|g| + eps)
    np.testing.assert_allclose(p.data, -0.01 * g / (np.abs(g) + 1e-8), rtol=0, atol=1e-15)


def test_adam_zero_grad_leaves_parameters():
    p = Parameter(np.array([1.0, -2.0]))
    opt = Adam([p], lr=0.1)
    p.grad = np.zeros(2)
    opt.step()
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_adam_two_steps_hand_recursion():
    lr, b1, b2, eps = 0.05, 0.9, 0.999, 1e-8
    g = np.array([0.7, -0.2])
    p = Parameter(np.array([0.5, 0.5]))
    opt = Adam([p], lr=lr)
    theta, m, v = p.data.copy(), np.zeros(2), np.zeros(2)
    for t in (1, 2):
        p.grad = g.copy()
        opt.step()
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta = theta - lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
    np.testing.assert_allclose(p.data, theta, rtol=0, atol=1e-12)


def test_adam_matches_torch():
    torch = pytest.importorskip("torch")
    rng = np.random.default_rng(12)
    start = rng.normal(size=(3, 4))
    grads = rng.normal(size=(5, 3, 4))
    p = Parameter(start.copy())
    opt = Adam([p], lr=0.01)
    tp = torch.tensor(start.copy(), requires_grad=True)
    topt = torch.optim.Adam([tp], lr=0.01, betas=(0.9, 0.999), eps=1e-8)
    for g in grads:
        p.grad = g.copy()
        opt.step()
        tp.grad = torch.tensor(g.copy())
        topt.step()
    np.testing.assert_allclose(p.data, tp.detach().numpy(), rtol=0, atol=1e-12)


# --------------------------------------------------------------------------
# kernel backends
# --------------------------------------------------------------------------


@pytest.fixture
def both_backends():
    if not kernels.HAVE_NUMBA:
        pytest.skip("numba not installed")
    previous = kernels.get_backend()
    yield
    kernels.set_backend(previous)


def _run_kernels(backend, rng_seed=13):
    kernels.set_backend(backend)
    rng = np.random.default_rng(rng_seed)
    s = SparseMatrix.from_dense(rng.normal(size=(20, 15)) * (rng.random((20, 15)) < 0.3))
    x = rng.normal(size=(15, 6))
    x1 = rng.normal(size=(3, 4, 19))
    x2 = rng.normal(size=(2, 3, 10, 8))
    out = {"csr": kernels.csr_matmul(s.indptr, s.indices, s.data, x)}
    cols1 = kernels.im2col1d(x1, 5, 2)
    out["im2col1d"] = cols1
    out["col2im1d"] = kernels.col2im1d(cols1, 4, 19, 5, 2)
    cols2 = kernels.im2col2d(x2, 3, 3, 1)
    out["im2col2d"] = cols2
    out["col2im2d"] = kernels.col2im2d(cols2, 3, 10, 8, 3, 3, 1)
    for k, st in ((2, 2), (3, 3), (3, 2)):
        y, idx = kernels.maxpool1d(x1, k, st)
        out[f"mp1_{k}{st}"] = y
        out[f"mp1b_{k}{st}"] = kernels.maxpool1d_backward(np.ones_like(y), idx, 19, k, st)
    y, idx = kernels.maxpool2d(x2, 2, 2)
    out["mp2"] = y
    out["mp2b"] = kernels.maxpool2d_backward(np.ones_like(y), idx, 10, 8, 2, 2)
    return out


def test_numba_and_numpy_kernels_agree(both_backends):
    fast, slow = _run_kernels("numba"), _run_kernels("numpy")
    for key in fast:
        np.testing.assert_allclose(fast[key], slow[key], rtol=0, atol=1e-12, err_msg=key)


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        kernels.set_backend("cuda")


# --------------------------------------------------------------------------
# checkpoints
# --------------------------------------------------------------------------


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(14)
    tensors = {"model.w": rng.normal(size=(3, 4)).astype(np.float32), "b": np.arange(5, dtype=np.float32),
               "scalarish": np.ones((1,), dtype=np.float32)}
    path = tmp_path / "x.ckpt"
    save_tensors(path, tensors, {"classes": ["a", "b"]})
    loaded, meta = load_tensors(path)
    assert list(loaded) == list(tensors)
    for k in tensors:
        np.testing.assert_array_equal(loaded[k], tensors[k])
    assert meta == {"classes": ["a", "b"]}


def test_checkpoint_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError):
        load_tensors(bad)
    good = tmp_path / "good.ckpt"
    save_tensors(good, {"w": np.ones((4, 4), dtype=np.float32)})
    truncated = tmp_path / "short.ckpt"
    truncated.write_bytes(good.read_bytes()[:-7])
    with pytest.raises(CheckpointError):
        load_tensors(truncated)


def test_environment_variable_selects_numpy_backend():
    env = dict(os.environ, MRGCN_DISABLE_NUMBA="1")
    code = "from mrgcn.autodiff import kernels; print(kernels.get_backend())"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
