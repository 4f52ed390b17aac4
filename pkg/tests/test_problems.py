import gzip
import struct

import numpy as np
import pytest

from ssamlab.numerics import derive_stream
from ssamlab.problems import (Dataset, LinearAutoencoderProblem, MlpProblem,
                              QuadraticProblem, Toy2DProblem,
                              dataset_perturb_one, lae_loss_grad, lae_make,
                              load_idx, quadratic_make, synth_classification,
                              toy2d_loss_grad)


def fd_grad(loss_fn, w, h=1e-5):
    """Independent central-difference oracle used against analytic gradients."""
    g = np.zeros_like(w)
    for i in range(w.size):
        e = np.zeros_like(w)
        e[i] = h
        g[i] = (loss_fn(w + e) - loss_fn(w - e)) / (2 * h)
    return g


def rel_err(analytic, fd):
    return np.max(np.abs(analytic - fd)) / max(np.max(np.abs(fd)), 1e-8)


# --- quadratic ---------------------------------------------------------------

def test_quadratic_eigenvalue_floor():
    p = quadratic_make(20, 0.01, seed=1)
    assert p.eigenvalues()[0] >= 0.01 - 1e-12


def test_quadratic_zero_a_degenerates_to_delta_identity():
    p = quadratic_make(2, 0.05, seed=1, a_std=0.0)
    assert np.allclose(p.hessian, 0.05 * np.eye(2))
    x = np.array([3.0, -4.0])
    loss, _ = p.loss_grad(x)
    assert abs(loss - 0.05 * 25 / 2) < 1e-15


def test_quadratic_largest_eig_matches_dense_oracle():
    p = quadratic_make(20, 0.01, seed=1)
    # power-iteration oracle, independent of eigvalsh
    v = derive_stream(3, 0).normal(20)
    for _ in range(5000):
        v = p.hessian @ v
        v /= np.linalg.norm(v)
    lam_pi = float(v @ p.hessian @ v)
    assert abs(lam_pi - p.eigenvalues()[-1]) / lam_pi < 0.05


def test_quadratic_rejects_nonpositive_delta():
    with pytest.raises(ValueError):
        quadratic_make(5, 0.0, seed=1)


def test_quadratic_strong_convexity_floor():
    p = quadratic_make(10, 0.01, seed=2)
    rng = derive_stream(4, 0)
    for _ in range(200):
        x = rng.normal(10)
        loss, _ = p.loss_grad(x)
        assert loss >= 0.5 * 0.01 * np.dot(x, x) - 1e-12


# --- 2-D toy landscape --------------------------------------------------------

def test_toy2d_stationary_points():
    loss, grad = toy2d_loss_grad([0.0, 0.0])
    assert loss == 0.0 and np.all(grad == 0.0)
    loss, grad = toy2d_loss_grad([1.0, 1.0])
    assert abs(loss + 0.25) < 1e-15 and np.allclose(grad, 0.0)
    loss, grad = toy2d_loss_grad([-1.0, -1.0])
    assert abs(loss + 0.25) < 1e-15 and np.allclose(grad, 0.0)


def test_toy2d_closed_form_point():
    loss, grad = toy2d_loss_grad([2.0, 0.0])
    assert loss == 4.0
    assert np.allclose(grad, [8.0, -2.0])


def test_toy2d_odd_symmetry():
    p = Toy2DProblem()
    rng = derive_stream(5, 0)
    X = 4 * rng.uniform((1000, 2)) - 2
    lp, gp = p.loss_grad_batch(X)
    lm, gm = p.loss_grad_batch(-X)
    assert np.allclose(lp, lm, atol=1e-12)
    assert np.allclose(gp, -gm, atol=1e-12)


# --- linear autoencoder --------------------------------------------------------

def test_lae_initial_loss_near_half_dim():
    p = lae_make(20, 0.01, seed=3)
    loss, _ = lae_loss_grad(p)
    assert abs(loss - 10.0) / 10.0 < 0.01


def test_lae_exact_factorization_is_minimum():
    p = LinearAutoencoderProblem(1, np.array([[1.0]]), np.array([[1.0]]))
    loss, grad = lae_loss_grad(p)
    assert loss == 0.0 and np.all(grad == 0.0)


def test_lae_origin_is_stationary():
    p = LinearAutoencoderProblem(2, np.zeros((2, 2)), np.zeros((2, 2)))
    _, grad = lae_loss_grad(p)
    assert np.all(grad == 0.0)


def test_lae_identity_product_zero_grad():
    W1 = derive_stream(6, 0).normal((3, 3))
    p = LinearAutoencoderProblem(3, W1, np.linalg.inv(W1))
    loss, grad = lae_loss_grad(p)
    assert loss < 1e-25
    assert np.max(np.abs(grad)) < 1e-12


# --- finite-difference gradient checks ----------------------------------------

def test_quadratic_grad_matches_fd():
    p = quadratic_make(8, 0.01, seed=7)
    rng = derive_stream(8, 0)
    for _ in range(20):
        w = rng.normal(8)
        _, g = p.loss_grad(w)
        assert rel_err(g, fd_grad(lambda x: p.loss_grad(x)[0], w)) < 1e-5


def test_lae_grad_matches_fd():
    rng = derive_stream(9, 0)
    p = lae_make(3, 0.3, seed=9)
    for _ in range(20):
        w = rng.normal(p.dim)
        _, g = p.loss_grad(w)
        assert rel_err(g, fd_grad(lambda x: p.loss_grad(x)[0], w)) < 1e-6


def test_mlp_grad_matches_fd():
    m = MlpProblem([4, 8, 3])
    rng = derive_stream(10, 0)
    X = rng.normal((5, 4))
    y = np.array([0, 2, 1, 0, 2])
    for _ in range(10):
        w = rng.normal(m.dim) * 0.5
        _, g = m.loss_grad(w, X, y)
        assert rel_err(g, fd_grad(lambda v: m.loss_grad(v, X, y)[0], w)) < 1e-5


# --- MLP ------------------------------------------------------------------------

def test_mlp_zero_weights_balanced_two_class_gives_ln2():
    m = MlpProblem([3, 5, 2])
    X = derive_stream(11, 0).normal((8, 3))
    y = np.array([0, 1] * 4)
    loss, _ = m.loss_grad(np.zeros(m.dim), X, y)
    assert abs(loss - np.log(2)) < 1e-9


def test_mlp_duplicated_batch_invariance():
    m = MlpProblem([4, 6, 3])
    rng = derive_stream(12, 0)
    w = rng.normal(m.dim) * 0.3
    X = rng.normal((5, 4))
    y = np.array([0, 1, 2, 1, 0])
    l1, g1 = m.loss_grad(w, X, y)
    l2, g2 = m.loss_grad(w, np.tile(X, (2, 1)), np.tile(y, 2))
    assert abs(l1 - l2) < 1e-12
    assert np.allclose(g1, g2, atol=1e-12)


def test_mlp_batch_permutation_invariance():
    m = MlpProblem([4, 6, 3])
    rng = derive_stream(13, 0)
    w = rng.normal(m.dim) * 0.3
    X = rng.normal((16, 4))
    y = rng.integers(0, 3, 16)
    perm = rng.permutation(16)
    l1, _ = m.loss_grad(w, X, y)
    l2, _ = m.loss_grad(w, X[perm], y[perm])
    assert abs(l1 - l2) < 1e-12


def test_mlp_softmax_rows_sum_to_one():
    m = MlpProblem([4, 6, 3])
    rng = derive_stream(14, 0)
    probs = m.forward(rng.normal(m.dim), rng.normal((32, 4)))
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)


def test_mlp_param_count():
    m = MlpProblem([784, 64, 64, 10])
    assert m.dim == 784 * 64 + 64 + 64 * 64 + 64 + 64 * 10 + 10


def test_mlp_rejects_wrong_feature_width_and_empty_batch():
    m = MlpProblem([4, 6, 3])
    w = np.zeros(m.dim)
    with pytest.raises(ValueError):
        m.loss_grad(w, np.zeros((3, 5)), np.zeros(3, dtype=int))
    with pytest.raises(ValueError):
        m.loss_grad(w, np.zeros((0, 4)), np.zeros(0, dtype=int))


# --- datasets --------------------------------------------------------------------

def test_synth_balanced_split():
    d = synth_classification(100, 2, 2, seed=1)
    assert np.sum(d.labels == 0) == 50 and np.sum(d.labels == 1) == 50


def test_synth_labels_in_range():
    d = synth_classification(10, 5, 2, seed=2)
    assert set(np.unique(d.labels)) <= {0, 1}


def test_synth_centers_unit_separated():
    d = synth_classification(4000, 3, 3, seed=3, cluster_std=0.05)
    centers = np.stack([d.features[d.labels == k].mean(axis=0) for k in range(3)])
    for i in range(3):
        for j in range(i + 1, 3):
            assert abs(np.linalg.norm(centers[i] - centers[j]) - 1.0) < 0.02


def test_synth_is_learnable_by_one_hidden_layer():
    d = synth_classification(1000, 2, 2, seed=4)
    m = MlpProblem([2, 16, 2])
    w = m.init_params(derive_stream(15, 0))
    shuffle = derive_stream(16, 0)
    for _ in range(60):
        order = shuffle.permutation(d.n)
        for lo in range(0, d.n, 32):
            idx = order[lo: lo + 32]
            _, g = m.loss_grad(w, d.features[idx], d.labels[idx])
            w = w - 0.5 * g
    assert m.accuracy(w, d.features, d.labels) >= 0.95


def test_perturb_one_differs_in_exactly_one_position():
    d = synth_classification(100, 3, 2, seed=5)
    S, Sp, removed, replaced = dataset_perturb_one(d, seed=6)
    assert S.n == Sp.n == 99
    diff = np.any(S.features != Sp.features, axis=1) | (S.labels != Sp.labels)
    assert diff.sum() == 1 and diff[replaced]
    assert np.allclose(Sp.features[replaced], d.features[removed])


def test_perturb_one_deterministic():
    d = synth_classification(50, 3, 2, seed=7)
    a = dataset_perturb_one(d, seed=8)
    b = dataset_perturb_one(d, seed=8)
    assert a[2] == b[2] and a[3] == b[3]
    assert np.array_equal(a[0].features, b[0].features)
    assert np.array_equal(a[1].features, b[1].features)


def test_perturb_one_always_single_difference_many_seeds():
    d = synth_classification(40, 3, 2, seed=9)
    for s in range(1000):
        S, Sp, _, _ = dataset_perturb_one(d, seed=s)
        diff = np.any(S.features != Sp.features, axis=1) | (S.labels != Sp.labels)
        assert diff.sum() == 1


def test_perturb_one_rejects_tiny_dataset():
    d = Dataset(np.zeros((1, 2)), np.zeros(1, dtype=int), 2)
    with pytest.raises(ValueError):
        dataset_perturb_one(d, seed=0)


# --- IDX ingestion ----------------------------------------------------------------

def _idx_bytes(dims, payload, dtype_code=0x08):
    head = struct.pack(">BBBB", 0, 0, dtype_code, len(dims))
    head += struct.pack(f">{len(dims)}I", *dims)
    return head + payload


def test_idx_image_roundtrip(tmp_path):
    pixels = bytes(range(8))
    path = tmp_path / "img.idx"
    path.write_bytes(_idx_bytes((2, 2, 2), pixels))
    arr = load_idx(path)
    assert arr.shape == (2, 2, 2)
    assert np.allclose(arr.ravel() * 255.0, np.arange(8))


def test_idx_labels_rank_one(tmp_path):
    path = tmp_path / "lab.idx"
    path.write_bytes(_idx_bytes((4,), bytes([0, 1, 2, 1])))
    arr = load_idx(path)
    assert arr.dtype == np.int64
    assert arr.tolist() == [0, 1, 2, 1]


def test_idx_gzip_supported(tmp_path):
    path = tmp_path / "lab.idx.gz"
    path.write_bytes(gzip.compress(_idx_bytes((3,), bytes([1, 0, 1]))))
    assert load_idx(path).tolist() == [1, 0, 1]


def test_idx_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.idx"
    path.write_bytes(_idx_bytes((3,), bytes(3), dtype_code=0x0D))
    with pytest.raises(ValueError, match="magic"):
        load_idx(path)


def test_idx_truncated_payload_rejected(tmp_path):
    path = tmp_path / "short.idx"
    path.write_bytes(_idx_bytes((4,), bytes(2)))
    with pytest.raises(ValueError, match="length"):
        load_idx(path)
