import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import central_difference_gradient
from sdlshrink.dictlearn import (
    LearnConfig,
    LearnState,
    accumulate,
    init_dct_dictionary,
    learn_from_patches,
    learn_online,
    load_dictionary,
    render_dictionary_mosaic,
    save_dictionary,
    surrogate_gradient,
    surrogate_objective,
    update_dictionary,
)
from sdlshrink.errors import ArgumentError, DegenerateError, FormatError, LengthError
from sdlshrink.solvers import SolverConfig


def random_state(rng, m, n, k=20, sparsity=0.3):
    state = LearnState.zeros(m, n)
    for _ in range(k):
        x = rng.standard_normal(n) * (rng.random(n) < sparsity)
        state = accumulate(state, x, rng.standard_normal(m))
    return state


def test_dct_shape_and_norms():
    D = init_dct_dictionary(36, 256)
    assert D.shape == (36, 256)
    np.testing.assert_allclose(np.linalg.norm(D, axis=0), 1.0, atol=1e-14)
    np.testing.assert_allclose(D[:, 0], 1 / 6, atol=1e-15)


def test_complete_dct_is_orthonormal():
    D = init_dct_dictionary(4, 4)
    np.testing.assert_allclose(D.T @ D, np.eye(4), atol=1e-14)
    D = init_dct_dictionary(36, 36)
    np.testing.assert_allclose(D.T @ D, np.eye(36), atol=1e-13)


@pytest.mark.parametrize("m,n", [(35, 256), (36, 250), (36, 25), (0, 4)])
def test_dct_rejects_bad_sizes(m, n):
    with pytest.raises(ArgumentError):
        init_dct_dictionary(m, n)


def test_accumulate_examples():
    q = np.array([1.0, -2.0, 3.0])
    s = accumulate(LearnState.zeros(3, 4), np.eye(4)[0], q)
    np.testing.assert_array_equal(s.A, np.outer(np.eye(4)[0], np.eye(4)[0]))
    np.testing.assert_array_equal(s.B[:, 0], q)
    np.testing.assert_array_equal(s.B[:, 1:], 0.0)
    s2 = accumulate(s, np.zeros(4), q)
    np.testing.assert_array_equal(s2.A, s.A)
    np.testing.assert_array_equal(s2.B, s.B)
    assert (s.k, s2.k) == (1, 2)
    with pytest.raises(ArgumentError):
        accumulate(s, np.zeros(3), q)


def test_accumulate_is_pure():
    s = LearnState.zeros(2, 3)
    accumulate(s, np.ones(3), np.ones(2))
    assert s.k == 0 and not s.A.any()


@settings(max_examples=20)
@given(st.integers(0, 10**6))
def test_state_invariants(seed):
    rng = np.random.default_rng(seed)
    s = random_state(rng, 5, 8)
    np.testing.assert_allclose(s.A, s.A.T, atol=1e-12)
    assert np.linalg.eigvalsh(s.A).min() >= -1e-10


def test_trace_identity_on_accumulations():
    rng = np.random.default_rng(0)
    D = rng.standard_normal((5, 9))
    s = LearnState.zeros(5, 9)
    direct = 0.0
    for _ in range(5):
        x = rng.standard_normal(9)
        s = accumulate(s, x, rng.standard_normal(5))
        direct += x @ D.T @ D @ x
    assert np.trace(D.T @ D @ s.A) == pytest.approx(direct, rel=1e-10)


def test_update_single_atom_example():
    state = LearnState(np.array([[2.0]]), np.array([[2.0], [0.0]]), 1)
    D = update_dictionary(np.array([[0.0], [1.0]]), state)
    np.testing.assert_allclose(D, [[1.0], [0.0]], atol=1e-15)


def test_update_zero_state_is_identity():
    D = init_dct_dictionary(4, 9)
    np.testing.assert_array_equal(update_dictionary(D, LearnState.zeros(4, 9)), D)


def test_update_inside_ball_not_renormalised():
    # u = B / A = 0.25 e1 has norm < 1
    state = LearnState(np.array([[4.0]]), np.array([[1.0], [0.0]]), 1)
    D = update_dictionary(np.array([[0.0], [1.0]]), state)
    np.testing.assert_allclose(D, [[0.25], [0.0]])


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10**6))
def test_update_monotone_and_feasible(seed):
    rng = np.random.default_rng(seed)
    m, n = 6, 12
    state = random_state(rng, m, n)
    D = rng.standard_normal((m, n))
    D /= np.linalg.norm(D, axis=0)
    prev = surrogate_objective(D, state)
    for _ in range(5):
        D = update_dictionary(D, state)
        cur = surrogate_objective(D, state)
        assert cur <= prev + 1e-12 * abs(prev)
        prev = cur
    assert np.all(np.linalg.norm(D, axis=0) <= 1 + 1e-12)


def test_unused_atoms_bit_unchanged():
    rng = np.random.default_rng(3)
    state = random_state(rng, 4, 6)
    state.A[2, :] = state.A[:, 2] = 0.0
    state.B[:, 2] = 0.0
    D0 = rng.standard_normal((4, 6))
    D = update_dictionary(D0, state, sweeps=3)
    assert D[:, 2].tobytes() == D0[:, 2].tobytes()


def test_surrogate_examples():
    rng = np.random.default_rng(1)
    with pytest.raises(DegenerateError):
        surrogate_objective(np.eye(3), LearnState.zeros(3, 3))
    s = random_state(rng, 3, 4)
    assert surrogate_objective(np.zeros((3, 4)), s) == 0.0
    x, p = rng.standard_normal(3), rng.standard_normal(3)
    D = np.eye(3) + 0.1 * rng.standard_normal((3, 3))
    one = accumulate(LearnState.zeros(3, 3), x, p)
    assert surrogate_objective(D, one) == pytest.approx(0.5 * x @ D.T @ D @ x - x @ D.T @ p, rel=1e-12)


def test_surrogate_gradient_examples():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((4, 4))
    A = A @ A.T + np.eye(4)
    B = rng.standard_normal((3, 4))
    s = LearnState(A, B, 1)
    np.testing.assert_allclose(surrogate_gradient(B @ np.linalg.inv(A), s), 0.0, atol=1e-12)
    D = rng.standard_normal((3, 4))
    np.testing.assert_allclose(surrogate_gradient(D, LearnState(np.eye(4), B, 1)), D - B)
    with pytest.raises(ArgumentError):
        surrogate_gradient(np.zeros((3, 5)), s)


@pytest.mark.parametrize("seed", range(5))
def test_surrogate_gradient_finite_differences(seed):
    rng = np.random.default_rng(seed)
    s = random_state(rng, 4, 6, k=7)
    D = rng.standard_normal((4, 6))
    fd = central_difference_gradient(lambda Z: s.k * surrogate_objective(Z, s), D)
    G = surrogate_gradient(D, s)
    assert np.linalg.norm(G - fd) <= 1e-6 * np.linalg.norm(G)


def test_learn_zero_images_returns_d0():
    D0 = init_dct_dictionary(4, 9)
    res = learn_online([], LearnConfig(), D0)
    assert len(res.snapshots) == 1
    np.testing.assert_array_equal(res.final, D0)


def test_learn_counts_paper_geometry_with_zero_images():
    D0 = init_dct_dictionary(36, 256)
    res = learn_online([np.zeros((112, 112))] * 12, LearnConfig(), D0)
    assert res.patches_per_image == [1296] * 12
    assert res.state.k == 15552
    assert len(res.snapshots) == 13
    assert res.labels[-1] == "D12"
    # zero patches give zero codes, so nothing moves
    for D in res.snapshots:
        np.testing.assert_array_equal(D, D0)


def test_learning_moves_dictionary_and_keeps_norms():
    rng = np.random.default_rng(0)
    img = rng.uniform(0, 255, (12, 12))
    D0 = init_dct_dictionary(16, 25)
    res = learn_online([img, img[::-1]], LearnConfig(mu=1.0, solver=SolverConfig("FISTA", max_iter=300)), D0)
    assert len(res.snapshots) == 3
    assert not np.array_equal(res.final, D0)
    assert np.all(np.linalg.norm(res.final, axis=0) <= 1 + 1e-12)


def test_random_order_is_seeded():
    rng = np.random.default_rng(1)
    P = rng.standard_normal((4, 30))
    D0 = init_dct_dictionary(4, 9)
    cfg = LearnConfig(mu=0.1, draw_order="random", seed=5, solver=SolverConfig("ISTA", max_iter=200))
    a = learn_from_patches([P], cfg, D0).final
    b = learn_from_patches([P], cfg, D0).final
    c = learn_from_patches([P], LearnConfig(mu=0.1, seed=5, solver=SolverConfig("ISTA", max_iter=200)), D0).final
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, c)


def test_failed_patch_is_skipped_and_logged(caplog):
    P = np.array([[1.0, np.inf, 2.0], [0.5, 1.0, 1.0]])
    D0 = np.eye(2)
    with caplog.at_level(logging.WARNING, logger="sdlshrink.dictlearn"):
        res = learn_from_patches([P], LearnConfig(mu=0.1), D0)
    assert [s[1] for s in res.skipped] == [1]
    assert res.state.k == 2
    assert "skipped" in caplog.text


def test_learn_config_validation():
    with pytest.raises(ArgumentError):
        LearnConfig(mu=0.0)
    with pytest.raises(ArgumentError):
        LearnConfig(draw_order="shuffled")


def test_undercomplete_warns():
    with pytest.warns(UserWarning):
        learn_from_patches([], LearnConfig(), np.ones((4, 2)))


@settings(max_examples=25)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 10**6))
def test_sdic_roundtrip_bit_exact(m, n, seed):
    D = np.random.default_rng(seed).standard_normal((m, n))
    D[0, 0] = -0.0
    out = load_dictionary(save_dictionary(D))
    assert out.shape == D.shape and out.tobytes() == D.tobytes()


def test_sdic_layout():
    data = save_dictionary(np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert data[:4] == b"SDIC"
    assert np.frombuffer(data[16:], "<f8").tolist() == [1.0, 3.0, 2.0, 4.0]


def test_sdic_errors():
    good = save_dictionary(np.ones((3, 2)))
    with pytest.raises(LengthError):
        load_dictionary(good[:-1])
    with pytest.raises(LengthError):
        load_dictionary(good[:10])
    with pytest.raises(FormatError):
        load_dictionary(b"XDIC" + good[4:])
    with pytest.raises(FormatError):
        load_dictionary(good[:4] + (2).to_bytes(4, "little") + good[8:])
    with pytest.raises(FormatError):
        load_dictionary(good[:8] + (1 << 20).to_bytes(4, "little") * 2)


def test_mosaic_layout():
    out = render_dictionary_mosaic(init_dct_dictionary(36, 256))
    assert out.shape == (16 * 7 + 1, 16 * 7 + 1)
    # constant atom is mid gray
    np.testing.assert_array_equal(out[1:7, 1:7], 127.5)
    assert out.min() >= 0 and out.max() <= 255
    single = render_dictionary_mosaic(np.arange(4.0)[:, None])
    assert single.shape == (4, 4)
    np.testing.assert_array_equal(single[1:3, 1:3], [[0, 85], [170, 255]])
    assert render_dictionary_mosaic(init_dct_dictionary(4, 4)).shape == (7, 7)
    with pytest.raises(ArgumentError):
        render_dictionary_mosaic(np.ones((5, 3)))
