import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hwstcl import autodiff as ad
from hwstcl.autodiff import Tensor
from hwstcl.gradcheck import check_gradients
from hwstcl.hwcl import HwclConfig, hwcl, lag_similarities
from hwstcl.stgraph import HawkesKernel, kernel_weights

from oracles import hwcl_loop


def unit_rows(x):
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def test_lag_similarities_constant_in_time(rng):
    base = unit_rows(rng.standard_normal((3, 5)))
    Zn = np.stack([base] * 4)
    for S in lag_similarities(Zn, 2):
        assert np.allclose(S, base @ base.T, atol=1e-15)
        assert np.allclose(np.diag(S), 1.0, atol=1e-15)


def test_lag_similarities_orthonormal():
    Zn = np.stack([np.eye(3, 6)] * 4)
    assert all(np.array_equal(S, np.eye(3)) for S in lag_similarities(Zn, 1))


def test_lag_similarities_vs_loops(rng):
    Zn = unit_rows(rng.standard_normal((4, 3, 8)))
    for d in (1, 2, 3):
        sims = lag_similarities(Zn, d)
        assert len(sims) == 4 - d
        for t, S in enumerate(sims):
            for n in range(3):
                for m in range(3):
                    ref = sum(Zn[t, n, c] * Zn[t + d, m, c] for c in range(8))
                    assert abs(S[n, m] - ref) < 1e-12
    with pytest.raises(ValueError):
        lag_similarities(Zn, 4)


def test_perfect_alignment_is_zero():
    Z = Tensor(np.stack([np.eye(4, 6) * 3.0] * 5))
    total, l_pos, l_neg = hwcl(Z, HawkesKernel(3))
    assert total.item() < 1e-12 and l_pos.item() < 1e-12 and l_neg.item() < 1e-12


def test_collapse_gives_lambda_neg():
    Z = Tensor(np.ones((5, 4, 6)))
    total, l_pos, l_neg = hwcl(Z, HawkesKernel(3), HwclConfig(0.2))
    assert abs(l_pos.item()) < 1e-12
    assert abs(l_neg.item() - 1.0) < 1e-12
    assert abs(total.item() - 0.2) < 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_matches_five_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((5, 3, 4))
    k = HawkesKernel(3, rng.uniform(0.2, 2), rng.uniform(0.1, 1))
    got = [t.item() for t in hwcl(Tensor(Z), k, HwclConfig(0.2))]
    ref = hwcl_loop(Z, kernel_weights(k, 5).data, 0.2)
    assert max(abs(a - b) for a, b in zip(got, ref)) < 1e-12


def test_batch_is_mean_over_subjects(rng):
    Z = rng.standard_normal((3, 4, 3, 5))
    k = HawkesKernel(2)
    batch = hwcl(Tensor(Z), k)[0].item()
    single = np.mean([hwcl(Tensor(Z[b]), k)[0].item() for b in range(3)])
    assert abs(batch - single) < 1e-14


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_alpha_invariance(seed):
    rng = np.random.default_rng(seed)
    Z = Tensor(rng.standard_normal((6, 4, 3)))
    a = hwcl(Z, HawkesKernel(3, 0.7, 0.4))[0].item()
    b = hwcl(Z, HawkesKernel(3, 7.0, 0.4))[0].item()
    assert abs(a - b) < 1e-12


def test_alpha_gradient_is_zero(rng):
    k = HawkesKernel(3, 1.3, 0.4)
    Z = Tensor(rng.standard_normal((6, 4, 3)))
    ga, gb = ad.grad(hwcl(Z, k)[0], [k.a_raw, k.b_raw])
    assert abs(ga) < 1e-14 and abs(gb) > 0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_bounds(seed):
    rng = np.random.default_rng(seed)
    _, l_pos, l_neg = hwcl(Tensor(rng.standard_normal((4, 3, 2))), HawkesKernel(3))
    assert 0.0 <= l_pos.item() <= 4.0 and 0.0 <= l_neg.item() <= 1.0


def test_beta_sensitivity():
    # rows rotate steadily over windows, so short lags align better than long ones
    T, N = 6, 3
    theta = 0.3
    Z = np.zeros((T, N, 2 * N))
    for t in range(T):
        for n in range(N):
            Z[t, n, 2 * n] = np.cos(theta * t)
            Z[t, n, 2 * n + 1] = np.sin(theta * t)
    pos = [hwcl(Tensor(Z), HawkesKernel(3, 1.0, b))[1].item() for b in (0.1, 0.5, 1.0, 2.0)]
    assert all(x > y for x, y in zip(pos, pos[1:]))


def test_single_window_returns_zero_with_warning(caplog):
    with caplog.at_level(logging.WARNING):
        total, l_pos, l_neg = hwcl(Tensor(np.ones((1, 3, 2))), HawkesKernel(3))
    assert total.item() == 0.0 and "at least 2 windows" in caplog.text


def test_single_roi_has_no_negatives(rng):
    _, _, l_neg = hwcl(Tensor(rng.standard_normal((4, 1, 3))), HawkesKernel(2))
    assert l_neg.item() == 0.0


def test_gradients_wrt_z_and_kernel(rng):
    for _ in range(5):
        k = HawkesKernel(3, rng.uniform(0.5, 1.5), rng.uniform(0.2, 1.0))
        Z = Tensor(rng.uniform(-1, 1, size=(5, 3, 4)), requires_grad=True)
        f = lambda: hwcl(Z, k, HwclConfig(0.2))[0]  # noqa: E731
        assert check_gradients(f, [Z, k.b_raw]) < 1e-4


def test_config_validation():
    with pytest.raises(ValueError):
        HwclConfig(lambda_neg=-0.1)
