import numpy as np
import pytest

from hwstcl import autodiff as ad
from hwstcl.autodiff import Tensor
from hwstcl.connectivity import WindowGraph
from hwstcl.encoders import EncoderStack, GinLayer, gin_forward, lift, stgin_forward
from hwstcl.gradcheck import check_gradients
from hwstcl.spectral import NodeFeatureMatrix
from hwstcl.stgraph import HawkesKernel, assemble


def sym(rng, N, density=0.6):
    A = np.triu(rng.uniform(0.2, 1, size=(N, N)) * (rng.random((N, N)) < density), 1)
    return A + A.T


def generic(module, rng):
    """Move zero-initialised biases off the ReLU kink so finite differences are valid."""
    for name, p in module.parameters().items():
        if name.endswith(("b1", "b2")):
            p.data = rng.uniform(-0.5, 0.5, size=p.shape)
    return module


def window_graphs(rng, T, N, d, same=False):
    A0, X0 = sym(rng, N), rng.uniform(-1, 1, size=(N, d))
    out = []
    for t in range(T):
        A, X = (A0, X0) if same else (sym(rng, N), rng.uniform(-1, 1, size=(N, d)))
        out.append(WindowGraph(NodeFeatureMatrix(X, np.arange(1, d + 1) / 56.0), A, t + 1))
    return out


def test_gin_identity_without_neighbours(rng):
    layer = GinLayer(3, 3, rng)
    layer.bypass_mlp = True
    H = rng.standard_normal((4, 3))
    assert np.array_equal(gin_forward(layer, np.zeros((4, 4)), H).data, H)


def test_gin_two_node_aggregation(rng):
    layer = GinLayer(2, 2, rng)
    layer.bypass_mlp = True
    a = 0.37
    H = np.array([[1.0, 2.0], [-3.0, 0.5]])
    out = gin_forward(layer, np.array([[0.0, a], [a, 0.0]]), H).data
    assert np.allclose(out[0], H[0] + a * H[1], rtol=0, atol=1e-15)


def test_gin_applies_mlp(rng):
    layer = GinLayer(2, 3, rng)
    H = rng.standard_normal((3, 2))
    A = sym(rng, 3)
    pre = (1.0 + layer.eps.data) * H + A @ H
    m = layer.mlp
    expect = np.maximum(pre @ m.w1.data + m.b1.data, 0) @ m.w2.data + m.b2.data
    assert np.max(np.abs(gin_forward(layer, A, H).data - expect)) < 1e-12
    with pytest.raises(ValueError):
        gin_forward(layer, np.zeros((2, 2)), H)


def test_gin_gradients(rng):
    for _ in range(5):
        layer = generic(GinLayer(3, 4, rng), rng)
        layer.eps.data = np.array(rng.uniform(-0.5, 0.5))
        A = Tensor(sym(rng, 5), requires_grad=True)
        H = Tensor(rng.uniform(-1, 1, size=(5, 3)), requires_grad=True)
        f = lambda: ad.sum(ad.square(gin_forward(layer, A, H)))  # noqa: E731
        params = [layer.eps, H, A] + list(layer.parameters().values())
        assert check_gradients(f, params) < 1e-5


def test_parameter_names(rng):
    stack = EncoderStack(5, 8, rng)
    names = set(stack.parameters())
    assert {"spatial.0.mlp.w1", "spatial.1.eps", "stgin.2.mlp.b2"} <= names
    assert len(stack.spatial) == 2 and len(stack.stgin) == 3


def test_lift_identical_windows_identical_slices(rng):
    stack = EncoderStack(4, 6, rng)
    H = lift(stack, window_graphs(rng, 3, 5, 4, same=True)).data
    assert H.shape == (3, 5, 6)
    assert np.array_equal(H[0], H[1]) and np.array_equal(H[1], H[2])


def test_lift_single_window_is_two_gin_passes(rng):
    stack = EncoderStack(4, 6, rng)
    g = window_graphs(rng, 1, 5, 4)
    H = lift(stack, g).data[0]
    ref = g[0].X_t.X
    for layer in stack.spatial:
        ref = gin_forward(layer, g[0].A_t, ref).data
    assert np.max(np.abs(H - ref)) < 1e-12


def _permuted(graphs, perm):
    return [WindowGraph(NodeFeatureMatrix(g.X_t.X[perm], g.X_t.bin_freqs_hz),
                        g.A_t[np.ix_(perm, perm)], g.window_index) for g in graphs]


def test_lift_permutation_equivariance(rng):
    stack = EncoderStack(3, 5, rng)
    graphs = window_graphs(rng, 2, 6, 3)
    perm = rng.permutation(6)
    H = lift(stack, graphs).data
    Hp = lift(stack, _permuted(graphs, perm)).data
    assert np.max(np.abs(Hp - H[:, perm])) < 1e-10


def test_joint_permutation_equivariance(rng):
    stack = EncoderStack(3, 5, rng)
    k = HawkesKernel(2, 0.9, 0.3)
    graphs = window_graphs(rng, 4, 6, 3)
    perm = rng.permutation(6)
    gp = _permuted(graphs, perm)
    Z = stgin_forward(stack, lift(stack, graphs), assemble(graphs, k)).data
    Zp = stgin_forward(stack, lift(stack, gp), assemble(gp, k)).data
    assert np.max(np.abs(Zp - Z[:, perm])) < 1e-10


def test_alpha_zero_decouples(rng):
    stack = EncoderStack(3, 5, rng)
    graphs = window_graphs(rng, 4, 5, 3)
    H = lift(stack, graphs)
    joint = stgin_forward(stack, H, assemble(graphs, HawkesKernel(3, alpha=0.0))).data
    for t, g in enumerate(graphs):
        Zt = H.data[t]
        for layer in stack.stgin:
            Zt = gin_forward(layer, g.A_t, Zt).data
        assert np.max(np.abs(joint[t] - Zt)) < 1e-12


def test_zero_features_give_bias_path(rng):
    stack = EncoderStack(3, 4, rng)
    graphs = window_graphs(rng, 2, 3, 3)
    op = assemble(graphs, HawkesKernel())
    layer = stack.stgin[0]
    out = layer(Tensor(np.zeros((6, 4))), op.apply).data
    m = layer.mlp
    expect = np.maximum(m.b1.data, 0) @ m.w2.data + m.b2.data
    assert np.max(np.abs(out - expect)) < 1e-15


def test_causal_locality(rng):
    stack = EncoderStack(3, 4, rng)
    graphs = window_graphs(rng, 8, 4, 3)
    k = HawkesKernel(1)
    Z = stgin_forward(stack, lift(stack, graphs), assemble(graphs, k)).data
    bumped = list(graphs)
    last = graphs[-1]
    bumped[-1] = WindowGraph(NodeFeatureMatrix(last.X_t.X + 5.0, last.X_t.bin_freqs_hz),
                             last.A_t, last.window_index)
    Zb = stgin_forward(stack, lift(stack, bumped), assemble(bumped, k)).data
    assert np.array_equal(Z[0], Zb[0])
    assert not np.array_equal(Z[-1], Zb[-1])


def test_end_to_end_gradients_including_kernel(rng):
    for _ in range(5):
        stack = generic(EncoderStack(3, 4, rng), rng)
        k = HawkesKernel(2, rng.uniform(0.5, 1.5), rng.uniform(0.2, 1.0))
        graphs = window_graphs(rng, 3, 4, 3)
        op = assemble(graphs, k)
        X = Tensor(np.concatenate([g.X_t.X for g in graphs]))
        f = lambda: ad.sum(ad.square(stack(X, op)))  # noqa: E731
        params = list(stack.parameters().values()) + [k.a_raw, k.b_raw]
        assert check_gradients(f, params) < 1e-4


def test_determinism():
    def run():
        rng = np.random.default_rng(9)
        stack = EncoderStack(3, 4, rng)
        graphs = window_graphs(rng, 3, 4, 3)
        return stgin_forward(stack, lift(stack, graphs), assemble(graphs, HawkesKernel())).data
    assert np.array_equal(run(), run())


def test_stgin_dimension_mismatch(rng):
    stack = EncoderStack(3, 4, rng)
    graphs = window_graphs(rng, 3, 4, 3)
    with pytest.raises(ValueError):
        stgin_forward(stack, Tensor(np.zeros((2, 4, 4))), assemble(graphs, HawkesKernel()))
