import numpy as np
import pytest
import scipy.sparse as sp

from graphmerge.gnn import (
    GraphLayerParams,
    GraphMergeStack,
    export_table,
    import_table,
    layer_forward,
    load_stack,
    save_stack,
    stack_backward,
    stack_forward,
    weighted_sum,
)
from graphmerge.graph import EquivalenceGraph


def graph_from_dense(rows):
    return EquivalenceGraph(sp.csr_matrix(np.asarray(rows, dtype=np.float64)))


def identity_graph(n):
    return graph_from_dense(np.eye(n))


def en_pivot_toy():
    """4 tokens: 0=en, 1=de, 2=nl, 3=isolated. de and nl both feed from en
    and back; no direct de<->nl edge."""
    return graph_from_dense([
        [0.0, 0.5, 0.5, 0.0],
        [1.0, 0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ])


class TestWeightedSum:
    def test_identity_graph(self):
        x = np.arange(12, dtype=float).reshape(4, 3)
        assert np.array_equal(weighted_sum(identity_graph(4), x), x)

    def test_permutation_row(self):
        g = graph_from_dense([[0, 1], [1, 0]])
        x = np.array([[1.0, 2.0], [3.0, 4.0]])
        out = weighted_sum(g, x)
        assert np.array_equal(out[0], x[1])
        assert np.array_equal(out[1], x[0])

    def test_average_row(self):
        g = graph_from_dense([[0, 0.5, 0.5], [0, 1, 0], [0, 0, 1]])
        x = np.array([[9.0, 9.0], [2.0, 0.0], [0.0, 2.0]])
        assert np.allclose(weighted_sum(g, x)[0], [1.0, 1.0])

    def test_convex_hull_preserved(self):
        rng = np.random.default_rng(0)
        dense = rng.random((6, 6))
        dense /= dense.sum(axis=1, keepdims=True)
        x = rng.normal(size=(6, 4))
        out = weighted_sum(graph_from_dense(dense), x)
        assert out.min() >= x.min() - 1e-12
        assert out.max() <= x.max() + 1e-12

    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            weighted_sum(identity_graph(3), np.zeros((4, 2)))


class TestLayerForward:
    def test_identity_configuration(self):
        g = en_pivot_toy()
        x = np.random.default_rng(1).normal(size=(4, 3))
        out = layer_forward(g, x, GraphLayerParams.identity(3))
        assert np.array_equal(out, x)

    def test_zero_input_gives_bias(self):
        g = en_pivot_toy()
        params = GraphLayerParams(np.eye(2), np.eye(2), np.array([0.5, -2.0]),
                                  activation="relu")
        out = layer_forward(g, np.zeros((4, 2)), params)
        assert np.allclose(out, np.tile([0.5, 0.0], (4, 1)))

    def test_scalar_hand_evaluation(self):
        # d=1: h_i=2 with one neighbor h_j=4 at alpha 0.5 -> relu(2 + 0.5*4) = 4
        g = graph_from_dense([[0.0, 0.5, 0.5], [0, 1, 0], [0, 0, 1]])
        x = np.array([[2.0], [4.0], [0.0]])
        params = GraphLayerParams(np.array([[1.0]]), np.array([[1.0]]),
                                  np.zeros(1), activation="relu")
        assert layer_forward(g, x, params)[0, 0] == 4.0

    def test_non_finite_params_rejected(self):
        with pytest.raises(ValueError):
            GraphLayerParams(np.full((2, 2), np.nan), np.eye(2), np.zeros(2))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            layer_forward(en_pivot_toy(), np.zeros((4, 3)),
                          GraphLayerParams.identity(2))


class TestStackForward:
    def test_single_layer_equals_layer_forward(self):
        g = en_pivot_toy()
        rng = np.random.default_rng(2)
        x = rng.normal(size=(4, 3))
        stack = GraphMergeStack.init(3, hops=1, seed=0)
        assert np.array_equal(stack_forward(g, x, stack),
                              layer_forward(g, x, stack.layers[0]))

    def test_identity_stack_is_exact(self):
        g = en_pivot_toy()
        x = np.random.default_rng(3).normal(size=(4, 5))
        stack = GraphMergeStack.identity(5, hops=2)
        out = stack_forward(g, x, stack)
        assert np.array_equal(out, x)

    def test_empty_stack(self):
        with pytest.raises(ValueError):
            stack_forward(en_pivot_toy(), np.zeros((4, 2)), GraphMergeStack([]))

    def test_shape_preserved(self):
        g = en_pivot_toy()
        x = np.random.default_rng(4).normal(size=(4, 6))
        for hops in (1, 2, 3):
            stack = GraphMergeStack.init(6, hops=hops, seed=hops)
            assert stack_forward(g, x, stack).shape == x.shape

    def test_multi_hop_reach(self):
        # 1-hop: nl (2) cannot influence de (1); 2-hop: it can, via en (0)
        g = en_pivot_toy()
        rng = np.random.default_rng(5)
        x = rng.normal(size=(4, 3))
        eps = 1e-6

        for hops, expect_nonzero in ((1, False), (2, True)):
            stack = GraphMergeStack.init(3, hops=hops, seed=11,
                                         activation="identity")
            sensitivity = 0.0
            for col in range(3):
                xp, xm = x.copy(), x.copy()
                xp[2, col] += eps
                xm[2, col] -= eps
                diff = (stack_forward(g, xp, stack)[1]
                        - stack_forward(g, xm, stack)[1]) / (2 * eps)
                sensitivity += np.abs(diff).sum()
            if expect_nonzero:
                assert sensitivity > 1e-6
            else:
                assert sensitivity == 0.0


class TestStackBackward:
    def test_identity_jacobian(self):
        g = en_pivot_toy()
        x = np.random.default_rng(6).normal(size=(4, 3))
        stack = GraphMergeStack.identity(3, hops=2)
        up = np.random.default_rng(7).normal(size=(4, 3))
        grad_x, _ = stack_backward(g, x, stack, up)
        assert np.array_equal(grad_x, up)

    def test_dead_relu(self):
        g = en_pivot_toy()
        x = np.ones((4, 2))
        params = GraphLayerParams(-np.eye(2), np.zeros((2, 2)),
                                  np.zeros(2), activation="relu")
        stack = GraphMergeStack([params])
        grad_x, grads = stack_backward(g, x, stack, np.ones((4, 2)))
        assert np.all(grad_x == 0.0)
        assert all(np.all(gp == 0.0) for layer in grads for gp in layer)

    def test_finite_difference_oracle(self):
        # random 6-token, d=4, 2-layer instance vs central differences
        rng = np.random.default_rng(8)
        dense = rng.random((6, 6)) * (rng.random((6, 6)) < 0.6)
        dense[np.arange(6), np.arange(6)] = 0.0
        dense[dense.sum(axis=1) == 0, 0] = 1.0
        dense /= dense.sum(axis=1, keepdims=True)
        g = graph_from_dense(dense)
        x = rng.normal(size=(6, 4))
        stack = GraphMergeStack.init(4, hops=2, seed=21)
        # shift biases so relu is active in places but not everywhere
        for layer in stack.layers:
            layer.b += rng.normal(scale=0.1, size=4)
        up = rng.normal(size=(6, 4))

        def loss(x_, stack_):
            return float(np.sum(stack_forward(g, x_, stack_) * up))

        grad_x, layer_grads = stack_backward(g, x, stack, up)
        eps = 1e-6

        def check(analytic, read, write):
            flat = analytic.ravel()
            for k in range(flat.size):
                orig = read(k)
                write(k, orig + eps)
                fp = loss(x, stack)
                write(k, orig - eps)
                fm = loss(x, stack)
                write(k, orig)
                num = (fp - fm) / (2 * eps)
                denom = max(abs(num), abs(flat[k]), 1e-8)
                assert abs(num - flat[k]) / denom < 1e-4

        check(grad_x,
              lambda k: x.ravel()[k],
              lambda k, v: x.reshape(-1).__setitem__(k, v))
        for t, (gw1, gw2, gb) in enumerate(layer_grads):
            layer = stack.layers[t]
            for arr, grad in ((layer.w1, gw1), (layer.w2, gw2), (layer.b, gb)):
                check(grad,
                      lambda k, a=arr: a.ravel()[k],
                      lambda k, v, a=arr: a.reshape(-1).__setitem__(k, v))

    def test_one_hop_sparsity_locality(self):
        g = en_pivot_toy()
        rng = np.random.default_rng(9)
        x = rng.normal(size=(4, 3))
        stack = GraphMergeStack.init(3, hops=1, seed=3, activation="identity")
        # de (row 1) has neighbors {en}; nl (2) and isolated (3) are outside
        up = np.zeros((4, 3))
        up[1] = rng.normal(size=3)
        grad_x, _ = stack_backward(g, x, stack, up)
        assert np.abs(grad_x[2]).sum() == 0.0
        assert np.abs(grad_x[3]).sum() == 0.0
        assert np.abs(grad_x[0]).sum() > 0.0

    def test_shape_mismatch(self):
        g = en_pivot_toy()
        stack = GraphMergeStack.identity(3, hops=1)
        with pytest.raises(ValueError):
            stack_backward(g, np.zeros((4, 3)), stack, np.zeros((4, 2)))


class TestSerialization:
    def test_stack_roundtrip(self, tmp_path):
        stack = GraphMergeStack.init(5, hops=3, seed=13)
        path = tmp_path / "stack.pkl"
        save_stack(stack, path)
        loaded = load_stack(path)
        assert loaded.hops == 3
        for a, b in zip(stack.layers, loaded.layers):
            assert np.array_equal(a.w1, b.w1)
            assert np.array_equal(a.w2, b.w2)
            assert np.array_equal(a.b, b.b)
            assert a.activation == b.activation

    def test_table_roundtrip(self, tmp_path):
        table = np.random.default_rng(14).normal(size=(7, 3))
        path = tmp_path / "table.txt"
        export_table(table, path)
        assert np.allclose(import_table(path), table, atol=0, rtol=0)

    def test_param_count(self):
        stack = GraphMergeStack.init(8, hops=2, seed=0)
        assert stack.num_params() == 2 * (2 * 64 + 8)
