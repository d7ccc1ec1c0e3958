import numpy as np
import pytest

from dipa.detfun import (
    assemble_P,
    check_feasible,
    f_full,
    f_minor,
    grad,
    hess,
    lu_nopivot,
    value_grad_hess,
    value_only,
)
from dipa.graph import build_arc_map, gen_random_graph, make_graph
from dipa.outer import initial_interior


def k3_map():
    g = make_graph(3, [(1, 2), (1, 3), (2, 3)])
    return g, build_arc_map(g)


def hc_vector(m, cycle_arcs):
    x = np.zeros(m.n_arcs)
    for a in cycle_arcs:
        x[m.index[a]] = 1.0
    return x


def random_ds_matrix(rng, n):
    """Sinkhorn-balanced positive matrix: doubly stochastic to high accuracy."""
    P = rng.uniform(0.1, 1.0, size=(n, n))
    for _ in range(2000):
        P /= P.sum(axis=1, keepdims=True)
        P /= P.sum(axis=0, keepdims=True)
    return P


class TestLU:
    def test_column_zero_sums(self):
        rng = np.random.default_rng(0)
        P = random_ds_matrix(rng, 8)
        A = np.eye(8) - P
        res = lu_nopivot(A)
        assert not res.transposed
        assert np.allclose(res.l @ res.u, A, atol=1e-12)
        # unit lower triangular with multipliers in [-1, 0]
        assert np.allclose(np.diag(res.l), 1.0)
        off = res.l[np.tril_indices(8, k=-1)]
        assert np.all(off <= 1e-12)
        assert np.all(off >= -1.0 - 1e-12)
        # rank n-1: final pivot vanishes and L^T e equals the last basis vector
        assert abs(res.u[-1, -1]) <= 1e-10
        e_n = np.zeros(8)
        e_n[-1] = 1.0
        assert np.allclose(res.l.T @ np.ones(8), e_n, atol=1e-10)

    def test_row_zero_sums_transposes(self):
        rng = np.random.default_rng(1)
        P = rng.uniform(0.1, 1.0, size=(6, 6))
        P /= P.sum(axis=1, keepdims=True)  # stochastic rows only
        A = np.eye(6) - P
        res = lu_nopivot(A)
        assert res.transposed
        assert np.allclose(res.l @ res.u, A.T, atol=1e-12)

    def test_rejects_wrong_sign_pattern(self):
        A = np.array([[1.0, 0.5], [-1.0, -0.5]])
        with pytest.raises(ValueError):
            lu_nopivot(A)

    def test_rejects_nonzero_sums(self):
        A = np.array([[1.0, -0.25], [-0.5, 1.0]])
        with pytest.raises(ValueError):
            lu_nopivot(A)

    def test_skips_dead_pivot(self):
        # block diagonal of two singletons: interior zero pivot with dead
        # row and column is skipped rather than divided through
        A = np.array(
            [
                [1.0, -1.0, 0.0, 0.0],
                [-1.0, 1.0, 0.0, 0.0],
                [0.0, 0.0, 1.0, -1.0],
                [0.0, 0.0, -1.0, 1.0],
            ]
        )
        res = lu_nopivot(A)
        assert 1 in res.skipped
        assert np.allclose(res.l @ res.u, A, atol=1e-12)

    def test_det_of_nonsingular_principal_block(self):
        rng = np.random.default_rng(2)
        P = random_ds_matrix(rng, 7)
        A = np.eye(7) - P
        res = lu_nopivot(A)
        # leading 6x6 pivots reproduce the principal minor determinant
        minor = np.linalg.det(A[:6, :6])
        assert np.isclose(np.prod(np.diag(res.u)[:6]), minor, rtol=1e-9)


class TestObjectiveAnchors:
    def test_hc_values_k3(self):
        g, m = k3_map()
        x = hc_vector(m, [(1, 2), (2, 3), (3, 1)])
        assert f_minor(x, m) == pytest.approx(-1.0, abs=1e-12)
        assert f_full(x, m) == pytest.approx(-3.0, abs=1e-9)

    def test_uniform_point_k3(self):
        g, m = k3_map()
        x = np.full(6, 0.5)
        assert f_minor(x, m) == pytest.approx(-0.75, abs=1e-12)

    def test_multi_cycle_permutation_is_zero(self):
        # two disjoint 3-cycles on 6 nodes: permutation but not Hamiltonian
        g = make_graph(
            6, [(1, 2), (2, 3), (1, 3), (4, 5), (5, 6), (4, 6), (1, 4), (2, 5)]
        )
        m = build_arc_map(g)
        x = hc_vector(m, [(1, 2), (2, 3), (3, 1), (4, 5), (5, 6), (6, 4)])
        assert f_minor(x, m) == pytest.approx(0.0, abs=1e-10)

    def test_hc_values_planted_instances(self):
        from dipa.graph import enumerate_hc

        for seed in (0, 1, 2):
            g = gen_random_graph(9, 3, 5, seed=seed, plant=True)
            m = build_arc_map(g)
            for c in enumerate_hc(g):
                x = hc_vector(m, c.arcs())
                assert f_minor(x, m) == pytest.approx(-1.0, abs=1e-12)
                assert f_full(x, m) == pytest.approx(-float(g.n), abs=1e-9)


class TestFeasibility:
    def test_interior_point_passes(self):
        g = gen_random_graph(10, 3, 6, seed=4)
        m = build_arc_map(g)
        x = initial_interior(g, m, "ds")
        check_feasible(x, m, "ds")

    def test_negative_rejected(self):
        g, m = k3_map()
        x = np.full(6, 0.5)
        x[0] = -0.1
        with pytest.raises(ValueError):
            check_feasible(x, m, "s")

    def test_row_sum_rejected(self):
        g, m = k3_map()
        with pytest.raises(ValueError):
            check_feasible(np.full(6, 0.3), m, "s")

    def test_column_sum_checked_only_in_ds(self):
        g, m = k3_map()
        x = np.zeros(6)
        # rows stochastic but columns not
        x[m.index[(1, 2)]] = 1.0
        x[m.index[(2, 1)]] = 1.0
        x[m.index[(3, 1)]] = 1.0
        check_feasible(x, m, "s")
        with pytest.raises(ValueError):
            check_feasible(x, m, "ds")


def central_diff_grad(fun, x, h=1e-6):
    g = np.zeros_like(x)
    for k in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[k] += h
        xm[k] -= h
        g[k] = (fun(xp) - fun(xm)) / (2 * h)
    return g


class TestDerivatives:
    @pytest.mark.parametrize("mode", ["ds", "s"])
    def test_gradient_matches_fd(self, mode):
        g = gen_random_graph(8, 3, 5, seed=7)
        m = build_arc_map(g)
        x = initial_interior(g, m, mode)
        fun = lambda v: value_only(v, m, mode)
        gd = grad(x, m, mode=mode)
        fd = central_diff_grad(fun, x)
        assert np.allclose(gd, fd, rtol=1e-6, atol=1e-8)

    def test_hessian_matches_fd(self):
        g = gen_random_graph(8, 3, 5, seed=8)
        m = build_arc_map(g)
        x = initial_interior(g, m, "ds")
        H = hess(x, m, mode="ds")
        fd = np.zeros_like(H)
        for k in range(x.size):
            xp = x.copy()
            xm = x.copy()
            xp[k] += 1e-5
            xm[k] -= 1e-5
            fd[:, k] = (grad(xp, m, mode="ds") - grad(xm, m, mode="ds")) / 2e-5
        assert np.allclose(H, fd, rtol=1e-5, atol=1e-6)
        assert np.allclose(H, H.T, atol=1e-12)

    def test_bundle_consistency(self):
        g = gen_random_graph(8, 3, 5, seed=9)
        m = build_arc_map(g)
        x = initial_interior(g, m, "ds")
        f, gd, H = value_grad_hess(x, m, "ds")
        assert f == pytest.approx(f_minor(x, m, validate=False), abs=1e-14)
        assert np.allclose(gd, grad(x, m, mode="ds"), atol=1e-14)
        assert np.allclose(H, hess(x, m, mode="ds"), atol=1e-14)
        assert value_only(x, m, "ds") == pytest.approx(f, abs=1e-14)


def test_assemble_P_layout():
    g, m = k3_map()
    x = np.arange(1.0, 7.0)
    P = assemble_P(m, x)
    assert P.shape == (3, 3)
    assert P[0, 1] == x[m.index[(1, 2)]]
    assert P[2, 0] == x[m.index[(3, 1)]]
    assert np.all(np.diag(P) == 0.0)
