import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import seeds
from qunac.baselines import SecantPair, bfgs_update
from qunac.checks import (
    conjugate_columns,
    feasible_competitor,
    least_change_oracle,
    random_spd,
    rel_fro,
    weighted_norm,
)
from qunac.updates import (
    RankDeficientSampling,
    SamplingBlock,
    family_blend,
    family_correction,
    least_change_update,
    qunac_direct,
    qunac_direct_inverse,
    qunac_inverse,
)

Q23 = np.diag([2.0, 3.0])
E1 = np.array([1.0, 0.0])


def numerical_rank(M):
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > 1e-9 * s[0])) if s[0] > 0 else 0


class TestHandExamples:
    def test_least_change_from_zero(self):
        out = least_change_update(np.zeros((2, 2)), E1, Q23 @ E1, E1).matrix
        np.testing.assert_allclose(out, np.diag([2.0, 0.0]), atol=1e-15)

    def test_direct(self):
        out = qunac_direct(np.eye(2), E1, Q23 @ E1).matrix
        np.testing.assert_allclose(out, np.diag([2.0, 1.0]), atol=1e-15)

    def test_inverse(self):
        out = qunac_inverse(np.eye(2), E1, Q23 @ E1).matrix
        np.testing.assert_allclose(out, np.diag([0.5, 1.0]), atol=1e-15)
        np.testing.assert_allclose(out @ (Q23 @ E1), E1, atol=1e-15)

    def test_direct_inverse(self):
        out = qunac_direct_inverse(np.eye(2), E1, Q23 @ E1).matrix
        np.testing.assert_allclose(out, np.diag([0.5, 1.0]), atol=1e-15)

    @pytest.mark.parametrize("lam", [0.0, 0.5, 1.0])
    def test_blend(self, lam):
        out = family_blend(np.eye(2), E1, Q23 @ E1, lam).matrix
        np.testing.assert_allclose(out, np.diag([0.5, 1.0]), atol=1e-15)


class TestFixedPoints:
    def test_least_change(self, rng):
        Q = random_spd(rng, 5)
        S = rng.standard_normal((5, 2))
        W = random_spd(rng, 5)
        assert rel_fro(least_change_update(Q, S, Q @ S, W @ S).matrix, Q) < 1e-14

    def test_least_change_full_rank_gives_target(self, rng):
        Q = random_spd(rng, 4)
        G = random_spd(rng, 4)
        W = random_spd(rng, 4)
        S = np.eye(4)
        assert rel_fro(least_change_update(G, S, Q @ S, W @ S).matrix, Q) < 1e-12

    def test_direct(self, rng):
        Q = random_spd(rng, 5)
        S = rng.standard_normal((5, 3))
        assert rel_fro(qunac_direct(Q, S, Q @ S).matrix, Q) < 1e-13
        G = random_spd(rng, 5)
        assert rel_fro(qunac_direct(G, np.eye(5), Q).matrix, Q) < 1e-12

    def test_inverse_and_direct_inverse(self, rng):
        Q = random_spd(rng, 5)
        Qi = np.linalg.inv(Q)
        S = rng.standard_normal((5, 2))
        assert rel_fro(qunac_inverse(Qi, S, Q @ S).matrix, Qi) < 1e-12
        assert rel_fro(qunac_direct_inverse(Qi, S, Q @ S).matrix, Qi) < 1e-12


def test_blend_lambda_out_of_range():
    with pytest.raises(ValueError):
        family_blend(np.eye(2), E1, Q23 @ E1, 1.5)


def test_blend_endpoints_exact(rng):
    Q, H = random_spd(rng, 6), random_spd(rng, 6)
    S = rng.standard_normal((6, 2))
    assert np.array_equal(family_blend(H, S, Q @ S, 0.0).matrix, qunac_inverse(H, S, Q @ S).matrix)
    assert np.array_equal(family_blend(H, S, Q @ S, 1.0).matrix, qunac_direct_inverse(H, S, Q @ S).matrix)


def test_family_correction(rng):
    Q, H = random_spd(rng, 7), random_spd(rng, 7)
    S = rng.standard_normal((7, 3))
    V = family_correction(H, S, Q @ S)
    inv = qunac_inverse(H, S, Q @ S).matrix
    for lam in (0.25, 0.5, 0.75):
        assert rel_fro(family_blend(H, S, Q @ S, lam).matrix, inv - lam * V @ V.T) < 1e-12


def test_shape_validation():
    with pytest.raises(ValueError):
        qunac_direct(np.eye(3), np.ones((3, 2)), np.ones((3, 1)))
    with pytest.raises(ValueError):
        least_change_update(np.eye(3), np.ones((3, 1)), np.ones((3, 1)), np.ones((2, 1)))


class TestDegenerateSampling:
    def test_dependent_columns_raise_without_trim(self, rng):
        Q = random_spd(rng, 4)
        s = rng.standard_normal(4)
        S = np.column_stack([s, -s])
        with pytest.raises(RankDeficientSampling) as info:
            qunac_direct(np.eye(4), S, Q @ S, trim=False)
        assert info.value.pivot == 2

    def test_dependent_columns_trimmed(self, rng):
        Q = random_spd(rng, 4)
        s, t = rng.standard_normal(4), rng.standard_normal(4)
        S = np.column_stack([s, t, s + t])
        res = qunac_inverse(np.eye(4), S, Q @ S)
        assert res.q == 2
        ref = qunac_inverse(np.eye(4), S[:, :2], Q @ S[:, :2])
        assert rel_fro(res.matrix, ref.matrix) == 0.0

    def test_no_usable_column(self):
        Q = np.diag([-1.0, 1.0])
        with pytest.raises(RankDeficientSampling):
            qunac_direct(np.eye(2), E1, Q @ E1)

    def test_sampling_block_validation(self):
        with pytest.raises(ValueError):
            SamplingBlock(np.ones((3, 2)), np.ones((3, 1)))
        with pytest.raises(ValueError):
            SamplingBlock(np.ones((3, 1)), np.ones((3, 1)), np.array([-1.0]))
        assert SamplingBlock.empty(4).q == 0


instances = st.tuples(seeds, st.integers(2, 30), st.integers(1, 8))


def _instance(seed, n, q):
    rng = np.random.default_rng(seed)
    q = min(q, n)
    Q = random_spd(rng, n)
    S = rng.standard_normal((n, q))
    return rng, Q, S, random_spd(rng, n)


@given(instances)
def test_direct_action_constraint(inst):
    _, Q, S, G = _instance(*inst)
    out = qunac_direct(G, S, Q @ S).matrix
    assert rel_fro(out @ S, Q @ S) <= 1e-10
    assert np.array_equal(out, out.T)


@given(instances, st.sampled_from([0.0, 0.25, 0.5, 1.0]))
def test_inverse_action_constraint(inst, lam):
    _, Q, S, H = _instance(*inst)
    out = family_blend(H, S, Q @ S, lam).matrix
    assert rel_fro(out @ (Q @ S), S) <= 1e-10
    assert np.array_equal(out, out.T)


@given(instances)
def test_update_rank(inst):
    rng, Q, S, G = _instance(*inst)
    q = S.shape[1]
    W = random_spd(rng, G.shape[0])
    T = rng.standard_normal(G.shape)
    T = T + T.T
    assert numerical_rank(least_change_update(G, S, T @ S, W @ S).matrix - G) <= 3 * q
    assert numerical_rank(qunac_direct(G, S, Q @ S).matrix - G) <= 2 * q
    assert numerical_rank(qunac_inverse(G, S, Q @ S).matrix - G) <= 2 * q


@given(seeds, st.integers(2, 10), st.integers(1, 3))
def test_least_change_matches_dense_oracle(seed, n, q):
    rng = np.random.default_rng(seed)
    q = min(q, n)
    G = rng.standard_normal((n, n))
    G = G + G.T
    Q = rng.standard_normal((n, n))
    Q = Q + Q.T
    W = random_spd(rng, n)
    S = rng.standard_normal((n, q))
    E = least_change_update(G, S, Q @ S, W @ S).matrix - G
    assert rel_fro(E, least_change_oracle(G, Q, W, S)) <= 1e-7
    base = weighted_norm(E, W)
    for _ in range(10):
        assert base <= weighted_norm(feasible_competitor(rng, E, S), W) + 1e-9


@given(seeds, st.integers(3, 12))
def test_positive_definite_chain(seed, n):
    rng = np.random.default_rng(seed)
    G = random_spd(rng, n)
    for _ in range(10):
        Q = random_spd(rng, n)
        S = rng.standard_normal((n, int(rng.integers(1, 4))))
        G = qunac_direct(G, S, Q @ S).matrix
        assert np.linalg.eigvalsh(G)[0] > 1e-12 * np.linalg.norm(G, 2)


@given(seeds, st.integers(2, 16))
def test_quadratic_hereditary(seed, n):
    rng = np.random.default_rng(seed)
    Q = random_spd(rng, n)
    S = conjugate_columns(rng, Q, n)
    G = random_spd(rng, n)
    cuts = sorted(set(rng.integers(1, n, size=3).tolist())) if n > 2 else [1]
    for blk in np.split(np.arange(n), cuts):
        G = qunac_direct(G, S[:, blk], Q @ S[:, blk]).matrix
    assert rel_fro(G, Q) <= 1e-8


@given(seeds, st.integers(2, 20), st.integers(1, 6))
def test_unraveling(seed, n, q):
    rng = np.random.default_rng(seed)
    q = min(q, n)
    Q = random_spd(rng, n)
    S = conjugate_columns(rng, Q, q)
    G = random_spd(rng, n)
    seq_d, seq_i = G, G
    for j in range(q):
        seq_d = qunac_direct(seq_d, S[:, j], Q @ S[:, j]).matrix
        seq_i = bfgs_update(seq_i, SecantPair(S[:, j], Q @ S[:, j]))
    assert rel_fro(qunac_direct(G, S, Q @ S).matrix, seq_d) <= 1e-10
    assert rel_fro(qunac_inverse(G, S, Q @ S).matrix, seq_i) <= 1e-10


@given(seeds, st.integers(2, 10))
def test_lemma_split_form_positive_definite(seed, n):
    # P^T A P + (I - P)^T B (I - P) with A PD on range(P), B PD: PD overall
    rng = np.random.default_rng(seed)
    q = int(rng.integers(1, n + 1))
    S = rng.standard_normal((n, q))
    Q = random_spd(rng, n)
    P = S @ np.linalg.solve(S.T @ Q @ S, S.T @ Q)
    A, B = random_spd(rng, n), random_spd(rng, n)
    I = np.eye(n)
    M = P.T @ A @ P + (I - P).T @ B @ (I - P)
    assert np.linalg.eigvalsh(0.5 * (M + M.T))[0] > 0
