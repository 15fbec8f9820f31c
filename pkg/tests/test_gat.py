import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kgalign import numerics as nx
from kgalign.gat import GAT, GatConfig, GraphBatch, attention_weights, gat_forward
from kgalign.numerics import Tensor
from kgalign.numerics.gradcheck import grad_check_tensors
from kgalign.selection import INTERACTION, NodeKind, Subgraph
from conftest import permute_subgraph, random_subgraph

N_REL = 3
INTERACT, SELF = N_REL, N_REL + 1


def setup(seed=0, d=8, D=4, H=12, layers=2, n_entities=6):
    rng = np.random.default_rng(seed)
    gat = GAT(GatConfig(layers=layers, d=d, qk_dim=D, hidden=H), rng)
    emb = Tensor(rng.normal(size=(n_entities, d)))
    rel = Tensor(rng.normal(size=(N_REL + 2, d)))
    return gat, emb, rel, rng


def states0(gat, sg, emb):
    return gat.initial_states(GraphBatch([sg], SELF), emb)


def dense_layer_oracle(gat, i, sg, x, rel):
    """Per-node loop over in-edges plus the self edge, straight from the definitions."""
    P = {k: t.data for k, t in gat.group.items()}
    L = f"l{i}."
    types = P["type"]
    kinds = sg.kinds
    out = np.zeros_like(x)
    alphas = {}
    for j in range(sg.n_nodes):
        q = np.concatenate([x[j], types[kinds[j]]]) @ P[L + "q.w"] + P[L + "q.b"]
        inc = [(s, r) for s, r, d in sg.edges if d == j] + [(j, SELF)]
        feats = [np.concatenate([x[s], types[kinds[s]], rel[r]]) for s, r in inc]
        gam = np.array([q @ (f @ P[L + "k.w"] + P[L + "k.b"]) for f in feats]) / np.sqrt(len(q))
        a = np.exp(gam - gam.max())
        a /= a.sum()
        msgs = [np.maximum(f @ P[L + "m1.w"] + P[L + "m1.b"], 0) @ P[L + "m2.w"] + P[L + "m2.b"] for f in feats]
        agg = sum(w * m for w, m in zip(a, msgs))
        out[j] = agg @ P[L + "n.w"] + P[L + "n.b"] + x[j]
        for (s, r), w in zip(inc, a):
            alphas[(j, s, r)] = alphas.get((j, s, r), 0.0) + w
    return out, alphas


def test_config_rejects_zero_layers():
    with pytest.raises(ValueError):
        GatConfig(layers=0)
    with pytest.raises(ValueError):
        GatConfig(qk_dim=0)


def test_isolated_node_self_only():
    gat, emb, rel, _ = setup()
    sg = Subgraph([(0, NodeKind.EXTRACTED), (1, NodeKind.NEIGHBOR), (INTERACTION, NodeKind.INTERACTION)],
                  [(2, INTERACT, 0), (0, INTERACT, 2)], 2)
    a = attention_weights(gat, 0, sg, states0(gat, sg, emb), 1, rel, SELF)
    assert a == {(1, SELF): 1.0}


def test_equal_scores_split_half():
    gat, _, rel, rng = setup()
    emb = Tensor(np.tile(rng.normal(size=(1, 8)), (2, 1)))  # identical states
    r = rel.data.copy()
    r[0] = r[SELF]  # edge relation looks exactly like SELF
    sg = Subgraph([(0, NodeKind.EXTRACTED), (1, NodeKind.EXTRACTED), (INTERACTION, NodeKind.INTERACTION)],
                  [(0, 0, 1)], 2)
    a = attention_weights(gat, 0, sg, states0(gat, sg, emb), 1, Tensor(r), SELF)
    assert a[(0, 0)] == pytest.approx(0.5, abs=1e-12)
    assert a[(1, SELF)] == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_layer_matches_dense_oracle(seed):
    gat, emb, rel, rng = setup(seed)
    sg = random_subgraph(rng, 6, N_REL, n_edges=9)
    x = states0(gat, sg, emb)
    got = gat.layer(0, GraphBatch([sg], SELF), x, rel).data
    ref, alphas = dense_layer_oracle(gat, 0, sg, x.data, rel.data)
    np.testing.assert_allclose(got, ref, atol=1e-10)
    for j in range(sg.n_nodes):
        a = attention_weights(gat, 0, sg, x, j, rel, SELF)
        for (s, r), w in a.items():
            assert w == pytest.approx(alphas[(j, s, r)], abs=1e-12)


def test_single_node_self_update():
    gat, emb, rel, _ = setup(layers=1)
    sg = Subgraph([(0, NodeKind.EXTRACTED)], [], 0)
    x = states0(gat, sg, emb)
    out = gat.layer(0, GraphBatch([sg], SELF), x, rel).data
    P = {k: t.data for k, t in gat.group.items()}
    f = np.concatenate([x.data[0], P["type"][0], rel.data[SELF]])
    m = np.maximum(f @ P["l0.m1.w"] + P["l0.m1.b"], 0) @ P["l0.m2.w"] + P["l0.m2.b"]
    np.testing.assert_allclose(out[0], m @ P["l0.n.w"] + P["l0.n.b"] + x.data[0], atol=1e-12)


def test_zero_fn_is_identity():
    gat, emb, rel, rng = setup()
    gat.group["l0.n.w"].data[:] = 0
    gat.group["l0.n.b"].data[:] = 0
    sg = random_subgraph(rng, 6, N_REL)
    x = states0(gat, sg, emb)
    assert np.array_equal(gat.layer(0, GraphBatch([sg], SELF), x, rel).data, x.data)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6))
def test_attention_rows_sum_to_one(seed, n):
    gat, emb, rel, rng = setup(seed % 7)
    sg = random_subgraph(np.random.default_rng(seed), n, N_REL)
    batch = GraphBatch([sg], SELF)
    alpha, _ = gat.attention(0, batch, gat.initial_states(batch, emb), rel)
    sums = np.bincount(batch.dst, weights=alpha.data, minlength=batch.n_nodes)
    np.testing.assert_allclose(sums, 1.0, atol=1e-9)
    assert np.all(alpha.data > 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6))
def test_permutation_invariance(seed, n):
    gat, emb, rel, _ = setup(seed % 5)
    rng = np.random.default_rng(seed)
    sg = random_subgraph(rng, n, N_REL)
    perm = rng.permutation(sg.n_nodes)
    _, a = gat_forward(gat, sg, emb, rel, SELF)
    _, b = gat_forward(gat, permute_subgraph(sg, perm), emb, rel, SELF)
    np.testing.assert_allclose(a.data, b.data, atol=1e-9, rtol=0)


def test_batched_equals_separate():
    gat, emb, rel, rng = setup()
    sgs = [random_subgraph(rng, n, N_REL) for n in (1, 4, 6)]
    _, t_all = gat(GraphBatch(sgs, SELF), emb, rel)
    for b, sg in enumerate(sgs):
        _, t = gat_forward(gat, sg, emb, rel, SELF)
        np.testing.assert_allclose(t_all.data[b], t.data, atol=1e-12)


def test_tkg_sensitive_to_entity_embedding():
    gat, emb, rel, _ = setup(layers=1)
    sg = Subgraph([(0, NodeKind.EXTRACTED), (INTERACTION, NodeKind.INTERACTION)],
                  [(1, INTERACT, 0), (0, INTERACT, 1)], 1)
    _, a = gat_forward(gat, sg, emb, rel, SELF)
    bumped = emb.data.copy()
    bumped[0] += 0.1
    _, b = gat_forward(gat, sg, Tensor(bumped), rel, SELF)
    assert np.abs(a.data - b.data).max() > 1e-6


def test_removing_neighbor_changes_tkg():
    gat, emb, rel, _ = setup()
    full = Subgraph([(0, NodeKind.EXTRACTED), (1, NodeKind.EXTRACTED), (2, NodeKind.NEIGHBOR),
                     (INTERACTION, NodeKind.INTERACTION)],
                    [(2, 0, 0), (1, 1, 2), (3, INTERACT, 0), (0, INTERACT, 3), (3, INTERACT, 1), (1, INTERACT, 3)], 3)
    pruned = Subgraph([(0, NodeKind.EXTRACTED), (1, NodeKind.EXTRACTED), (INTERACTION, NodeKind.INTERACTION)],
                      [(2, INTERACT, 0), (0, INTERACT, 2), (2, INTERACT, 1), (1, INTERACT, 2)], 2)
    _, a = gat_forward(gat, full, emb, rel, SELF)
    _, b = gat_forward(gat, pruned, emb, rel, SELF)
    assert np.abs(a.data - b.data).max() > 1e-6


def test_interaction_initial_state_is_trainable_vector():
    gat, emb, rel, _ = setup()
    sg = Subgraph([(3, NodeKind.EXTRACTED), (INTERACTION, NodeKind.INTERACTION)], [], 1)
    x = states0(gat, sg, emb).data
    np.testing.assert_array_equal(x[0], emb.data[3])
    np.testing.assert_array_equal(x[1], gat.group["int0"].data)


def test_gradcheck_four_nodes():
    rng = np.random.default_rng(21)
    gat = GAT(GatConfig(layers=2, d=6, qk_dim=4, hidden=5), rng)
    emb = Tensor(rng.normal(size=(3, 6)))
    rel = Tensor(rng.normal(size=(N_REL + 2, 6)))
    sg = Subgraph([(0, NodeKind.EXTRACTED), (1, NodeKind.EXTRACTED), (2, NodeKind.NEIGHBOR),
                   (INTERACTION, NodeKind.INTERACTION)],
                  [(2, 0, 0), (1, 1, 2), (3, INTERACT, 0), (0, INTERACT, 3), (3, INTERACT, 1), (1, INTERACT, 3)], 3)
    w = rng.normal(size=6)
    params = [t for _, t in gat.group.items()] + [emb, rel]

    def f():
        _, t = gat_forward(gat, sg, emb, rel, SELF)
        return nx.tsum(t * w)

    assert grad_check_tensors(f, params) < 1e-4
