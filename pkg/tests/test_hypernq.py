import numpy as np
import pytest

from hyperdecode import tensor as T
from hyperdecode.hypergraph import Hypergraph, IsolatedNodeError
from hyperdecode.hypernq import (ARCH, FeatureEncoder, HyperNQDecoder, HyperNQModel, decode, encode_features,
                                 hypergraph_syndrome)

from oracles import dense_layer


def model64(num_nodes, seed=0, hidden=8):
    return HyperNQModel(num_nodes, hidden=hidden, seed=seed, dtype=np.float64)


def randomise(model, rng, scale=0.7):
    """Random draws for every block, biases included, so no term is trivially zero."""
    for p in model.parameters():
        p.value = rng.normal(scale=scale, size=p.shape)


def params64(model):
    return {k: p.value.astype(np.float64) for k, p in model.params.items()}


def test_encoder_shapes():
    X, S, w = encode_features(Hypergraph.from_incidence([0], [0], 26, 1), [1])
    assert X.shape == (26, 6)
    assert S.tolist() == [1.0] and w.tolist() == [2.0]
    enc = FeatureEncoder(26)
    assert enc.index_bits == 5 and enc.width == 6
    assert FeatureEncoder(26, use_llr=True).width == 7


def test_encoder_zero_syndrome(graph13):
    X, S, w = encode_features(graph13, np.zeros(12))
    assert not S.any() and np.all(w == 1)
    assert not X[:, -1].any()                 # bit_value slot


def test_encoder_rejects_wrong_length(graph13):
    with pytest.raises(ValueError):
        encode_features(graph13, np.zeros(11))


def test_index_encoding_injective():
    X = FeatureEncoder(258).node_features()
    assert len({row.tobytes() for row in X}) == 258


def test_llr_feature():
    X = FeatureEncoder(4, use_llr=True).node_features(0.1)
    assert np.allclose(X[:, -1], np.log(9.0))
    with pytest.raises(ValueError):
        FeatureEncoder(4, use_llr=True).node_features()


def test_matches_dense_oracle(graph13):
    rng = np.random.default_rng(0)
    inc = graph13.incidence()
    X = FeatureEncoder(26).node_features()
    for draw in range(5):
        m = model64(26, hidden=6)
        randomise(m, rng)
        syn = rng.integers(0, 2, (3, 12))
        trace = {}
        probs = T.sigmoid(m.logits(graph13, syn, trace=trace)).value.reshape(3, 26)
        for b in range(3):
            ref = dense_layer(inc, syn[b], X, params64(m))
            assert np.abs(probs[b] - ref["probs"]).max() < 1e-10
            assert np.abs(trace["Y_new"][b * 12:(b + 1) * 12] - ref["Y_new"]).max() < 1e-10
            assert np.abs(trace["X_new"][b * 26:(b + 1) * 26] - ref["X_new"]).max() < 1e-10


def test_attention_normalised(code129):
    g = Hypergraph.from_css(code129)
    m = HyperNQModel(258, hidden=16, seed=1, dtype=np.float64)
    randomise(m, np.random.default_rng(1), scale=2.0)
    syn = np.random.default_rng(2).integers(0, 2, (4, 101))
    trace = {}
    m.logits(g, syn, trace=trace)
    for key in ("alpha", "beta"):
        sums = np.bincount(trace["node_flat"], weights=trace[key])
        assert np.abs(sums - 1).max() < 1e-12


def test_singleton_hyperedge_message():
    # node 0 alone in hyperedge 0 and in no other: alpha = 1, B = 1
    g = Hypergraph.from_incidence([0, 1, 2], [0, 1, 1], 3, 2)
    m = model64(3)
    randomise(m, np.random.default_rng(3))
    for s0 in (0, 1):
        trace = {}
        m.logits(g, [[s0, 1]], trace=trace)
        assert np.allclose(trace["m_e"][0], (1 + s0) * trace["f"][0])


def test_duplicate_nodes_leave_message_unchanged():
    # same hyperedge seen with node 0 once, then with an identical copy of node 0 added
    a = model64(3)
    randomise(a, np.random.default_rng(4))
    b = model64(4)
    b.load_state_dict(a.state_dict())
    ga = Hypergraph.from_incidence([0, 1, 2], [0, 1, 1], 3, 2)
    gb = Hypergraph.from_incidence([0, 3, 1, 2], [0, 0, 1, 1], 4, 2)
    xa = FeatureEncoder(3).node_features()
    xb = np.vstack([xa, xa[:1]])
    ta, tb = {}, {}
    a.logits(ga, [[1, 0]], trace=ta, features=xa)
    b.logits(gb, [[1, 0]], trace=tb, features=xb)
    assert np.allclose(ta["m_e"][0], tb["m_e"][0], rtol=0, atol=1e-14)


def test_single_hyperedge_node_receives_plain_transform():
    g = Hypergraph.from_incidence([0, 1, 1], [0, 0, 1], 2, 2)
    m = model64(2)
    randomise(m, np.random.default_rng(5))
    trace = {}
    m.logits(g, [[1, 0]], trace=trace)
    assert np.allclose(trace["m_v"][0], trace["g"][0])    # beta = 1 and D = w_j


def test_zero_syndrome_degree(graph13):
    trace = {}
    model64(26).logits(graph13, np.zeros((1, 12)), trace=trace)
    assert np.array_equal(trace["D"], graph13.node_degree)


def test_zero_parameters_give_constant_output(graph13):
    m = model64(26)
    for p in m.parameters():
        p.value = np.zeros(p.shape)
    m.params["b_out"].value = np.array([[0.3]])
    probs = m.predict(graph13, np.random.default_rng(6).integers(0, 2, (2, 12)))
    assert np.allclose(probs, 1 / (1 + np.exp(-0.3)))


def test_tie_decodes_to_zero(graph13):
    m = model64(26)
    for p in m.parameters():
        p.value = np.zeros(p.shape)
    res = decode(m, graph13, np.zeros(12))
    assert np.all(res.probs == 0.5) and not res.e_hat.any() and res.syndrome_matched


def test_pure_and_deterministic(graph13):
    m = HyperNQModel(26, hidden=16, seed=7)
    s = np.random.default_rng(7).integers(0, 2, 12)
    a = m.predict(graph13, np.stack([s, s, s]))
    assert np.array_equal(a[0], a[1]) and np.array_equal(a[1], a[2])
    assert np.array_equal(m.predict(graph13, s), m.predict(graph13, s))
    r1, r2 = decode(m, graph13, s), decode(m, graph13, s)
    assert np.array_equal(r1.e_hat, r2.e_hat)
    assert np.array_equal(r1.e_hat, (r1.probs > 0.5).astype(np.uint8))


def test_batch_equals_single(graph13):
    m = HyperNQModel(26, hidden=16, seed=8, dtype=np.float64)
    syn = np.random.default_rng(8).integers(0, 2, (5, 12))
    batch = m.predict(graph13, syn)
    for b in range(5):
        assert np.allclose(batch[b], m.predict(graph13, syn[b]), rtol=0, atol=1e-14)


def test_permutation_equivariance(code13):
    g = Hypergraph.from_css(code13)
    m = model64(26, hidden=8)
    randomise(m, np.random.default_rng(9))
    rng = np.random.default_rng(10)
    perm = rng.permutation(26)          # old node i becomes perm[i]
    gp = Hypergraph.from_incidence(perm[g.node_idx], g.edge_idx, 26, g.num_edges)
    X = FeatureEncoder(26).node_features()
    Xp = np.empty_like(X)
    Xp[perm] = X
    syn = rng.integers(0, 2, (4, 12))
    base = T.sigmoid(m.logits(g, syn, features=X)).value.reshape(4, 26)
    moved = T.sigmoid(m.logits(gp, syn, features=Xp)).value.reshape(4, 26)
    # summation order inside a hyperedge follows node order, so allow rounding only
    assert np.abs(moved[:, perm] - base).max() < 1e-12


def test_gradients_match_finite_differences(graph13):
    m = model64(26, hidden=4)
    randomise(m, np.random.default_rng(11), scale=0.5)
    rng = np.random.default_rng(12)
    syn = rng.integers(0, 2, (2, 12))
    err = rng.integers(0, 2, (2, 26))

    def loss():
        return T.bce_loss(m.forward(graph13, syn), err.reshape(-1, 1))

    with T.Tape() as tape:
        out = loss()
    tape.backward(out)
    for name, p in m.params.items():
        flat = p.value.reshape(-1)
        for k in rng.choice(flat.size, size=min(6, flat.size), replace=False):
            old = flat[k]
            flat[k] = old + 1e-6
            up = loss().item()
            flat[k] = old - 1e-6
            down = loss().item()
            flat[k] = old
            num = (up - down) / 2e-6
            ana = p.grad.reshape(-1)[k]
            assert abs(num - ana) <= 1e-4 * max(abs(num), 1e-6) + 1e-9, name


def test_checkpoint_roundtrip(tmp_path, graph13):
    m = HyperNQModel(26, hidden=16, seed=13)
    m.save(tmp_path / "m.qnet")
    back = HyperNQModel.load(tmp_path / "m.qnet")
    syn = np.random.default_rng(13).integers(0, 2, (3, 12))
    assert np.array_equal(m.predict(graph13, syn), back.predict(graph13, syn))
    arch = T.load_checkpoint(tmp_path / "m.qnet")[0]
    assert arch == ARCH


def test_wrong_architecture_rejected(tmp_path):
    T.save_checkpoint(tmp_path / "x.qnet", "other", (6, 8, 8), 0, {"a": np.ones((1, 1))})
    with pytest.raises(T.CheckpointError):
        HyperNQModel.load(tmp_path / "x.qnet")


def test_shape_errors(graph13):
    m = HyperNQModel(26, hidden=8)
    with pytest.raises(ValueError):
        m.predict(graph13, np.zeros(11))
    with pytest.raises(ValueError):
        HyperNQModel(30, hidden=8).predict(graph13, np.zeros(12))
    isolated = Hypergraph.from_incidence([0], [0], 2, 1)
    with pytest.raises(IsolatedNodeError):
        HyperNQModel(2, hidden=8).predict(isolated, np.zeros(1))


def test_decoder_adapter(graph13):
    m = HyperNQModel(26, hidden=8, seed=2)
    syn = np.random.default_rng(14).integers(0, 2, (7, 12))
    out = HyperNQDecoder(m, graph13, batch=3).decode_batch(syn)
    assert np.array_equal(out, (m.predict(graph13, syn) > 0.5).astype(np.uint8))


def test_hypergraph_syndrome_matches_channel(code13, graph13):
    from hyperdecode.channel import syndrome
    e = np.random.default_rng(15).integers(0, 2, (4, 26)).astype(np.uint8)
    assert np.array_equal(hypergraph_syndrome(graph13, e), syndrome(code13, e))
