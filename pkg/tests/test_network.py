import itertools

import numpy as np
import pytest

from oracles import isomorphic
from swopacity.abstraction import build_local_abstraction
from swopacity.model import derive_affine_certificate, parse_network_spec
from swopacity.network import CompositionError, compose, concrete_network_metadata, internal_input_candidates
from swopacity.ring import ring_document


def _parts(spec, eta=0.2, w=0.2, augmented=None):
    out = []
    for sub in spec.subsystems:
        cert = derive_affine_certificate(sub)
        out.append(build_local_abstraction(sub, cert, eta, {n: w for n in sub.neighbors}, augmented=augmented))
    return out


@pytest.fixture(scope="module")
def ring3_net(ring3):
    return compose(_parts(ring3), ring3.edges, {})


def _reference_product(parts, edges, phi):
    """Reachable joint transitions straight from the interconnection constraint."""
    names = [T.name for T in parts]
    post = []
    for T in parts:
        tab = {}
        for s, u, w, d in T.transitions.tolist():
            tab.setdefault((s, u, w), set()).add(d)
        post.append(tab)

    def allowed(i, z):
        T = parts[i]
        if T.internal_inputs is None:
            return [-1]
        ok = []
        for w, wv in enumerate(T.internal_inputs):
            good = True
            for blk in T.internal_blocks:
                j = names.index(blk["source"])
                Tj = parts[j]
                _, a, b = next(l for l in Tj.output_layout if l[0] == T.name)
                y = Tj.outputs[z[j], a:b]
                if np.abs(wv[blk["start"]:blk["stop"]] - y).max() > phi.get((blk["source"], T.name), 0.0) + 1e-9:
                    good = False
            if good:
                ok.append(w)
        return ok

    start = set(itertools.product(*[T.initial.tolist() for T in parts]))
    seen, stack, edges_out = set(start), list(start), set()
    while stack:
        z = stack.pop()
        for us in itertools.product(*[range(len(T.inputs)) for T in parts]):
            succ = []
            for i in range(len(parts)):
                s = set()
                for w in allowed(i, z):
                    s |= post[i].get((z[i], us[i], w), set())
                succ.append(sorted(s))
            for d in itertools.product(*succ):
                edges_out.add((z, tuple(parts[i].inputs[us[i]] for i in range(len(parts))), d))
                if d not in seen:
                    seen.add(d)
                    stack.append(d)
    return seen, edges_out


def _edge_set(net):
    S = net.system
    return {(S.labels[s], S.inputs[u], S.labels[d]) for s, u, _, d in S.transitions.tolist()}


def test_candidates_ring(ring3):
    T = _parts(ring3)[0]
    assert internal_input_candidates(T, {"3": [0.4]}, {"3": 0.0}) == [1]
    assert internal_input_candidates(T, {"3": [0.4]}, {"3": 0.2}) == [0, 1]
    assert internal_input_candidates(T, {"3": [0.3]}, {"3": 0.0}) == []


def test_ring3_network(ring3_net):
    S = ring3_net.system
    assert S.num_states == 8
    assert S.is_closed
    assert S.labels == tuple(itertools.product(range(2), repeat=3))
    assert S.secret.tolist() == [2, 3]
    assert S.initial.tolist() == list(range(8))
    # only the last subsystem is externally visible
    for k, z in enumerate(S.labels):
        np.testing.assert_allclose(S.outputs[k], [0.0, 0.0, (0.2, 0.4)[z[2]]])
    assert ring3_net.report["total_blocking"] is False
    assert ring3_net.report["blocking_states"] == 0


def test_matches_reference_product(ring3):
    for phi_val, w in ((0.0, 0.2), (0.1, 0.1), (0.2, 0.2)):
        parts = _parts(ring3, w=w)
        phi = {e: phi_val for e in ring3.edges}
        net = compose(parts, ring3.edges, phi)
        states, edges = _reference_product(parts, ring3.edges, phi)
        assert set(net.system.labels) == states
        assert _edge_set(net) == edges


def test_full_product_cardinality(ring3):
    parts = _parts(ring3, eta=0.1, w=0.1)
    net = compose(parts, ring3.edges, {}, full_product=True)
    assert net.system.num_states == int(np.prod([T.num_states for T in parts])) == 125
    assert net.report["product_size"] == 125


def test_projection_soundness(ring3):
    parts = _parts(ring3, w=0.2)
    phi = {e: 0.2 for e in ring3.edges}
    net = compose(parts, ring3.edges, phi)
    S = net.system
    for s, u, _, d in S.transitions.tolist():
        ws = net.witnesses(s, u, d)
        assert ws is not None
        for i, T in enumerate(parts):
            assert S.labels[d][i] in T.successors(S.labels[s][i], T.inputs.index(S.inputs[u][i]), ws[i])
            j = [p.name for p in parts].index(T.internal_blocks[0]["source"])
            y = parts[j].outputs[S.labels[s][j], 1]
            assert abs(T.internal_inputs[ws[i], 0] - y) <= 0.2 + 1e-9


def test_order_independence(ring3):
    parts = _parts(ring3, eta=0.1, w=0.1)
    a = compose(parts, ring3.edges, {})
    b = compose(parts[::-1], ring3.edges, {})
    lookup = {lab: k for k, lab in enumerate(b.system.labels)}
    perm = {k: lookup[lab[::-1]] for k, lab in enumerate(a.system.labels)}
    assert isomorphic(a.system, b.system, perm)


def test_single_subsystem_is_itself():
    spec = parse_network_spec(ring_document(1))
    (T,) = _parts(spec)
    net = compose([T], [], {})
    assert net.system.num_states == T.num_states
    assert {(s, d) for s, _, _, d in net.system.transitions.tolist()} == \
        {(s, d) for s, _, _, d in T.transitions.tolist()}
    np.testing.assert_allclose(net.system.outputs, T.outputs)


def test_disjoint_grids_block_totally():
    spec = parse_network_spec(ring_document(2))
    parts = _parts(spec, w=0.3)  # inputs {0.3} never equal outputs {0.2, 0.4}
    with pytest.raises(CompositionError) as exc:
        compose(parts, spec.edges, {})
    assert exc.value.edge in spec.edges
    net = compose(parts, spec.edges, {}, check=False)
    assert net.system.transitions.shape[0] == 0
    assert net.report["total_blocking"] is True
    assert net.report["empty_candidate_events"] > 0


def test_mixed_augmentation_rejected():
    doc = ring_document(2)
    doc["subsystems"][0]["lyapunov"] = "multiple"
    spec = parse_network_spec(doc)
    parts = _parts(spec)
    assert parts[0].augmented != parts[1].augmented
    with pytest.raises(CompositionError, match="mix"):
        compose(parts, spec.edges, {})


def test_augmented_network_composes():
    doc = ring_document(2)
    doc["dwell_time"] = 2
    for s in doc["subsystems"]:
        s["lyapunov"] = "multiple"
    spec = parse_network_spec(doc)
    net = compose(_parts(spec), spec.edges, {})
    assert net.system.augmented
    states, edges = _reference_product(list(net.parts), spec.edges, {})
    assert set(net.system.labels) == states and _edge_set(net) == edges


def test_workers_do_not_change_result(ring3):
    parts = _parts(ring3, eta=0.1, w=0.1)
    a = compose(parts, ring3.edges, {})
    b = compose(parts, ring3.edges, {}, workers=4)
    assert a.system.labels == b.system.labels
    assert np.array_equal(a.system.transitions, b.system.transitions)


def test_concrete_metadata(ring3):
    meta = concrete_network_metadata(ring3)
    assert meta["secret"][:2] == [[["(0.0, 0.2]"]], [["[0.4, 0.6)"]]]
    assert not meta["secret_empty"] and not meta["secret_equals_state"]
    assert meta["output_dim"] == 3
    doc = ring_document(2)
    doc["secrets"] = {"1": [], "2": ["(0, 0.6)"]}
    assert concrete_network_metadata(parse_network_spec(doc))["secret_empty"]
    doc["secrets"] = {"1": ["(0, 0.6)"], "2": ["(0, 0.6)"]}
    assert concrete_network_metadata(parse_network_spec(doc))["secret_equals_state"]
