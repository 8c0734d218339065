import numpy as np
import pytest

from swopacity.abstraction import (AbstractionError, abstract_successors, build_local_abstraction,
                                   check_dwell_scenarios, dwell_scenario, internal_input_grid, mode_image, quantize)
from swopacity.model import AffineMode, derive_affine_certificate, parse_network_spec
from swopacity.ring import ring_document
from swopacity.sets import BoxUnion, IntervalBox
from swopacity.transys import from_document, to_document

A_VAL, B_VAL, D_VAL = (0.05, 0.1), (0.1, 0.15), 0.05


def _ring_part(spec, name, eta=0.2, w=0.2, **kw):
    sub = spec.subsystem(name)
    return build_local_abstraction(sub, derive_affine_certificate(sub), eta, {n: w for n in sub.neighbors}, **kw)


def test_quantize_open_interval():
    g = quantize(BoxUnion.parse("(0, 0.6)"), 0.2)
    np.testing.assert_allclose(g.points, [[0.2], [0.4]])
    assert g.index.tolist() == [[1], [2]]


def test_quantize_closed_square():
    g = quantize(IntervalBox.parse(["[0, 1]", "[0, 1]"]), 0.5)
    assert len(g) == 9
    assert g.to_list() == [[a, b] for a in (0.0, 0.5, 1.0) for b in (0.0, 0.5, 1.0)]


def test_quantize_step_too_large():
    with pytest.raises(AbstractionError) as exc:
        quantize(BoxUnion.parse("(0, 0.6)"), 0.7)
    assert exc.value.box is not None


def test_quantize_open_boundaries_excluded():
    np.testing.assert_allclose(quantize(BoxUnion.parse("(0, 0.6)"), 0.3).points, [[0.3]])
    np.testing.assert_allclose(quantize(BoxUnion.parse("[0, 0.6]"), 0.3).points, [[0.0], [0.3], [0.6]])


def test_quantize_union_deduplicates():
    g = quantize(BoxUnion.parse([["[0, 0.4]"], ["[0.4, 1]"]]), 0.2)
    assert len(g) == 6


def test_mode_image_examples(ring3):
    m2 = ring3.subsystem("1").modes[1]
    assert mode_image(m2, [0.4], [0.4])[0] == pytest.approx(0.21)
    zero = AffineMode(np.zeros((1, 1)), np.zeros((1, 1)), np.zeros(1))
    assert mode_image(zero, [0.3], [0.7])[0] == 0.0
    ident = AffineMode(np.eye(1), np.zeros((1, 0)), np.zeros(1))
    assert mode_image(ident, [0.2], [])[0] == 0.2


def test_successors_ring_example(ring3):
    sub = ring3.subsystem("1")
    grid = quantize(sub.state_set, 0.2)
    np.testing.assert_allclose(abstract_successors(sub, grid, [0.4], 1, [0.4], 0.2), [(0.2,), (0.4,)])


def test_successors_escape_and_full_ball():
    doc = {"subsystems": [{"name": "s", "state_set": "[0, 1]",
                           "modes": [{"A": [[0]], "b": [3]}, {"A": [[0]], "b": [0.5]}]}]}
    sub = parse_network_spec(doc).subsystems[0]
    grid = quantize(sub.state_set, 1.0)
    assert abstract_successors(sub, grid, [0.0], 0, [], 1.0) == []
    assert abstract_successors(sub, grid, [0.0], 1, [], 1.0) == [(0.0,), (1.0,)]
    T = build_local_abstraction(sub, derive_affine_certificate(sub), 1.0)
    assert T.meta["blocking_triples"] == 2
    assert {b["mode"] for b in T.meta["blocking"]} == {1}


def test_internal_input_grid_blockwise():
    doc = ring_document(3)
    doc["subsystems"][0]["internal_inputs"]["2"] = "(0, 0.6)"
    doc["adjacency"].append(["2", "1"])
    doc["outputs"]["2"]["1"] = [[1]]
    for m in doc["subsystems"][0]["modes"]:
        m["D"] = [["0.05", "0.05"]]
    sub = parse_network_spec(doc).subsystem("1")
    pts, blocks = internal_input_grid(sub, {"2": 0.3, "3": 0.2})
    assert [b["source"] for b in blocks] == ["2", "3"]
    assert [b["size"] for b in blocks] == [1, 2]
    np.testing.assert_allclose(pts, [[0.3, 0.2], [0.3, 0.4]])


def _oracle_edges(name):
    """Ring transitions computed by hand from the mode parameters."""
    pts = (0.2, 0.4)
    edges = set()
    for xi, x in enumerate(pts):
        for p in range(2):
            for wi, w in enumerate(pts):
                img = A_VAL[p] * x + D_VAL * w + B_VAL[p]
                for di, d in enumerate(pts):
                    if abs(img - d) <= 0.2 + 1e-9:
                        edges.add((xi, p, wi, di))
    return edges


@pytest.mark.parametrize("name", ["1", "2", "3"])
def test_ring_local_abstraction_matches_oracle(ring3, name):
    T = _ring_part(ring3, name)
    assert T.num_states == 2
    np.testing.assert_allclose([lab[0] for lab in T.labels], [(0.2,), (0.4,)])
    assert T.internal_inputs.ravel().tolist() == pytest.approx([0.2, 0.4])
    assert {tuple(r) for r in T.transitions.tolist()} == _oracle_edges(name)
    assert T.meta["blocking_triples"] == 0
    assert T.initial.tolist() == [0, 1]
    expected_secret = {"1": [0], "2": [1], "3": [0, 1]}[name]
    assert T.secret.tolist() == expected_secret


def test_ring_self_loop_and_cross_edge(ring3):
    T = _ring_part(ring3, "1")
    # state 0.4, mode 2, neighbour output 0.4: image 0.21 reaches both grid points
    assert sorted(T.successors(1, 1, 1)) == [0, 1]


def test_all_secret_gives_all_states():
    doc = ring_document(3)
    doc["secrets"]["1"] = ["(0, 0.6)"]
    spec = parse_network_spec(doc)
    T = _ring_part(spec, "1")
    assert T.secret.tolist() == list(range(T.num_states))


def test_span_bound_enforced(ring3):
    with pytest.raises(AbstractionError, match="exceeds"):
        _ring_part(ring3, "1", eta=0.3)
    # subsystem 3 is all-secret, so only the secret span (0.6) bounds eta
    assert _ring_part(ring3, "3", eta=0.3).num_states == 1


def test_determinism_and_worker_independence(ring3):
    a = _ring_part(ring3, "2", eta=0.05, w=0.05)
    b = _ring_part(ring3, "2", eta=0.05, w=0.05)
    c = _ring_part(ring3, "2", eta=0.05, w=0.05, workers=4)
    assert np.array_equal(a.transitions, b.transitions)
    assert np.array_equal(a.transitions, c.transitions)
    assert to_document(a) == to_document(c)


def test_dump_round_trip(ring3):
    T = _ring_part(ring3, "1")
    again = from_document(to_document(T))
    assert to_document(again) == to_document(T)


def _augmented_spec(kd):
    doc = ring_document(3)
    doc["dwell_time"] = kd
    for s in doc["subsystems"]:
        s["lyapunov"] = "multiple"
    return parse_network_spec(doc)


@pytest.mark.parametrize("kd", [1, 2, 3])
def test_dwell_scenarios(kd):
    spec = _augmented_spec(kd)
    sub = spec.subsystem("1")
    cert = derive_affine_certificate(sub)
    assert not cert.common_lyapunov
    T = build_local_abstraction(sub, cert, 0.2, {"3": 0.2})
    plain = _ring_part(spec, "1", augmented=False)
    assert T.augmented and T.num_states == 2 * 2 * kd
    assert check_dwell_scenarios(T, kd) == []
    # initial states have counter 0, secret states span every (mode, counter)
    assert all(T.labels[s][2] == 0 for s in T.initial.tolist())
    assert len(T.secret) == 2 * kd
    # every augmented step projects onto a plain step under the same mode and input
    plain_edges = {tuple(r) for r in plain.transitions.tolist()}
    P = 2
    seen = set()
    for s, u, w, d in T.transitions.tolist():
        ks, kd_ = s // (P * kd), d // (P * kd)
        assert (ks, u, w, kd_) in plain_edges
        seen.add(dwell_scenario(T.labels[s], T.inputs[u], T.labels[d], kd))
    if kd == 1:
        assert seen == {2, 3}
        # switching is allowed at every step
        assert any(T.labels[d][1] != T.labels[s][1] for s, _, _, d in T.transitions.tolist())
    else:
        assert seen == {1, 2, 3}


def test_scenario_classifier():
    assert dwell_scenario(((0.2,), 1, 0), 1, ((0.4,), 1, 1), 3) == 1
    assert dwell_scenario(((0.2,), 1, 2), 1, ((0.4,), 1, 2), 3) == 2
    assert dwell_scenario(((0.2,), 1, 2), 1, ((0.4,), 2, 0), 3) == 3
    assert dwell_scenario(((0.2,), 1, 0), 1, ((0.4,), 2, 0), 3) is None
    assert dwell_scenario(((0.2,), 1, 0), 2, ((0.4,), 1, 1), 3) is None


def test_condition_1a_sampling(ring3):
    # every secret initial concrete state has an abstract secret initial partner within 0.25
    rng = np.random.default_rng(3)
    for name in ring3.names:
        sub = ring3.subsystem(name)
        T = _ring_part(ring3, name)
        partners = np.array([T.labels[s][0] for s in T.secret.tolist() if s in set(T.initial.tolist())])
        for box in sub.secret_set.boxes:
            iv = box.intervals[0]
            for x in rng.uniform(iv.lo, iv.hi, 200):
                if sub.secret_set.contains([x]) and sub.initial_set.contains([x]):
                    assert np.abs(partners - x).min() <= 0.25 + 1e-12


def test_condition_3a_sampling(ring3):
    sub = ring3.subsystem("2")
    T = _ring_part(ring3, "2")
    pts = np.array([lab[0][0] for lab in T.labels])
    ws = T.internal_inputs.ravel()
    rng = np.random.default_rng(11)
    eps = theta = 0.25
    checked = 0
    while checked < 1000:
        x, w = rng.uniform(0, 0.6), rng.uniform(0, 0.6)
        i, j, p = rng.integers(2), rng.integers(2), rng.integers(2)
        if abs(x - pts[i]) > eps or abs(w - ws[j]) > theta:
            continue
        checked += 1
        xn = A_VAL[p] * x + D_VAL * w + B_VAL[p]
        succ = T.successors(int(i), int(p), int(j))
        assert succ, "ring abstraction must not block"
        assert min(abs(xn - pts[s]) for s in succ) <= eps + 1e-12
    assert sub.n == 1


def test_open_system_dump_shape(ring3):
    doc = to_document(_ring_part(ring3, "3"))
    assert all(len(r) == 4 for r in doc["transitions"])
    assert len(doc["transitions"]) == len(_oracle_edges("3"))
