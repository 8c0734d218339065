import copy

import numpy as np
import pytest

from swopacity.gains import IDENTITY, GainFunction, gain_eval
from swopacity.model import (KAPPA_FLOOR, AffineMode, InstabilityError, SpecError, WellPosednessError,
                             derive_affine_certificate, network_spec_to_document, parse_network_spec, span_bound)
from swopacity.ring import ring_document


def test_ring_parses(ring3):
    assert ring3.names == ("1", "2", "3")
    assert set(ring3.edges) == {("3", "1"), ("1", "2"), ("2", "3")}
    sub = ring3.subsystem("2")
    assert sub.neighbors == ("1",)
    assert sub.modes[1].A[0, 0] == 0.1 and sub.modes[1].b[0] == 0.15
    assert sub.dwell_time == 1


def test_single_subsystem_has_no_adjacency():
    spec = parse_network_spec(ring_document(1))
    assert spec.edges == ()
    sub = spec.subsystems[0]
    assert sub.input_blocks == ()
    assert sub.m == 0
    assert [b.target for b in sub.output_blocks] == ["1"]


def test_output_wider_than_input_is_rejected():
    doc = ring_document(3)
    doc["subsystems"][1]["internal_inputs"]["1"] = "(0, 0.5)"
    with pytest.raises(WellPosednessError) as exc:
        parse_network_spec(doc)
    assert exc.value.edge == ("1", "2")


def test_dimension_mismatch_is_rejected():
    doc = ring_document(2)
    doc["subsystems"][1]["internal_inputs"]["1"] = ["(0, 0.6)", "(0, 0.6)"]
    for m in doc["subsystems"][1]["modes"]:
        m["D"] = [["0.05", "0"]]
    with pytest.raises(WellPosednessError):
        parse_network_spec(doc)


@pytest.mark.parametrize("mutate", [
    lambda d: d["subsystems"][0].pop("modes"),
    lambda d: d["subsystems"][0].update(state_set=5),
    lambda d: d.update(adjacency=[["1", "9"]]),
    lambda d: d["secrets"].update({"1": ["(0, 0.9)"]}),
    lambda d: d["subsystems"][0]["modes"][0].update(A=[["0.1", "0.2"]]),
])
def test_schema_and_consistency_errors(mutate):
    doc = ring_document(3)
    mutate(doc)
    with pytest.raises(SpecError):
        parse_network_spec(doc)


def test_canonical_round_trip(ring3):
    doc = network_spec_to_document(ring3)
    again = parse_network_spec(copy.deepcopy(doc))
    assert again == ring3
    assert network_spec_to_document(again) == doc


def test_ring_certificate(ring3):
    cert = derive_affine_certificate(ring3.subsystem("1"))
    assert cert.kappa == (0.05, 0.1)
    assert all(g == GainFunction(0.05) for g in cert.rho)
    assert cert.mu == 1.0 and cert.common_lyapunov
    assert cert.alpha == IDENTITY


def test_zero_dynamics_clamps_kappa():
    doc = ring_document(1)
    for m in doc["subsystems"][0]["modes"]:
        m["A"] = [["0"]]
    cert = derive_affine_certificate(parse_network_spec(doc).subsystems[0])
    assert cert.kappa == (KAPPA_FLOOR, KAPPA_FLOOR)


def test_unstable_mode_named():
    doc = ring_document(1)
    doc["subsystems"][0]["modes"][1]["A"] = [["1.2"]]
    with pytest.raises(InstabilityError) as exc:
        derive_affine_certificate(parse_network_spec(doc).subsystems[0])
    assert exc.value.mode == 2


def test_span_bound(ring3):
    assert span_bound(ring3.subsystem("1")) == pytest.approx(0.2)
    assert span_bound(ring3.subsystem("2")) == pytest.approx(0.2)
    # all-secret: only the secret span applies
    assert span_bound(ring3.subsystem("3")) == pytest.approx(0.6)


def test_certificate_inequality_on_random_modes():
    rng = np.random.default_rng(7)
    for _ in range(500):
        n, m = rng.integers(1, 4), rng.integers(0, 3)
        A = rng.uniform(-1, 1, (n, n))
        A *= rng.uniform(0.01, 0.99) / max(np.abs(A).sum(axis=1).max(), 1e-12)
        D = rng.uniform(-2, 2, (n, m))
        b = rng.uniform(-1, 1, n)
        mode = AffineMode(A, D, b)
        doc_mode = {"A": A.tolist(), "D": D.tolist() if m else [], "b": b.tolist()}
        doc = {"subsystems": [{"name": "s", "state_set": ["[-1, 1]"] * n, "modes": [doc_mode]}]}
        if m:
            # give the subsystem a neighbour so D has somewhere to read from
            doc["subsystems"].append({"name": "t", "state_set": ["[-1, 1]"] * m, "modes": [
                {"A": np.zeros((m, m)).tolist(), "b": [0] * m}]})
            doc["subsystems"][0]["internal_inputs"] = {"t": ["[-1, 1]"] * m}
            doc["adjacency"] = [["t", "s"]]
            doc["outputs"] = {"t": {"t": np.eye(m).tolist(), "s": np.eye(m).tolist()}}
        cert = derive_affine_certificate(parse_network_spec(doc).subsystems[0])
        x, xh = rng.uniform(-1, 1, n), rng.uniform(-1, 1, n)
        w, wh = rng.uniform(-1, 1, m), rng.uniform(-1, 1, m)
        lhs = np.abs(mode.image(x, w) - mode.image(xh, wh)).max()
        dw = np.abs(w - wh).max() if m else 0.0
        rhs = cert.kappa[0] * np.abs(x - xh).max() + gain_eval(cert.rho[0], dw)
        assert lhs <= rhs + 1e-12
