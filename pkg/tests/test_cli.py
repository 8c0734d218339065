import json
import subprocess
import sys

import pytest

from swopacity.cli import main
from swopacity.ring import ring_document


def _run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def _strip_timings(doc):
    doc = dict(doc)
    doc.pop("timings", None)
    return doc


@pytest.fixture()
def toy_dump(tmp_path):
    # secret initial state 0 has an output no other initial state shares
    doc = {"num_states": 3, "initial": [0, 1], "secret": [0], "outputs": [[1.0], [0.0], [0.0]],
           "transitions": [[0, 0, 2], [1, 0, 2], [2, 0, 2]]}
    path = tmp_path / "toy.json"
    path.write_text(json.dumps(doc))
    return path


def test_pipeline_ring3(ring3_config_path, tmp_path, capsys):
    out = tmp_path / "report.json"
    code, _, _ = _run(["pipeline", ring3_config_path, "--epsilon", "0.25", "--delta", "0.5", "-o", out], capsys)
    assert code == 0
    rep = json.loads(out.read_text())
    assert all(abs(s["eta"] - 0.2) < 1e-12 for s in rep["plan"]["subsystems"])
    assert rep["composition"]["states"] == 8
    assert rep["abstract_verdict"]["opaque"] and rep["abstract_verdict"]["delta"] == 0.0
    assert rep["concrete_verdict"]["opaque"] and rep["concrete_verdict"]["delta"] == 0.5
    for name, stats in rep["abstractions"].items():
        assert stats["states"] == 2
        assert stats["internal_input_grid"] == [[0.2], [0.4]]
    assert rep["small_gain"]["ok"]
    assert set(rep["timings"]) == {"design", "abstract", "compose", "check"}


def test_pipeline_deterministic(ring3_config_path, tmp_path, capsys):
    docs = []
    for k in range(2):
        out = tmp_path / f"r{k}.json"
        assert _run(["pipeline", ring3_config_path, "--epsilon", "0.25", "--delta", "0.5", "-o", out], capsys)[0] == 0
        docs.append(json.loads(out.read_text()))
    from swopacity.io import dumps
    assert dumps(_strip_timings(docs[0])) == dumps(_strip_timings(docs[1]))


def test_staged_commands(ring3_config_path, tmp_path, capsys):
    plan, parts, net, verdict = (tmp_path / n for n in ("plan.json", "parts.json", "net.json", "v.json"))
    assert _run(["design", ring3_config_path, "--epsilon", "0.25", "-o", plan], capsys)[0] == 0
    assert json.loads(plan.read_text())["validation"]["ok"]
    assert _run(["abstract", ring3_config_path, "--plan", plan, "-o", parts], capsys)[0] == 0
    bundle = json.loads(parts.read_text())
    assert bundle["kind"] == "bundle" and len(bundle["systems"]) == 3
    assert _run(["compose", parts, "--plan", plan, "-o", net], capsys)[0] == 0
    assert json.loads(net.read_text())["num_states"] == 8
    code, _, _ = _run(["check", net, "--delta", "0", "-o", verdict], capsys)
    assert code == 0 and json.loads(verdict.read_text())["status"] == "opaque"
    code, dot, _ = _run(["export", parts, "--index", "0"], capsys)
    assert code == 0 and dot.startswith('digraph "1"')


def test_check_counterexample(toy_dump, capsys):
    code, out, _ = _run(["check", toy_dump, "--delta", "0"], capsys)
    assert code == 1
    doc = json.loads(out)
    assert doc["status"] == "not-opaque"
    assert doc["counterexample"]["steps"][0]["state"] == 0
    assert doc["counterexample"]["empty_step"] == 0


def test_check_accepts_foreign_dump(toy_dump, capsys):
    # hand-written dump with no sidecar data; at delta 1 every output matches
    code, out, _ = _run(["check", toy_dump, "--delta", "1"], capsys)
    assert code == 0 and json.loads(out)["opaque"]


def test_export_dot(ring3_config_path, tmp_path, capsys):
    plan, parts = tmp_path / "plan.json", tmp_path / "parts.json"
    _run(["design", ring3_config_path, "--epsilon", "0.25", "-o", plan], capsys)
    _run(["abstract", ring3_config_path, "--plan", plan, "-o", parts], capsys)
    code, dot, _ = _run(["export", parts, "--index", "0", "--format", "dot"], capsys)
    assert code == 0
    assert dot.count("fillcolor") == 1                 # one secret state in subsystem 1
    assert dot.count("shape=point") == 2               # both states are initial
    assert "y=(0, 0.2)" in dot                         # output blocks inside the node body
    assert 'label="1/(0.2)' in dot or 'label="2/(0.2)' in dot
    code, _, err = _run(["export", parts], capsys)
    assert code == 2 and json.loads(err)["error"] == "InputError"


def test_verify_smallgain(ring3_config_path, tmp_path, capsys):
    code, out, _ = _run(["verify-smallgain", ring3_config_path], capsys)
    assert code == 0 and json.loads(out)["ok"]
    doc = ring_document(3)
    for agg in doc["aggregates"].values():
        agg["rho"] = 1.0
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    code, out, _ = _run(["verify-smallgain", bad], capsys)
    rep = json.loads(out)
    assert code == 1 and not rep["ok"] and rep["witness"] == ["1", "3", "2"]  # gamma_13 o gamma_32 o gamma_21


def test_input_errors(tmp_path, capsys):
    code, _, err = _run(["design", tmp_path / "missing.json", "--epsilon", "0.25"], capsys)
    assert code == 2 and json.loads(err)["error"] == "io"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"subsystems": []}))
    code, _, err = _run(["design", bad, "--epsilon", "0.25"], capsys)
    assert code == 2 and json.loads(err)["error"] == "spec"
    dump = tmp_path / "dump.json"
    dump.write_text(json.dumps({"num_states": 1}))
    code, _, err = _run(["check", dump, "--delta", "0"], capsys)
    assert code == 2 and json.loads(err)["error"] == "DumpError"


def test_infeasible_exit_code(tmp_path, capsys):
    doc = ring_document(3)
    for agg in doc["aggregates"].values():
        agg["rho"] = 1.0
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(doc))
    code, _, err = _run(["design", cfg, "--epsilon", "0.25"], capsys)
    assert code == 1 and json.loads(err)["error"] == "infeasible"


def test_transfer_hypothesis_exit_code(ring3_config_path, capsys):
    code, _, err = _run(["pipeline", ring3_config_path, "--epsilon", "0.25", "--delta", "0.4"], capsys)
    assert code == 1 and json.loads(err)["error"] == "transfer-hypothesis"


def test_console_entry_point(ring3_config_path):
    out = subprocess.run([sys.executable, "-m", "swopacity.cli", "verify-smallgain", str(ring3_config_path)],
                         capture_output=True, text=True)
    assert out.returncode == 0 and json.loads(out.stdout)["ok"]
