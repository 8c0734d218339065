"""JSON documents and Graphviz export."""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path
from typing import Any

from .transys import FiniteTransitionSystem, from_document, to_document

FORMAT_VERSION = 1


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "item") and callable(obj.item):
        return obj.item()
    return obj


def dumps(obj: Any) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def write_json(obj: Any, path: str | Path | None) -> None:
    text = dumps(obj)
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def read_json(path: str | Path) -> Any:
    with open(path) as fh:
        return json.load(fh)


def bundle_document(systems) -> dict:
    return {"format_version": FORMAT_VERSION, "kind": "bundle", "systems": [to_document(T) for T in systems]}


def load_systems(path: str | Path) -> list[FiniteTransitionSystem]:
    """Systems from a single dump or a bundle of dumps."""
    doc = read_json(path)
    if isinstance(doc, dict) and doc.get("kind") == "bundle":
        return [from_document(d) for d in doc["systems"]]
    return [from_document(doc)]


def _fmt_vec(v) -> str:
    return "(" + ", ".join(f"{x:g}" for x in v) + ")"


def _fmt_label(u) -> str:
    if isinstance(u, (tuple, list)):
        return "".join(str(x) for x in u) if all(len(str(x)) == 1 for x in u) else ",".join(map(str, u))
    return str(u)


def _state_text(T: FiniteTransitionSystem, k: int) -> str:
    lab = T.labels[k]
    if T.kind == "network":
        head = f"z{k}"
    else:
        point, mode, counter = lab
        head = _fmt_vec(point) if point else f"q{k}"
        if mode is not None:
            head += f", {mode}, {counter}"
    return f"{head}\\ny={_fmt_vec(T.outputs[k])}"


def to_dot(T: FiniteTransitionSystem, *, secret_fill: str = "#c0392b") -> str:
    """Graphviz digraph: outputs inside nodes, input labels on edges.

    Secret states are filled; initial states get an arrow from an invisible
    point node.  Parallel transitions are merged into one edge.
    """
    secret = set(int(s) for s in T.secret)
    lines = [f'digraph "{T.name}" {{', "  rankdir=LR;", '  node [shape=circle, fontsize=10];']
    for k in range(T.num_states):
        attrs = [f'label="{_state_text(T, k)}"']
        if k in secret:
            attrs += ["style=filled", f'fillcolor="{secret_fill}"', "fontcolor=white"]
        lines.append(f"  s{k} [{', '.join(attrs)}];")
    for k in (int(s) for s in T.initial):
        lines.append(f"  init{k} [shape=point, style=invis];")
        lines.append(f"  init{k} -> s{k};")
    merged: dict = {}
    for s, u, w, d in T.transitions:
        text = _fmt_label(T.inputs[u])
        if w >= 0 and T.internal_inputs is not None:
            text += "/" + _fmt_vec(T.internal_inputs[w])
        merged.setdefault((int(s), int(d)), []).append(text)
    for (s, d), labs in sorted(merged.items()):
        uniq = list(dict.fromkeys(labs))
        lines.append(f'  s{s} -> s{d} [label="{", ".join(uniq)}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
