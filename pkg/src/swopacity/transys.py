"""Explicit finite transition systems and their JSON dump format."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Mapping

import jsonschema
import numpy as np

FORMAT_VERSION = 1


class DumpError(ValueError):
    pass


def _ro(a, dtype, ndim):
    arr = np.array(a, dtype=dtype, ndmin=ndim)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FiniteTransitionSystem:
    """Finite system with integer state ids ``0..n-1``.

    ``transitions`` rows are ``(src, u, w, dst)`` where ``u`` indexes
    ``inputs`` and ``w`` indexes ``internal_inputs`` (``-1`` when closed).
    ``labels`` is the sidecar mapping each id to what it stands for: a
    ``(point, mode, counter)`` triple for local abstractions (mode and
    counter are ``None`` unless dwell-time augmented) or a tuple of
    component ids for composed networks.
    """

    name: str
    labels: tuple
    initial: np.ndarray
    secret: np.ndarray
    inputs: tuple
    transitions: np.ndarray
    outputs: np.ndarray
    internal_inputs: np.ndarray | None = None
    output_layout: tuple = ()
    internal_blocks: tuple = ()
    augmented: bool = False
    kind: str = "local"
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.labels)
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "initial", _ro(sorted(set(int(s) for s in self.initial)), np.int64, 1))
        object.__setattr__(self, "secret", _ro(sorted(set(int(s) for s in self.secret)), np.int64, 1))
        tr = np.array(self.transitions, dtype=np.int64).reshape(-1, 4)
        if len(tr):
            tr = np.unique(tr, axis=0)
        tr.setflags(write=False)
        object.__setattr__(self, "transitions", tr)
        out = np.array(self.outputs, dtype=float).reshape(n, -1)
        out.setflags(write=False)
        object.__setattr__(self, "outputs", out)
        if self.internal_inputs is not None:
            object.__setattr__(self, "internal_inputs", _ro(self.internal_inputs, float, 2))
        for arr, what in ((self.initial, "initial"), (self.secret, "secret")):
            if len(arr) and (arr[0] < 0 or arr[-1] >= n):
                raise DumpError(f"{what} state id out of range")
        if len(tr):
            if tr[:, [0, 3]].min() < 0 or tr[:, [0, 3]].max() >= n:
                raise DumpError("transition refers to an unknown state")
            if tr[:, 1].min() < 0 or tr[:, 1].max() >= max(1, len(self.inputs)):
                raise DumpError("transition refers to an unknown input")
            nw = 0 if self.internal_inputs is None else len(self.internal_inputs)
            if self.is_closed and (tr[:, 2] != -1).any():
                raise DumpError("closed system carries internal-input labels")
            if not self.is_closed and (tr[:, 2].min() < 0 or tr[:, 2].max() >= nw):
                raise DumpError("transition refers to an unknown internal input")

    @property
    def num_states(self) -> int:
        return len(self.labels)

    @property
    def is_closed(self) -> bool:
        return self.internal_inputs is None

    @cached_property
    def post(self) -> np.ndarray:
        """Boolean successor matrix with all inputs merged."""
        P = np.zeros((self.num_states, self.num_states), dtype=bool)
        if len(self.transitions):
            P[self.transitions[:, 0], self.transitions[:, 3]] = True
        P.setflags(write=False)
        return P

    @cached_property
    def blocking(self) -> tuple[int, ...]:
        has = np.zeros(self.num_states, dtype=bool)
        has[self.transitions[:, 0]] = True
        return tuple(int(s) for s in np.nonzero(~has)[0])

    def successors(self, state: int, u: int | None = None, w: int | None = None) -> list[int]:
        tr = self.transitions
        mask = tr[:, 0] == state
        if u is not None:
            mask &= tr[:, 1] == u
        if w is not None:
            mask &= tr[:, 2] == w
        return sorted(set(int(d) for d in tr[mask, 3]))

    def stats(self) -> dict:
        return {
            "states": self.num_states,
            "transitions": int(len(self.transitions)),
            "initial": int(len(self.initial)),
            "secret": int(len(self.secret)),
            "inputs": len(self.inputs),
            "internal_inputs": 0 if self.internal_inputs is None else int(len(self.internal_inputs)),
            "blocking_states": len(self.blocking),
        }

    def __repr__(self) -> str:
        s = self.stats()
        return (f"FiniteTransitionSystem({self.name!r}, kind={self.kind}, states={s['states']}, "
                f"transitions={s['transitions']}, augmented={self.augmented})")


# ------------------------------------------------------------------ dumps

DUMP_SCHEMA = {
    "type": "object",
    "required": ["num_states", "initial", "secret", "outputs", "transitions"],
    "properties": {
        "format_version": {"type": "integer"},
        "kind": {"enum": ["local", "network"]},
        "name": {"type": "string"},
        "num_states": {"type": "integer", "minimum": 0},
        "states": {"type": "array"},
        "initial": {"type": "array", "items": {"type": "integer"}},
        "secret": {"type": "array", "items": {"type": "integer"}},
        "inputs": {"type": "array"},
        "internal_inputs": {"type": ["array", "null"], "items": {"type": "array", "items": {"type": "number"}}},
        "internal_blocks": {"type": "array"},
        "outputs": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
        "output_layout": {"type": "array"},
        "transitions": {"type": "array", "items": {"type": "array", "items": {"type": "integer"},
                                                   "minItems": 3, "maxItems": 4}},
        "augmented": {"type": "boolean"},
    },
}


def _label_out(label, kind):
    if kind == "network":
        return {"components": [int(c) for c in label]}
    point, mode, counter = label
    return {"point": [float(v) for v in point], "mode": mode, "counter": counter}


def _label_in(entry, kind):
    if kind == "network":
        return tuple(int(c) for c in entry["components"])
    return (tuple(float(v) for v in entry["point"]), entry.get("mode"), entry.get("counter"))


def _input_label_out(label):
    return list(label) if isinstance(label, tuple) else label


def _input_label_in(label):
    return tuple(label) if isinstance(label, list) else label


def to_document(T: FiniteTransitionSystem) -> dict:
    closed = T.is_closed
    tr = T.transitions
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": T.kind,
        "name": T.name,
        "num_states": T.num_states,
        "states": [dict(id=k, **_label_out(lab, T.kind)) for k, lab in enumerate(T.labels)],
        "initial": [int(s) for s in T.initial],
        "secret": [int(s) for s in T.secret],
        "inputs": [_input_label_out(u) for u in T.inputs],
        "internal_inputs": None if closed else T.internal_inputs.tolist(),
        "internal_blocks": [dict(b) for b in T.internal_blocks],
        "outputs": T.outputs.tolist(),
        "output_layout": [{"target": t, "start": a, "stop": b} for t, a, b in T.output_layout],
        "transitions": (tr[:, [0, 1, 3]] if closed else tr).tolist(),
        "augmented": bool(T.augmented),
        "blocking": list(T.blocking),
    }
    if T.meta:
        doc["meta"] = dict(T.meta)
    return doc


def from_document(doc: Mapping) -> FiniteTransitionSystem:
    """Load a dump; only ``num_states``, ``initial``, ``secret``, ``outputs`` and ``transitions`` are required."""
    try:
        jsonschema.validate(doc, DUMP_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise DumpError(f"dump schema violation at {where}: {exc.message}") from None
    n = doc["num_states"]
    kind = doc.get("kind", "network")
    if "states" in doc and doc["states"]:
        if len(doc["states"]) != n:
            raise DumpError("states sidecar length differs from num_states")
        try:
            labels = tuple(_label_in(e, kind) for e in doc["states"])
        except (KeyError, TypeError) as exc:
            raise DumpError(f"malformed states sidecar: {exc}") from None
    else:
        labels = tuple((k,) for k in range(n)) if kind == "network" else tuple(((), None, None) for _ in range(n))
    if len(doc["outputs"]) != n:
        raise DumpError("outputs must list one vector per state")
    closed = doc.get("internal_inputs") is None
    rows = doc["transitions"]
    if closed:
        if any(len(r) != 3 for r in rows):
            raise DumpError("closed systems list transitions as [src, input, dst]")
        tr = np.array([[r[0], r[1], -1, r[2]] for r in rows], dtype=np.int64).reshape(-1, 4)
    else:
        if any(len(r) != 4 for r in rows):
            raise DumpError("open systems list transitions as [src, input, internal_input, dst]")
        tr = np.array(rows, dtype=np.int64).reshape(-1, 4)
    if "inputs" in doc:
        inputs = tuple(_input_label_in(u) for u in doc["inputs"])
    else:
        inputs = tuple(range(int(tr[:, 1].max()) + 1 if len(tr) else 1))
    layout = tuple((e["target"], int(e["start"]), int(e["stop"])) for e in doc.get("output_layout", []))
    width = len(doc["outputs"][0]) if n else 0
    outputs = np.array(doc["outputs"], dtype=float).reshape(n, width)
    return FiniteTransitionSystem(
        name=doc.get("name", "system"), labels=labels, initial=doc["initial"], secret=doc["secret"],
        inputs=inputs, transitions=tr, outputs=outputs,
        internal_inputs=None if closed else np.array(doc["internal_inputs"], dtype=float),
        output_layout=layout, internal_blocks=tuple(doc.get("internal_blocks", [])),
        augmented=bool(doc.get("augmented", False)), kind=kind, meta=dict(doc.get("meta", {})),
    )
