"""Subsystems, networks and stability certificates.

A network document is parsed into an immutable :class:`NetworkSpec`.  Every
subsystem has affine modes ``x+ = A_p x + D_p w + b_p``, where ``w`` is the
concatenation of the internal-input blocks received from its neighbours in
ascending neighbour order, and a block-structured linear output map.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import jsonschema
import numpy as np

from .gains import IDENTITY, ZERO, GainFunction, gain_compose, gain_invert, gain_max
from .sets import BoxUnion, IntervalBox, linear_image

FORMAT_VERSION = 1
KAPPA_FLOOR = 1e-9
DEFAULT_TUNING_EXPONENT = 2.0


class SpecError(ValueError):
    """Malformed or inconsistent network description."""


class WellPosednessError(SpecError):
    def __init__(self, message: str, edge: tuple[str, str]):
        super().__init__(message)
        self.edge = edge


class InstabilityError(ValueError):
    def __init__(self, message: str, mode: int):
        super().__init__(message)
        self.mode = mode


def _frozen(a, ndim: int) -> np.ndarray:
    arr = np.array(a, dtype=float, ndmin=ndim)
    arr.setflags(write=False)
    return arr


def inf_norm(M) -> float:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0.0
    return float(np.abs(M).sum(axis=1).max())


@dataclass(frozen=True, eq=False)
class AffineMode:
    A: np.ndarray
    D: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = _frozen(self.A, 2)
        b = _frozen(self.b, 1)
        n = A.shape[0]
        D = np.asarray(self.D, dtype=float)
        if D.size == 0:
            D = np.zeros((n, 0))
        D = _frozen(D, 2)
        if A.shape != (n, n):
            raise SpecError(f"state matrix must be square, got {A.shape}")
        if D.shape[0] != n or b.shape != (n,):
            raise SpecError(f"mode shapes disagree: A {A.shape}, D {D.shape}, b {b.shape}")
        if not (np.isfinite(A).all() and np.isfinite(D).all() and np.isfinite(b).all()):
            raise SpecError("mode data must be finite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.D.shape[1]

    def image(self, x, w) -> np.ndarray:
        """Vectorised ``A x + D w + b``; rows of ``x``/``w`` are points."""
        x = np.asarray(x, dtype=float)
        w = np.asarray(w, dtype=float)
        return x @ self.A.T + w @ self.D.T + self.b

    def __eq__(self, other):
        if not isinstance(other, AffineMode):
            return NotImplemented
        return (np.array_equal(self.A, other.A) and np.array_equal(self.D, other.D)
                and np.array_equal(self.b, other.b))

    __hash__ = None


@dataclass(frozen=True)
class InputBlock:
    source: str
    box: IntervalBox

    @property
    def dim(self) -> int:
        return self.box.dim


@dataclass(frozen=True, eq=False)
class OutputBlock:
    target: str
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(self.matrix, 2))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __eq__(self, other):
        if not isinstance(other, OutputBlock):
            return NotImplemented
        return self.target == other.target and np.array_equal(self.matrix, other.matrix)

    __hash__ = None


@dataclass(frozen=True)
class SwitchedSubsystem:
    name: str
    index: int
    modes: tuple
    state_set: BoxUnion
    initial_set: BoxUnion
    secret_set: BoxUnion
    input_blocks: tuple[InputBlock, ...] = ()
    output_blocks: tuple[OutputBlock, ...] = ()
    dwell_time: int = 1
    lyapunov: str = "common"
    pinned: Mapping | None = None
    # optional vectorised evaluator f(mode_index, X, W) -> X+ for non-affine modes
    dynamics: Callable | None = field(default=None, compare=False)

    @property
    def n(self) -> int:
        return self.state_set.dim

    @property
    def m(self) -> int:
        return sum(b.dim for b in self.input_blocks)

    @property
    def mode_labels(self) -> tuple[int, ...]:
        return tuple(range(1, len(self.modes) + 1))

    @property
    def neighbors(self) -> tuple[str, ...]:
        return tuple(b.source for b in self.input_blocks)

    @property
    def internal_input_box(self) -> IntervalBox | None:
        if not self.input_blocks:
            return None
        return IntervalBox(tuple(iv for blk in self.input_blocks for iv in blk.box.intervals))

    def input_slices(self) -> dict[str, slice]:
        out, k = {}, 0
        for blk in self.input_blocks:
            out[blk.source] = slice(k, k + blk.dim)
            k += blk.dim
        return out

    def output_block(self, target: str) -> OutputBlock | None:
        for blk in self.output_blocks:
            if blk.target == target:
                return blk
        return None

    @property
    def output_matrix(self) -> np.ndarray:
        """All declared output blocks stacked in declaration order."""
        if not self.output_blocks:
            return np.zeros((0, self.n))
        return np.vstack([blk.matrix for blk in self.output_blocks])

    def output_layout(self) -> list[tuple[str, int, int]]:
        out, k = [], 0
        for blk in self.output_blocks:
            out.append((blk.target, k, k + blk.dim))
            k += blk.dim
        return out

    def mode_image(self, p: int, x, w) -> np.ndarray:
        """Image under the ``p``-th mode (0-based) for rows of ``x`` and ``w``."""
        if self.dynamics is not None:
            return np.asarray(self.dynamics(p, np.atleast_2d(x), np.atleast_2d(w)), dtype=float)
        return self.modes[p].image(x, w)


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    subsystems: tuple[SwitchedSubsystem, ...]
    edges: tuple[tuple[str, str], ...]  # (source j, target i): y_ji feeds w_ij

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.subsystems)

    def subsystem(self, name: str) -> SwitchedSubsystem:
        for s in self.subsystems:
            if s.name == name:
                return s
        raise KeyError(name)

    def neighbors(self, name: str) -> tuple[str, ...]:
        return self.subsystem(name).neighbors


@dataclass(frozen=True)
class StabilityCertificate:
    """Data of a delta-ISS certificate with ``V_p`` semantics per mode."""

    kappa: tuple[float, ...]
    rho: tuple[GainFunction, ...]
    alpha_lower: tuple[GainFunction, ...]
    alpha_upper: tuple[GainFunction, ...]
    gamma: tuple[GainFunction, ...]
    ell: GainFunction
    mu: float = 1.0
    epsilon: float | None = None
    common_lyapunov: bool = True
    alpha: GainFunction = field(default=None)

    def __post_init__(self):
        m = len(self.kappa)
        if m == 0:
            raise ValueError("certificate needs at least one mode")
        for name in ("rho", "alpha_lower", "alpha_upper", "gamma"):
            if len(getattr(self, name)) != m:
                raise ValueError(f"{name} must have one entry per mode")
        for p, k in enumerate(self.kappa):
            if not 0 < k < 1:
                raise ValueError(f"contraction factor of mode {p + 1} must lie in (0, 1), got {k}")
        if self.mu < 1:
            raise ValueError(f"mode-switch factor must be >= 1, got {self.mu}")
        if not self.common_lyapunov:
            eps = DEFAULT_TUNING_EXPONENT if self.epsilon is None else self.epsilon
            if eps <= 1:
                raise ValueError(f"tuning exponent must exceed 1, got {eps}")
            object.__setattr__(self, "epsilon", float(eps))
        if self.alpha is None:
            object.__setattr__(self, "alpha", output_distance_gain(self.ell, self.alpha_lower))

    @property
    def num_modes(self) -> int:
        return len(self.kappa)


def output_distance_gain(ell: GainFunction, alpha_lower: Sequence[GainFunction]) -> GainFunction:
    """Inverse of ``max_p ell o alpha_lower_p^{-1}``.

    A zero Lipschitz gain means outputs never differ; identity is returned
    as a conservative stand-in.
    """
    worst = gain_max(gain_compose(ell, gain_invert(a)) for a in alpha_lower)
    if worst.is_zero:
        return IDENTITY
    return gain_invert(worst)


def derive_affine_certificate(sub: SwitchedSubsystem, kappa_floor: float = KAPPA_FLOOR) -> StabilityCertificate:
    """Certificate for ``V(x, x') = ||x - x'||_inf`` shared by all affine modes."""
    if sub.dynamics is not None or not all(isinstance(m, AffineMode) for m in sub.modes):
        raise SpecError(f"subsystem {sub.name}: non-affine modes need a user-supplied certificate")
    kappa, rho = [], []
    for p, mode in enumerate(sub.modes):
        k = inf_norm(mode.A)
        if k >= 1:
            raise InstabilityError(
                f"subsystem {sub.name}: mode {p + 1} has ||A||_inf = {k:g} >= 1 (unstable modes unsupported)", p + 1)
        kappa.append(max(k, kappa_floor))
        d = inf_norm(mode.D)
        rho.append(GainFunction(d) if d > 0 else ZERO)
    ell_c = max((inf_norm(blk.matrix) for blk in sub.output_blocks), default=0.0)
    m = len(sub.modes)
    common = sub.lyapunov == "common"
    return StabilityCertificate(
        kappa=tuple(kappa), rho=tuple(rho),
        alpha_lower=(IDENTITY,) * m, alpha_upper=(IDENTITY,) * m, gamma=(IDENTITY,) * m,
        ell=GainFunction(ell_c) if ell_c > 0 else ZERO,
        mu=1.0, epsilon=None if common else DEFAULT_TUNING_EXPONENT, common_lyapunov=common,
    )


# --------------------------------------------------------------------------
# document parsing

_NUM = {"type": ["number", "string"]}
_MATRIX = {"type": "array", "items": {"type": "array", "items": _NUM}}
_BOX = {"anyOf": [{"type": "string"}, {"type": "array", "items": {"type": "string"}, "minItems": 1}]}
_UNION = {"anyOf": [_BOX, {"type": "array", "items": _BOX}]}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["subsystems"],
    "properties": {
        "format_version": {"type": "integer"},
        "name": {"type": "string"},
        "subsystems": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object",
                "required": ["name", "state_set", "modes"],
                "properties": {
                    "name": {"type": ["string", "integer"]},
                    "state_set": _UNION,
                    "initial_set": _UNION,
                    "modes": {
                        "type": "array", "minItems": 1,
                        "items": {
                            "type": "object", "required": ["A", "b"],
                            "properties": {"A": _MATRIX, "D": _MATRIX, "b": {"type": "array", "items": _NUM}},
                        },
                    },
                    "internal_inputs": {"type": "object", "additionalProperties": _BOX},
                    "lyapunov": {"enum": ["common", "multiple"]},
                },
            },
        },
        "adjacency": {"type": "array", "items": {"type": "array", "items": {"type": ["string", "integer"]},
                                                 "minItems": 2, "maxItems": 2}},
        "dwell_time": {"anyOf": [{"type": "integer", "minimum": 1},
                                 {"type": "object", "additionalProperties": {"type": "integer", "minimum": 1}}]},
        "secrets": {"type": "object", "additionalProperties": {"type": "array"}},
        "outputs": {"type": "object", "additionalProperties": {"type": "object", "additionalProperties": _MATRIX}},
        "aggregates": {"type": "object", "additionalProperties": {"type": "object"}},
    },
}


def _num_array(obj, ndim: int) -> np.ndarray:
    def conv(v):
        if isinstance(v, list):
            return [conv(u) for u in v]
        return float(v)
    return np.array(conv(obj), dtype=float, ndmin=ndim)


def parse_network_spec(document: Mapping) -> NetworkSpec:
    """Validate a network document and build a :class:`NetworkSpec`."""
    try:
        jsonschema.validate(document, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SpecError(f"schema violation at {where}: {exc.message}") from None
    version = document.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise SpecError(f"unsupported format_version {version}")

    raw_subs = document["subsystems"]
    names = [str(s["name"]) for s in raw_subs]
    if len(set(names)) != len(names):
        raise SpecError("subsystem names must be unique")
    order = {n: k for k, n in enumerate(names)}

    edges = []
    for src, dst in document.get("adjacency", []):
        src, dst = str(src), str(dst)
        for n in (src, dst):
            if n not in order:
                raise SpecError(f"adjacency refers to unknown subsystem {n!r}")
        if src == dst:
            raise SpecError(f"self-loop {src} -> {dst} is not an interconnection")
        edges.append((src, dst))
    if len(set(edges)) != len(edges):
        raise SpecError("duplicate adjacency entry")

    dwell = document.get("dwell_time", 1)
    secrets = {str(k): v for k, v in document.get("secrets", {}).items()}
    outputs = {str(k): {str(t): m for t, m in v.items()} for k, v in document.get("outputs", {}).items()}
    aggregates = {str(k): v for k, v in document.get("aggregates", {}).items()}
    for section, keys in (("secrets", secrets), ("outputs", outputs), ("aggregates", aggregates)):
        for k in keys:
            if k not in order:
                raise SpecError(f"{section} refers to unknown subsystem {k!r}")

    subs = []
    for idx, raw in enumerate(raw_subs):
        name = names[idx]
        try:
            state_set = BoxUnion.parse(raw["state_set"])
            initial_set = BoxUnion.parse(raw.get("initial_set", raw["state_set"]), state_set.dim)
            secret_set = BoxUnion.parse(secrets.get(name, []), state_set.dim)
        except ValueError as exc:
            raise SpecError(f"subsystem {name}: {exc}") from None
        if state_set.is_empty:
            raise SpecError(f"subsystem {name}: empty state set")
        n = state_set.dim
        if not initial_set.within(state_set):
            raise SpecError(f"subsystem {name}: initial set is not contained in the state set")
        if not secret_set.within(state_set):
            raise SpecError(f"subsystem {name}: secret set is not contained in the state set")

        sources = sorted((s for s, d in edges if d == name), key=order.__getitem__)
        declared_inputs = {str(k): v for k, v in raw.get("internal_inputs", {}).items()}
        if set(declared_inputs) != set(sources):
            raise SpecError(
                f"subsystem {name}: internal input blocks {sorted(declared_inputs)} do not match "
                f"the neighbours declared in adjacency {sources}")
        try:
            blocks = tuple(InputBlock(s, IntervalBox.parse(declared_inputs[s])) for s in sources)
        except ValueError as exc:
            raise SpecError(f"subsystem {name}: {exc}") from None
        m = sum(b.dim for b in blocks)

        modes = []
        for p, rm in enumerate(raw["modes"]):
            A = _num_array(rm["A"], 2)
            b = _num_array(rm["b"], 1)
            D = _num_array(rm["D"], 2) if "D" in rm else np.zeros((n, m))
            if D.size == 0:
                D = np.zeros((n, m))
            if A.shape != (n, n) or b.shape != (n,) or D.shape != (n, m):
                raise SpecError(
                    f"subsystem {name}, mode {p + 1}: expected A {(n, n)}, D {(n, m)}, b {(n,)}; "
                    f"got A {A.shape}, D {D.shape}, b {b.shape}")
            modes.append(AffineMode(A, D, b))

        out_blocks = []
        for target, mat in outputs.get(name, {}).items():
            if target not in order:
                raise SpecError(f"subsystem {name}: output block for unknown subsystem {target!r}")
            C = _num_array(mat, 2)
            if C.shape[1] != n:
                raise SpecError(f"subsystem {name}: output block to {target} has {C.shape[1]} columns, "
                                f"state dimension is {n}")
            if target != name:
                if (name, target) not in edges and np.any(C != 0):
                    raise SpecError(f"subsystem {name}: nonzero output to {target} without an adjacency entry")
                if (name, target) in edges and not np.any(C != 0):
                    raise SpecError(f"subsystem {name}: output to neighbour {target} is identically zero")
                if (name, target) not in edges:
                    continue
            out_blocks.append(OutputBlock(target, C))
        out_blocks.sort(key=lambda blk: order[blk.target])
        for s, d in edges:
            if s == name and not any(blk.target == d for blk in out_blocks):
                raise SpecError(f"subsystem {name}: adjacency {s} -> {d} has no output block")

        kd = dwell if isinstance(dwell, int) else dwell.get(name, dwell.get("default", 1))
        subs.append(SwitchedSubsystem(
            name=name, index=idx, modes=tuple(modes), state_set=state_set, initial_set=initial_set,
            secret_set=secret_set, input_blocks=blocks, output_blocks=tuple(out_blocks),
            dwell_time=int(kd), lyapunov=raw.get("lyapunov", "common"),
            pinned=dict(aggregates[name]) if name in aggregates else None,
        ))

    spec = NetworkSpec(name=str(document.get("name", "network")), subsystems=tuple(subs), edges=tuple(edges))
    check_well_posed(spec)
    return spec


def check_well_posed(spec: NetworkSpec) -> None:
    """Every interconnection must satisfy ``dim y_ji = dim w_ij`` and ``Y_ji within W_ij``."""
    for src, dst in spec.edges:
        sj, si = spec.subsystem(src), spec.subsystem(dst)
        blk_out = sj.output_block(dst)
        blk_in = next(b for b in si.input_blocks if b.source == src)
        if blk_out.dim != blk_in.dim:
            raise WellPosednessError(
                f"edge {src} -> {dst}: output block has dimension {blk_out.dim}, "
                f"internal input block has dimension {blk_in.dim}", (src, dst))
        for box in sj.state_set.boxes:
            image = linear_image(box, blk_out.matrix)
            for d, (iv, w_iv) in enumerate(zip(image, blk_in.box.intervals)):
                if not iv.within(w_iv):
                    raise WellPosednessError(
                        f"edge {src} -> {dst}: output range {iv} in component {d} is not contained "
                        f"in the internal input set {w_iv}", (src, dst))


def _num_out(v: float):
    v = float(v)
    return int(v) if v.is_integer() and abs(v) < 2**53 else v


def _matrix_out(M) -> list:
    return [[_num_out(v) for v in row] for row in np.atleast_2d(M)]


def network_spec_to_document(spec: NetworkSpec) -> dict:
    """Canonical document for ``spec``; ``parse_network_spec`` inverts it."""
    subs, secrets, outputs, aggregates, dwell = [], {}, {}, {}, {}
    for s in spec.subsystems:
        entry = {
            "name": s.name,
            "state_set": s.state_set.to_json(),
            "initial_set": s.initial_set.to_json(),
            "modes": [{"A": _matrix_out(m.A), "D": _matrix_out(m.D) if m.m else [],
                       "b": [_num_out(v) for v in m.b]} for m in s.modes],
            "lyapunov": s.lyapunov,
        }
        if s.input_blocks:
            entry["internal_inputs"] = {b.source: b.box.to_json() for b in s.input_blocks}
        subs.append(entry)
        secrets[s.name] = s.secret_set.to_json()
        outputs[s.name] = {b.target: _matrix_out(b.matrix) for b in s.output_blocks}
        dwell[s.name] = s.dwell_time
        if s.pinned is not None:
            aggregates[s.name] = dict(s.pinned)
    doc = {
        "format_version": FORMAT_VERSION,
        "name": spec.name,
        "subsystems": subs,
        "adjacency": [list(e) for e in spec.edges],
        "dwell_time": dwell,
        "secrets": secrets,
        "outputs": outputs,
    }
    if aggregates:
        doc["aggregates"] = aggregates
    return doc


def span_bound(sub: SwitchedSubsystem) -> float:
    """``min(span(X_s), span(X \\ X_s))``; empty pieces impose no bound."""
    rest = sub.state_set.difference(sub.secret_set)
    return min(sub.secret_set.span, rest.span)

