"""Dense statevector simulator, Grover operator and canonical amplitude estimation.

Qubit ``q`` is bit ``q`` of the basis-state index (little endian). Internally
the amplitude vector is viewed as a tensor with one axis per qubit, so a gate
with controls only touches the slice where every control matches.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_QUBIT_CAP = 26
QUBIT_CAP_ENV = "QGSHAP_MAX_QUBITS"
MAX_EVAL_QUBITS = 10


def qubit_cap() -> int:
    return int(os.environ.get(QUBIT_CAP_ENV, DEFAULT_QUBIT_CAP))


class BudgetExceeded(ValueError):
    """Requested circuit does not fit the simulation budget."""


@dataclass(frozen=True)
class RegisterLayout:
    """Contiguous named spans: partition, player, utility, then evaluation."""

    partition: int
    player: int
    utility: int = 1
    evaluation: int = 0

    def __post_init__(self):
        if self.partition < 1 or self.player < 1 or self.utility != 1:
            raise ValueError("layout needs >= 1 partition qubit, >= 1 player qubit and exactly 1 utility qubit")
        if self.evaluation < 0:
            raise ValueError("evaluation register size must be non-negative")

    @property
    def total_qubits(self) -> int:
        return self.partition + self.player + self.utility + self.evaluation

    @property
    def working_qubits(self) -> int:
        return self.partition + self.player + self.utility

    def span(self, name: str) -> range:
        start = 0
        for reg in ("partition", "player", "utility", "evaluation"):
            size = getattr(self, reg)
            if reg == name:
                return range(start, start + size)
            start += size
        raise KeyError(name)

    def qubit(self, name: str, i: int = 0) -> int:
        sp = self.span(name)
        if not 0 <= i < len(sp):
            raise IndexError(f"{name}[{i}] out of range")
        return sp[i]

    def with_evaluation(self, m: int) -> "RegisterLayout":
        return RegisterLayout(self.partition, self.player, self.utility, m)


# --------------------------------------------------------------------------
# gates

_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_X = np.array([[0, 1], [1, 0]], dtype=complex)

KINDS = ("ry", "h", "x", "phase", "reflect0")


@dataclass(frozen=True)
class GateOp:
    """One gate. ``reflect0`` acts on ``span`` as ``2|0><0| - I``; others on ``target``.

    ``controls``/``control_values`` give the control qubits and the bit value
    each must hold for the gate to fire (``1`` by default).
    """

    kind: str
    target: Optional[int] = None
    angle: float = 0.0
    controls: tuple = ()
    control_values: tuple = ()
    span: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        ctrl = tuple(int(c) for c in self.controls)
        vals = tuple(int(v) for v in self.control_values) or (1,) * len(ctrl)
        if len(vals) != len(ctrl):
            raise ValueError("control_values must match controls")
        if any(v not in (0, 1) for v in vals):
            raise ValueError("control values must be bits")
        if len(set(ctrl)) != len(ctrl):
            raise ValueError("duplicate control qubit")
        span = tuple(int(q) for q in self.span)
        if self.kind == "reflect0":
            if not span:
                raise ValueError("reflect0 needs a non-empty span")
            acted = set(span)
        else:
            if self.target is None:
                raise ValueError(f"{self.kind} needs a target qubit")
            acted = {int(self.target)}
        if acted & set(ctrl):
            raise ValueError("control set overlaps the target")
        object.__setattr__(self, "controls", ctrl)
        object.__setattr__(self, "control_values", vals)
        object.__setattr__(self, "span", span)

    @property
    def qubits(self) -> set:
        acted = set(self.span) if self.kind == "reflect0" else {self.target}
        return acted | set(self.controls)

    def matrix(self) -> np.ndarray:
        if self.kind == "ry":
            c, s = np.cos(self.angle / 2), np.sin(self.angle / 2)
            return np.array([[c, -s], [s, c]], dtype=complex)
        if self.kind == "h":
            return _H
        if self.kind == "x":
            return _X
        if self.kind == "phase":
            return np.diag([1.0, np.exp(1j * self.angle)])
        raise ValueError("reflect0 has no 2x2 matrix")

    def inverse(self) -> "GateOp":
        if self.kind in ("ry", "phase"):
            return GateOp(self.kind, self.target, -self.angle, self.controls, self.control_values, self.span)
        return self

    def with_controls(self, controls: Sequence[int], values: Optional[Sequence[int]] = None) -> "GateOp":
        values = tuple(values) if values is not None else (1,) * len(controls)
        return GateOp(self.kind, self.target, self.angle,
                      self.controls + tuple(controls), self.control_values + values, self.span)

    def trace_line(self) -> str:
        target = ",".join(map(str, self.span)) if self.kind == "reflect0" else str(self.target)
        ctrl = ",".join(f"{c}" if v else f"!{c}" for c, v in zip(self.controls, self.control_values)) or "-"
        return f"{self.kind} {target} {ctrl} {self.angle!r}"


def ry(target, angle, controls=(), values=()):
    return GateOp("ry", target, angle, tuple(controls), tuple(values))


def hadamard(target, controls=(), values=()):
    return GateOp("h", target, 0.0, tuple(controls), tuple(values))


def pauli_x(target, controls=(), values=()):
    return GateOp("x", target, 0.0, tuple(controls), tuple(values))


def phase(target, angle, controls=(), values=()):
    return GateOp("phase", target, angle, tuple(controls), tuple(values))


def reflect_zero(span, controls=(), values=()):
    return GateOp("reflect0", None, 0.0, tuple(controls), tuple(values), tuple(span))


@dataclass
class Circuit:
    num_qubits: int
    ops: list = field(default_factory=list)

    def append(self, op: GateOp) -> "Circuit":
        bad = [q for q in op.qubits if not 0 <= q < self.num_qubits]
        if bad:
            raise IndexError(f"qubit(s) {bad} outside a {self.num_qubits}-qubit circuit")
        self.ops.append(op)
        return self

    def extend(self, ops: Iterable[GateOp]) -> "Circuit":
        for op in ops:
            self.append(op)
        return self

    def inverse(self) -> "Circuit":
        return Circuit(self.num_qubits, [op.inverse() for op in reversed(self.ops)])

    def controlled(self, controls, values=None) -> "Circuit":
        return Circuit(self.num_qubits, [op.with_controls(controls, values) for op in self.ops])

    def widened(self, num_qubits: int) -> "Circuit":
        if num_qubits < self.num_qubits:
            raise ValueError("cannot shrink a circuit")
        return Circuit(num_qubits, list(self.ops))

    def __len__(self):
        return len(self.ops)

    def __add__(self, other: "Circuit") -> "Circuit":
        n = max(self.num_qubits, other.num_qubits)
        return Circuit(n, self.ops + other.ops)

    def trace(self) -> str:
        """One gate per line: ``kind target controls angle``."""
        return "".join(op.trace_line() + "\n" for op in self.ops)

    def run(self, sv: Optional["Statevector"] = None) -> "Statevector":
        if sv is None:
            sv = Statevector.zero(self.num_qubits)
        elif sv.num_qubits < self.num_qubits:
            raise ValueError("statevector narrower than circuit")
        for op in self.ops:
            sv.apply(op)
        return sv


# --------------------------------------------------------------------------
# statevector


class Statevector:
    """Complex amplitudes over ``num_qubits`` qubits, mutated in place by :meth:`apply`."""

    def __init__(self, amplitudes, layout: Optional[RegisterLayout] = None):
        amps = np.asarray(amplitudes, dtype=np.complex128)
        n = int(np.log2(amps.size)) if amps.size else -1
        if amps.ndim != 1 or n < 0 or 1 << n != amps.size:
            raise ValueError("amplitude vector length must be a power of two")
        if layout is not None and layout.total_qubits != n:
            raise ValueError(f"layout declares {layout.total_qubits} qubits, vector has {n}")
        self.amplitudes = amps
        self.num_qubits = n
        self.layout = layout

    @classmethod
    def zero(cls, num_qubits: int, layout: Optional[RegisterLayout] = None) -> "Statevector":
        if num_qubits > qubit_cap():
            raise BudgetExceeded(f"{num_qubits} qubits exceeds simulation cap {qubit_cap()} (set {QUBIT_CAP_ENV})")
        amps = np.zeros(1 << num_qubits, dtype=np.complex128)
        amps[0] = 1.0
        return cls(amps, layout)

    @classmethod
    def for_layout(cls, layout: RegisterLayout) -> "Statevector":
        return cls.zero(layout.total_qubits, layout)

    def copy(self) -> "Statevector":
        return Statevector(self.amplitudes.copy(), self.layout)

    def _axis(self, q: int) -> int:
        return self.num_qubits - 1 - q

    def _tensor(self):
        return self.amplitudes.reshape((2,) * self.num_qubits) if self.num_qubits else self.amplitudes

    def apply(self, op: GateOp) -> "Statevector":
        bad = [q for q in op.qubits if not 0 <= q < self.num_qubits]
        if bad:
            raise IndexError(f"gate {op.kind} touches qubit(s) {bad} outside {self.num_qubits} qubits")
        psi = self._tensor()
        idx = [slice(None)] * self.num_qubits
        for c, v in zip(op.controls, op.control_values):
            idx[self._axis(c)] = v
        if op.kind == "reflect0":
            sub = psi[tuple(idx)]
            zero = list(idx)
            for q in op.span:
                zero[self._axis(q)] = 0
            keep = psi[tuple(zero)].copy()
            sub *= -1.0
            psi[tuple(zero)] = keep
            return self
        t = self._axis(op.target)
        i0, i1 = list(idx), list(idx)
        i0[t], i1[t] = 0, 1
        i0, i1 = tuple(i0), tuple(i1)
        u = op.matrix()
        a0 = psi[i0].copy()
        a1 = psi[i1].copy()
        psi[i0] = u[0, 0] * a0 + u[0, 1] * a1
        psi[i1] = u[1, 0] * a0 + u[1, 1] * a1
        return self

    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def marginal(self, qubits: Sequence[int]) -> np.ndarray:
        """Distribution over the integer formed by ``qubits`` (``qubits[i]`` is bit ``i``)."""
        probs = self.probabilities().reshape((2,) * self.num_qubits)
        axes = [self._axis(q) for q in qubits]
        others = tuple(a for a in range(self.num_qubits) if a not in axes)
        reduced = probs.sum(axis=others) if others else probs
        # remaining axes are in increasing axis order; reorder so qubits[-1] leads
        kept = sorted(axes)
        order = [kept.index(a) for a in reversed(axes)]
        return np.transpose(reduced, order).reshape(-1) if axes else reduced.reshape(-1)

    def register_distribution(self, name: str) -> np.ndarray:
        if self.layout is None:
            raise ValueError("statevector has no register layout")
        return self.marginal(list(self.layout.span(name)))


def apply_gate(sv: Statevector, op: GateOp) -> Statevector:
    """Functional form: returns a new statevector, ``sv`` untouched."""
    return sv.copy().apply(op)


def marginal_probability(sv: Statevector, qubit: int, outcome: int = 1) -> float:
    if not 0 <= qubit < sv.num_qubits:
        raise IndexError(f"qubit {qubit} out of range")
    if outcome not in (0, 1):
        raise ValueError("outcome must be 0 or 1")
    psi = sv._tensor()
    idx = [slice(None)] * sv.num_qubits
    idx[sv._axis(qubit)] = outcome
    sub = psi[tuple(idx)]
    return float(np.vdot(sub, sub).real)


# --------------------------------------------------------------------------
# state preparation helpers


def prepare_real_amplitudes(probs: Sequence[float], qubits: Sequence[int]) -> list:
    """Gates loading ``sum_t sqrt(probs[t]) |t>`` onto ``qubits`` from ``|0...0>``.

    Binary tree of multi-controlled RY rotations, most significant qubit first.
    ``qubits[i]`` carries bit ``i`` of ``t``.
    """
    probs = np.asarray(probs, dtype=float)
    k = len(qubits)
    if probs.size != 1 << k:
        raise ValueError(f"need {1 << k} probabilities for {k} qubits, got {probs.size}")
    if np.any(probs < 0) or not np.isclose(probs.sum(), 1.0, atol=1e-12):
        raise ValueError("probabilities must be non-negative and sum to 1")
    ops = []
    for level in range(k):
        q = qubits[k - 1 - level]
        ctrl = [qubits[k - 1 - i] for i in range(level)]
        width = 1 << (k - level)
        for prefix in range(1 << level):
            block = probs[prefix * width:(prefix + 1) * width]
            total = block.sum()
            if total <= 0:
                continue
            p1 = block[width // 2:].sum() / total
            theta = 2.0 * np.arcsin(np.sqrt(min(max(p1, 0.0), 1.0)))
            if theta == 0.0:
                continue
            bits = [(prefix >> (level - 1 - i)) & 1 for i in range(level)]
            ops.append(ry(q, theta, ctrl, bits))
    return ops


# --------------------------------------------------------------------------
# Grover operator and amplitude estimation


def grover_operator(prep: Circuit, good_qubit: int, working: Optional[Sequence[int]] = None) -> Circuit:
    """``Q = A S0 A^dagger S_chi`` as a gate list (rightmost factor applied first).

    ``S_chi`` flips the sign of states with ``good_qubit = 1``; ``S0`` is
    ``2|0><0| - I`` on the working qubits. One application rotates by
    ``2 theta`` in the good/bad plane, ``sin^2 theta = a``.
    """
    working = tuple(range(prep.num_qubits)) if working is None else tuple(working)
    q = Circuit(prep.num_qubits)
    q.append(phase(good_qubit, np.pi))
    q.extend(prep.inverse().ops)
    q.append(reflect_zero(working))
    q.extend(prep.ops)
    return q


def controlled_grover(prep: Circuit, good_qubit: int, control: int, working: Sequence[int]) -> list:
    """Controlled Q: only the two reflections need the control, since A A^dagger = I."""
    ops = [phase(good_qubit, np.pi, [control])]
    ops += prep.inverse().ops
    ops.append(reflect_zero(working, [control]))
    ops += prep.ops
    return ops


def qft(qubits: Sequence[int]) -> list:
    """Quantum Fourier transform ``|x> -> N^-1/2 sum_y exp(2 pi i x y / N) |y>``.

    ``qubits[i]`` is bit ``i``. Swaps are built from three CNOTs.
    """
    m = len(qubits)
    ops = []
    for j in reversed(range(m)):
        ops.append(hadamard(qubits[j]))
        for k in reversed(range(j)):
            ops.append(phase(qubits[j], np.pi / (1 << (j - k)), [qubits[k]]))
    for i in range(m // 2):
        a, b = qubits[i], qubits[m - 1 - i]
        ops += [pauli_x(b, [a]), pauli_x(a, [b]), pauli_x(b, [a])]
    return ops


def inverse_qft(qubits: Sequence[int]) -> list:
    return [op.inverse() for op in reversed(qft(qubits))]


@dataclass
class AmplitudeEstimate:
    estimate: float
    best_outcome: int
    distribution: np.ndarray
    grid: np.ndarray
    m: int
    oracle_calls: int

    @property
    def error_bound(self) -> float:
        return qae_error_bound(self.m)


def qae_error_bound(m: int) -> float:
    """``pi / 2**m + pi**2 / 4**m``, the canonical bound for the best outcome."""
    M = 1 << m
    return np.pi / M + np.pi ** 2 / M ** 2


def amplitude_estimation(prep: Circuit, good_qubit: int, m: int,
                         working: Optional[Sequence[int]] = None) -> AmplitudeEstimate:
    """Canonical phase-estimation QAE of ``a = P(good_qubit = 1)`` after ``prep``.

    Evaluation qubits sit above the working register. Controlled powers of the
    Grover operator are applied by literal repetition. The outcome ``y`` maps
    to ``sin^2(pi y / 2**m)``; outcomes sharing an estimate (``y`` and
    ``2**m - y``) are pooled before choosing the most probable one.
    """
    if not 1 <= m <= MAX_EVAL_QUBITS:
        raise BudgetExceeded(f"evaluation qubits m={m} outside [1, {MAX_EVAL_QUBITS}]")
    w = prep.num_qubits
    total = w + m
    if total > qubit_cap():
        raise BudgetExceeded(f"QAE needs {total} qubits, cap is {qubit_cap()}")
    working = tuple(range(w)) if working is None else tuple(working)
    evalq = list(range(w, total))

    sv = Statevector.zero(total)
    prep.widened(total).run(sv)
    for q in evalq:
        sv.apply(hadamard(q))
    calls = 0
    for k, c in enumerate(evalq):
        cq = controlled_grover(prep, good_qubit, c, working)
        for _ in range(1 << k):
            for op in cq:
                sv.apply(op)
            calls += 1
    for op in inverse_qft(evalq):
        sv.apply(op)

    dist = sv.marginal(evalq)
    M = 1 << m
    grid = np.sin(np.pi * np.arange(M) / M) ** 2
    pooled = {}
    for y in range(M):
        key = min(y, M - y)
        pooled[key] = pooled.get(key, 0.0) + dist[y]
    best = max(sorted(pooled), key=lambda y: pooled[y])
    return AmplitudeEstimate(float(grid[best]), int(best), dist, grid, m, calls)
