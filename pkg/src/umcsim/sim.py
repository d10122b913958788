"""Circuits, noise models and the two execution backends.

Circuit dialect (one instruction per line, ``#`` starts a comment)::

    qubits 2
    prep q0
    ry q0 90          # rotation gates take the angle in degrees
    cz q0 q1
    measure q0

Gate names are case-insensitive and resolve against
:data:`umcsim.gateset.IDEAL_GATES` (``ry q0 -90`` is gate ``ry-90``).  For a
two-qubit gate the first listed qubit is the operator's most significant
factor, so ``cnot q1 q0`` has control q1.  A qubit must be prepared before it
is used; after ``measure`` it must be prepared again before further gates.

Backends:

* :func:`sample` runs batched pure-state Monte Carlo.  Every noisy operation
  is replaced by one term of its convex sum, drawn per shot.  The register is
  dynamic: a measured qubit leaves the state vector and ``prep`` brings it
  back, so only live qubits cost memory.
* :func:`run_density_matrix` evolves the exact density matrix (``n <= 6``),
  branching on every measurement.

Randomness is counter-based: the uniform used for draw ``slot`` of shot ``s``
is a hash of ``(master_seed, s, slot)``, so results do not depend on how shots
are batched or spread over workers.
"""
from __future__ import annotations

import concurrent.futures
import re
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from . import approx, channels, gateset, qcore

MAX_DENSITY_QUBITS = 6


class CircuitError(ValueError):
    """Syntax or semantic error in circuit text, with its location."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        where = f"line {line}, column {column}: " if line else ""
        super().__init__(where + message)
        self.line = line
        self.column = column


class ResourceGuardError(RuntimeError):
    pass


class NormDriftError(RuntimeError):
    pass


# -- circuit IR -------------------------------------------------------------------------


@dataclass(frozen=True)
class Instruction:
    """``op`` is ``prep``, ``gate`` or ``measure``; ``qubits`` are least significant first."""

    op: str
    qubits: tuple
    name: str = ""
    line: int = 0

    def __str__(self) -> str:
        qs = " ".join(f"q{q}" for q in reversed(self.qubits))
        if self.op == "gate":
            m = re.fullmatch(r"(r[xyz])(-?\d+)", self.name)
            if m:
                return f"{m.group(1)} {qs} {m.group(2)}"
            return f"{self.name} {qs}"
        return f"{self.op} {qs}"


@dataclass
class Circuit:
    n_qubits: int
    instructions: list = field(default_factory=list)

    def prep(self, q: int) -> "Circuit":
        self.instructions.append(Instruction("prep", (q,)))
        return self

    def gate(self, name: str, *qubits: int) -> "Circuit":
        """Append a gate; ``qubits`` are listed most significant first as in the text dialect."""
        self.instructions.append(Instruction("gate", tuple(reversed(qubits)), name.lower()))
        return self

    def measure(self, q: int) -> "Circuit":
        self.instructions.append(Instruction("measure", (q,)))
        return self

    @property
    def n_measurements(self) -> int:
        return sum(1 for ins in self.instructions if ins.op == "measure")

    def gate_names(self) -> set:
        return {ins.name for ins in self.instructions if ins.op == "gate"}

    def to_text(self) -> str:
        return "\n".join([f"qubits {self.n_qubits}"] + [str(i) for i in self.instructions]) + "\n"

    def validate(self) -> "Circuit":
        live = set()
        for k, ins in enumerate(self.instructions):
            line = ins.line or k + 2
            for q in ins.qubits:
                if not 0 <= q < self.n_qubits:
                    raise CircuitError(f"qubit index q{q} out of range for {self.n_qubits} qubits", line)
            if len(set(ins.qubits)) != len(ins.qubits):
                raise CircuitError("repeated qubit in one instruction", line)
            if ins.op == "prep":
                live.add(ins.qubits[0])
            elif ins.op == "measure":
                if ins.qubits[0] not in live:
                    raise CircuitError(f"measure of unprepared qubit q{ins.qubits[0]}", line)
                live.discard(ins.qubits[0])
            elif ins.op == "gate":
                dead = [q for q in ins.qubits if q not in live]
                if dead:
                    raise CircuitError(f"gate {ins.name} on unprepared qubit q{dead[0]}", line)
                u = gateset.IDEAL_GATES.get(ins.name)
                if u is None:
                    raise CircuitError(f"unknown gate {ins.name!r}", line)
                if u.shape[0] != 2 ** len(ins.qubits):
                    raise CircuitError(f"gate {ins.name} acts on {qcore.n_qubits_of(u.shape[0])} qubit(s)", line)
            else:
                raise CircuitError(f"unknown operation {ins.op!r}", line)
        return self


_QUBIT = re.compile(r"q(\d+)$", re.IGNORECASE)


def parse_circuit(text: str) -> Circuit:
    """Parse the line-oriented circuit dialect (see module docstring).

    Raises:
        CircuitError: with the line and column of the offending token.
    """
    n_qubits = None
    instructions = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        tokens = [(m.group(), m.start() + 1) for m in re.finditer(r"\S+", line)]
        if not tokens:
            continue
        head, col = tokens[0][0].lower(), tokens[0][1]
        if head == "qubits":
            if n_qubits is not None or instructions:
                raise CircuitError("'qubits' must appear once, before any instruction", lineno, col)
            if len(tokens) != 2 or not tokens[1][0].isdigit() or int(tokens[1][0]) < 1:
                raise CircuitError("expected 'qubits N' with N >= 1", lineno, col)
            n_qubits = int(tokens[1][0])
            continue
        if n_qubits is None:
            raise CircuitError("missing 'qubits N' header", lineno, col)
        qubits, angle = [], None
        for tok, tcol in tokens[1:]:
            m = _QUBIT.match(tok)
            if m:
                q = int(m.group(1))
                if q >= n_qubits:
                    raise CircuitError(f"qubit index {tok} out of range for {n_qubits} qubits", lineno, tcol)
                qubits.append(q)
            elif re.fullmatch(r"[+-]?\d+(\.0*)?", tok) and angle is None:
                angle = int(float(tok))
            else:
                raise CircuitError(f"unexpected token {tok!r}", lineno, tcol)
        if head in ("prep", "prep_z", "measure", "measure_z"):
            if len(qubits) != 1 or angle is not None:
                raise CircuitError(f"'{head}' takes exactly one qubit", lineno, col)
            instructions.append(Instruction(head.split("_")[0], (qubits[0],), line=lineno))
            continue
        name = head if angle is None else f"{head}{angle}"
        u = gateset.IDEAL_GATES.get(name)
        if u is None:
            raise CircuitError(f"unknown gate {name!r}", lineno, col)
        arity = qcore.n_qubits_of(u.shape[0])
        if len(qubits) != arity:
            raise CircuitError(f"gate {name} needs {arity} qubit(s), got {len(qubits)}", lineno, col)
        instructions.append(Instruction("gate", tuple(reversed(qubits)), name, lineno))
    if n_qubits is None:
        raise CircuitError("empty circuit: missing 'qubits N'")
    return Circuit(n_qubits, instructions).validate()


# -- primitive pure-state operations ----------------------------------------------------------


@dataclass(frozen=True)
class UnitaryOp:
    """Unitary on gate-local qubits (least significant first)."""

    matrix: np.ndarray
    qubits: tuple


@dataclass(frozen=True)
class MeasureResetOp:
    """Measure a gate-local qubit in the basis ``bras`` and emit ``outputs[k]`` on outcome k.

    ``bras[0]`` is ``<f|`` and ``bras[1]`` is ``<fbar|``; ``outputs`` are
    ``|f1>`` and ``|f2>``.
    """

    bras: np.ndarray
    outputs: np.ndarray
    qubit: int


def measurement_term_ops(term: channels.MeasurementTerm) -> list[MeasureResetOp]:
    ops = []
    for q, beta in zip(term.qubits, term.betas):
        basis = channels.euler_unitary(beta[6:9])
        f1 = channels.euler_unitary(beta[0:3])[:, 0]
        f2 = channels.euler_unitary(beta[3:6])[:, 1]
        ops.append(MeasureResetOp(basis, np.array([f1, f2]), q))
    return ops


def _reset_op(state: np.ndarray, qubit: int = 0) -> MeasureResetOp:
    return MeasureResetOp(np.eye(2, dtype=complex), np.array([state, state]), qubit)


# -- noise models -----------------------------------------------------------------------------------


@dataclass
class ChannelNoise:
    """A noisy operation as a convex sum of pure-state operation sequences.

    Attributes:
        probs: term probabilities.
        terms: per term, the list of primitive ops (gate-local qubits).
        ptm: the superoperator of the whole convex sum, used by the
            density-matrix backend.
        label: provenance tag (``umc``, ``cmc``, ``pta``, ``ideal`` ...).
    """

    probs: np.ndarray
    terms: list
    ptm: np.ndarray
    label: str = ""

    @property
    def sampleable(self) -> bool:
        return self.terms is not None

    @property
    def n_qubits(self) -> int:
        return qcore.n_qubits_of(int(round(np.sqrt(self.ptm.shape[0]))))

    @classmethod
    def ideal(cls, unitary: np.ndarray) -> "ChannelNoise":
        u = np.asarray(unitary, dtype=complex)
        k = qcore.n_qubits_of(u.shape[0])
        return cls(np.ones(1), [[UnitaryOp(u, tuple(range(k)))]], qcore.unitary_to_ptm(u), "ideal")

    @classmethod
    def exact(cls, ptm: np.ndarray, label: str = "exact") -> "ChannelNoise":
        """Density-matrix-only entry (no pure-state decomposition)."""
        return cls(np.ones(1), None, np.asarray(ptm, dtype=float), label)

    @classmethod
    def from_umc(cls, dec: approx.UmcDecomposition) -> "ChannelNoise":
        terms = []
        for term in dec.channel.terms:
            if isinstance(term, channels.UnitaryTerm):
                terms.append([UnitaryOp(term.unitary(), tuple(range(term.n_qubits)))])
            else:
                terms.append(measurement_term_ops(term))
        return cls(np.asarray(dec.p), terms, dec.ptm(), "umc")

    @classmethod
    def from_cmc(cls, dec: approx.CmcDecomposition) -> "ChannelNoise":
        cliffords = approx.clifford_group_1q()
        terms = []
        for lab in dec.labels:
            if lab.startswith("clifford"):
                terms.append([UnitaryOp(cliffords[int(lab[8:])], (0,))])
            else:
                sign, axis = lab[5], lab[6]
                vec = {"x": np.array([1, 1]), "y": np.array([1, 1j]), "z": np.array([1, 0])}[axis].astype(complex)
                if axis == "z" and sign == "-":
                    vec = np.array([0, 1], dtype=complex)
                elif sign == "-":
                    vec = vec * np.array([1, -1])
                terms.append([_reset_op(vec / np.linalg.norm(vec))])
        return cls(np.asarray(dec.p), terms, dec.ptm(), "cmc")

    @classmethod
    def from_pta(cls, dec: approx.PauliProbabilities, ideal_unitary: np.ndarray) -> "ChannelNoise":
        u = np.asarray(ideal_unitary, dtype=complex)
        paulis = qcore.pauli_basis(dec.n_qubits)
        k = tuple(range(dec.n_qubits))
        terms = [[UnitaryOp(u @ paulis[i], k)] for i in range(len(dec.p))]
        return cls(np.asarray(dec.p), terms, dec.ptm(), "pta")

    @classmethod
    def depolarizing(cls, ideal_unitary: np.ndarray, rate: float) -> "ChannelNoise":
        """Ideal gate preceded by ``rho -> (1 - rate) rho + rate I/d``."""
        u = np.asarray(ideal_unitary, dtype=complex)
        n = qcore.n_qubits_of(u.shape[0])
        probs = np.full(4**n, rate / 4**n)
        probs[0] += 1 - rate
        dec = approx.PauliProbabilities(probs, n, qcore.unitary_to_ptm(u))
        out = cls.from_pta(dec, u)
        out.label = "depolarizing"
        return out


def prep_exact_ptm(rho0_vec: np.ndarray) -> np.ndarray:
    """Channel replacing any input by the prepared state (``rho -> Tr(rho) rho0``)."""
    out = np.zeros((4, 4))
    out[:, 0] = np.sqrt(2) * np.asarray(rho0_vec, dtype=float)
    return out


def meas_exact_ptm(effect_vec: np.ndarray) -> np.ndarray:
    """Measure-and-prepare channel whose perfect Z readout reproduces the effect.

    ``rho -> Tr(E rho)|1><1| + Tr((I - E) rho)|0><0|``.
    """
    e = qcore.from_pauli_vector(np.asarray(effect_vec, dtype=float))
    p1, p0 = np.diag([0.0, 1.0]), np.diag([1.0, 0.0])
    return channels.superop_to_ptm(lambda r: np.trace(e @ r) * p1 + np.trace(r - e @ r) * p0, 1)


@dataclass
class NoiseModel:
    """Per-gate-name noise plus optional SPAM channels.

    ``prep`` acts after a perfect reset to ``|0>``; ``meas`` acts before a
    perfect Z measurement.  With ``ideal_fallback`` any gate missing from
    ``gates`` runs noiselessly.
    """

    gates: dict = field(default_factory=dict)
    prep: ChannelNoise | None = None
    meas: ChannelNoise | None = None
    ideal_fallback: bool = False
    label: str = ""

    def entry(self, name: str) -> ChannelNoise:
        if name in self.gates:
            return self.gates[name]
        if self.ideal_fallback and name in gateset.IDEAL_GATES:
            entry = ChannelNoise.ideal(gateset.IDEAL_GATES[name])
            self.gates[name] = entry
            return entry
        raise KeyError(f"noise model has no entry for gate {name!r}")

    def check_covers(self, circuit: Circuit) -> None:
        for name in circuit.gate_names():
            entry = self.entry(name)
            arity = qcore.n_qubits_of(gateset.IDEAL_GATES[name].shape[0])
            if entry.n_qubits != arity:
                raise ValueError(f"noise entry for {name!r} acts on {entry.n_qubits} qubits, gate on {arity}")

    @classmethod
    def ideal(cls) -> "NoiseModel":
        return cls(ideal_fallback=True, label="ideal")

    @classmethod
    def exact(cls, gs: gateset.GateSetModel) -> "NoiseModel":
        """The gate set itself (density-matrix backend only)."""
        gates = {name: ChannelNoise.exact(ptm) for name, ptm in gs.gates.items()}
        return cls(gates, ChannelNoise.exact(prep_exact_ptm(gs.rho0)),
                   ChannelNoise.exact(meas_exact_ptm(gs.effect)), label="exact")

    @classmethod
    def from_gateset(cls, gs: gateset.GateSetModel, method: str = "umc",
                     opts: approx.UmcOptions | None = None, spam: bool = True) -> "NoiseModel":
        """Decompose every gate of a gate set with ``method`` (``umc``, ``cmc`` or ``pta``).

        CMC covers one-qubit channels only, so two-qubit gates fall back to PTA
        under ``cmc``.  SPAM channels always use the UMC fits.
        """
        gates = {}
        for name, ptm in gs.gates.items():
            ideal_u = gateset.IDEAL_GATES[gs.targets.get(name, name)]
            if method == "umc":
                gates[name] = ChannelNoise.from_umc(approx.decompose_umc(ptm, opts, name))
            elif method == "cmc" and ptm.shape[0] == 4:
                gates[name] = ChannelNoise.from_cmc(approx.decompose_cmc(ptm, name))
            elif method in ("cmc", "pta"):
                dec = approx.decompose_pta(ptm, qcore.unitary_to_ptm(ideal_u), name)
                gates[name] = ChannelNoise.from_pta(dec, ideal_u)
            else:
                raise ValueError(f"unknown method {method!r}")
        prep = meas = None
        if spam:
            prep = ChannelNoise.from_umc(approx.fit_prep_channel(gs.rho0_matrix))
            meas = ChannelNoise.from_umc(approx.fit_meas_channel(gs.effect))
        return cls(gates, prep, meas, label=method)


# -- counter-based randomness --------------------------------------------------------------------

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = x + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


SLOTS_PER_INSTRUCTION = 8


def uniforms(master_seed: int, shots: np.ndarray, slot: int) -> np.ndarray:
    """Uniform [0, 1) draws keyed by ``(master_seed, shot, slot)``."""
    key = _splitmix64(np.uint64(master_seed & 0xFFFFFFFFFFFFFFFF))
    counter = (np.asarray(shots, dtype=np.uint64) << np.uint64(24)) | np.uint64(slot)
    bits = _splitmix64(key ^ _splitmix64(counter))
    return (bits >> np.uint64(11)).astype(np.float64) * 2.0**-53


# -- batched pure-state engine ------------------------------------------------------------------


@dataclass
class _Stage:
    """One step of a compiled circuit.

    ``kind`` is ``prep`` (fresh |0>), ``measure`` (terminal Z readout) or
    ``choice`` (draw a term from ``noise`` and apply its ops on ``qubits``).
    """

    kind: str
    qubits: tuple
    slot: int
    noise: ChannelNoise | None = None
    label: str = ""


def compile_circuit(circuit: Circuit, model: NoiseModel) -> list[_Stage]:
    model.check_covers(circuit)
    stages = []
    for k, ins in enumerate(circuit.instructions):
        base = k * SLOTS_PER_INSTRUCTION
        if ins.op == "prep":
            stages.append(_Stage("prep", ins.qubits, base + 7))
            if model.prep is not None:
                stages.append(_Stage("choice", ins.qubits, base, model.prep, "prep"))
        elif ins.op == "measure":
            if model.meas is not None:
                stages.append(_Stage("choice", ins.qubits, base, model.meas, "meas"))
            stages.append(_Stage("measure", ins.qubits, base + 6))
        else:
            stages.append(_Stage("choice", ins.qubits, base, model.entry(ins.name), ins.name))
    for st in stages:
        if st.noise is not None and not st.noise.sampleable:
            raise ValueError(f"noise entry {st.label!r} has no pure-state decomposition")
    return stages


@numba.njit(cache=True)
def _kernel_1q(v, u):
    """In-place 2x2 update of ``v`` with shape ``(A, 2, R)``."""
    u00, u01, u10, u11 = u[0, 0], u[0, 1], u[1, 0], u[1, 1]
    for a in range(v.shape[0]):
        for r in range(v.shape[2]):
            x = v[a, 0, r]
            y = v[a, 1, r]
            v[a, 0, r] = u00 * x + u01 * y
            v[a, 1, r] = u10 * x + u11 * y


@numba.njit(cache=True)
def _kernel_2q(v, u):
    """In-place 4x4 update of ``v`` with shape ``(A, 2, M, 2, R)``; local index ``2 i + j``."""
    for a in range(v.shape[0]):
        for m in range(v.shape[2]):
            for r in range(v.shape[4]):
                x0 = v[a, 0, m, 0, r]
                x1 = v[a, 0, m, 1, r]
                x2 = v[a, 1, m, 0, r]
                x3 = v[a, 1, m, 1, r]
                v[a, 0, m, 0, r] = u[0, 0] * x0 + u[0, 1] * x1 + u[0, 2] * x2 + u[0, 3] * x3
                v[a, 0, m, 1, r] = u[1, 0] * x0 + u[1, 1] * x1 + u[1, 2] * x2 + u[1, 3] * x3
                v[a, 1, m, 0, r] = u[2, 0] * x0 + u[2, 1] * x1 + u[2, 2] * x2 + u[2, 3] * x3
                v[a, 1, m, 1, r] = u[3, 0] * x0 + u[3, 1] * x1 + u[3, 2] * x2 + u[3, 3] * x3


_SWAP = np.eye(4)[[0, 2, 1, 3]]


def _apply_inplace(psi: np.ndarray, u: np.ndarray, axes: list[int]) -> None:
    """Multiply the qubits on ``axes`` (least significant first) of a contiguous batch by ``u``."""
    shape = psi.shape
    u = np.ascontiguousarray(u, dtype=complex)
    diagonal = not np.any(u - np.diag(np.diag(u)))
    if len(axes) == 1:
        view = psi.reshape(-1, 2, int(np.prod(shape[axes[0] + 1:], dtype=int)))
        if diagonal:
            for k in (0, 1):
                if u[k, k] != 1:
                    view[:, k, :] *= u[k, k]
        else:
            _kernel_1q(view, u)
        return
    if len(axes) != 2:
        raise ValueError("only one- and two-qubit operations are supported")
    lo, hi = sorted(axes)
    if axes[0] < axes[1]:
        u = _SWAP @ u @ _SWAP
    mid = int(np.prod(shape[lo + 1:hi], dtype=int))
    right = int(np.prod(shape[hi + 1:], dtype=int))
    view = psi.reshape(-1, 2, mid, 2, right)
    if diagonal:
        for k in range(4):
            if u[k, k] != 1:
                view[:, k >> 1, :, k & 1, :] *= u[k, k]
    else:
        _kernel_2q(view, u)


class _Register:
    """Batch of state vectors over the currently live qubits.

    ``psi`` has shape ``(batch, 2, ..., 2)``; axis ``1 + k`` holds qubit
    ``live[k]``.
    """

    def __init__(self, batch: int):
        self.psi = np.ones((batch,), dtype=complex)
        self.live: list[int] = []

    def axis(self, q: int) -> int:
        return 1 + self.live.index(q)

    def add(self, q: int):
        """Append qubit ``q`` in state |0>."""
        if q in self.live:
            raise RuntimeError(f"qubit {q} is already live")
        new = np.zeros(self.psi.shape + (2,), dtype=complex)
        new[..., 0] = self.psi
        self.psi = new
        self.live.append(q)

    def apply_unitary(self, u: np.ndarray, qubits: Sequence[int], rows: np.ndarray | None = None):
        """Apply ``u`` (qubits least significant first) to all or selected batch rows."""
        target = self.psi if rows is None else self.psi[rows]
        _apply_inplace(target, u, [self.axis(q) for q in qubits])
        if rows is not None:
            self.psi[rows] = target

    def measure_reset(self, op: MeasureResetOp, q: int, u: np.ndarray, rows: np.ndarray | None = None):
        """Measure ``q`` in ``op.bras`` using uniforms ``u`` and re-prepare ``op.outputs``."""
        ax = self.axis(q)
        target = self.psi if rows is None else self.psi[rows]
        moved = np.moveaxis(target, ax, -1)
        amps = moved @ op.bras.T  # (..., 2): <f|psi>, <fbar|psi>
        p0 = np.sum(np.abs(amps[..., 0]) ** 2, axis=tuple(range(1, amps.ndim - 1)))
        outcome = (u >= p0).astype(int)
        norm = np.sqrt(np.where(outcome == 0, p0, 1 - p0))
        shape = (-1,) + (1,) * (amps.ndim - 2)
        chosen = np.where(outcome.reshape(shape) == 0, amps[..., 0], amps[..., 1]) / norm.reshape(shape)
        new = chosen[..., None] * op.outputs[outcome].reshape(shape[:1] + (1,) * (amps.ndim - 2) + (2,))
        new = np.ascontiguousarray(np.moveaxis(new, -1, ax))
        if rows is None:
            self.psi = new
        else:
            self.psi[rows] = new
        return outcome

    def measure_drop(self, q: int, u: np.ndarray) -> np.ndarray:
        """Z-basis measurement of ``q`` with uniforms ``u``; the qubit leaves the register."""
        ax = self.axis(q)
        moved = np.moveaxis(self.psi, ax, -1)
        p1 = np.sum(np.abs(moved[..., 1]) ** 2, axis=tuple(range(1, moved.ndim - 1)))
        outcome = (u < p1).astype(np.uint8)
        norm = np.sqrt(np.where(outcome == 1, p1, 1 - p1))
        shape = (-1,) + (1,) * (moved.ndim - 2)
        self.psi = np.ascontiguousarray(
            np.where(outcome.reshape(shape) == 1, moved[..., 1], moved[..., 0]) / norm.reshape(shape))
        self.live.remove(q)
        return outcome

    def norms(self) -> np.ndarray:
        return np.sum(np.abs(self.psi.reshape(self.psi.shape[0], -1)) ** 2, axis=1)


def draw_terms(stages: list[_Stage], master_seed: int, shots: np.ndarray) -> list[np.ndarray | None]:
    """Per stage, the drawn term index of every shot (``None`` for non-choice stages)."""
    out = []
    for st in stages:
        if st.kind != "choice":
            out.append(None)
            continue
        cdf = np.cumsum(st.noise.probs)
        u = uniforms(master_seed, shots, st.slot)
        out.append(np.minimum(np.searchsorted(cdf, u * cdf[-1], side="right"), len(cdf) - 1))
    return out


def _apply_term(reg: _Register, ops: list, qubits: tuple, master_seed: int, shots: np.ndarray,
                slot: int, rows: np.ndarray | None):
    k = 0
    for op in ops:
        if isinstance(op, UnitaryOp):
            reg.apply_unitary(op.matrix, [qubits[i] for i in op.qubits], rows)
        else:
            sub = shots if rows is None else shots[rows]
            k += 1
            reg.measure_reset(op, qubits[op.qubit], uniforms(master_seed, sub, slot + k), rows)


def run_batch(stages: list[_Stage], master_seed: int, shots: np.ndarray,
              check_norm: bool = True) -> np.ndarray:
    """Execute compiled stages for the given shot indices; returns ``(len(shots), n_meas)`` bits."""
    shots = np.asarray(shots, dtype=np.int64)
    reg = _Register(len(shots))
    draws = draw_terms(stages, master_seed, shots)
    bits = []
    for st, drawn in zip(stages, draws):
        if st.kind == "prep":
            q = st.qubits[0]
            if q in reg.live:  # re-preparation without measurement discards the qubit
                reg.measure_drop(q, uniforms(master_seed, shots, st.slot))
            reg.add(q)
        elif st.kind == "measure":
            bits.append(reg.measure_drop(st.qubits[0], uniforms(master_seed, shots, st.slot)))
        else:
            present, freq = np.unique(drawn, return_counts=True)
            if present.size == 1:
                _apply_term(reg, st.noise.terms[present[0]], st.qubits, master_seed, shots, st.slot, None)
            else:
                # The most frequent unitary term runs on the whole batch in place; the other
                # rows first undo it.  This avoids copying the bulk of the batch.
                top = present[np.argmax(freq)]
                top_ops = st.noise.terms[top]
                if len(top_ops) == 1 and isinstance(top_ops[0], UnitaryOp):
                    _apply_term(reg, top_ops, st.qubits, master_seed, shots, st.slot, None)
                    undo = UnitaryOp(top_ops[0].matrix.conj().T, top_ops[0].qubits)
                else:
                    top, undo = -1, None
                for t in present:
                    if t == top:
                        continue
                    rows = np.nonzero(drawn == t)[0]
                    ops = st.noise.terms[t] if undo is None else [undo] + list(st.noise.terms[t])
                    _apply_term(reg, ops, st.qubits, master_seed, shots, st.slot, rows)
        if check_norm and reg.live and (st.kind != "choice" or st is stages[-1]):
            drift = np.max(np.abs(reg.norms() - 1))
            if drift > 1e-8:
                raise NormDriftError(f"state norm drifted by {drift:.2e} after {st.kind} {st.label}")
    if not bits:
        return np.zeros((len(shots), 0), dtype=np.uint8)
    return np.stack(bits, axis=1).astype(np.uint8)


# -- single-shot API -----------------------------------------------------------------------------


@dataclass
class ConcreteCircuit:
    """A circuit with one term drawn for every noisy operation of one shot."""

    stages: list
    draws: list
    master_seed: int
    shot: int

    @property
    def draw_log(self) -> list[tuple[str, int]]:
        return [(st.label, int(d[0])) for st, d in zip(self.stages, self.draws) if d is not None]

    def operations(self) -> list[tuple[str, tuple, object]]:
        """Flat list of (kind, qubits, payload) for inspection."""
        out = []
        for st, d in zip(self.stages, self.draws):
            if d is None:
                out.append((st.kind, st.qubits, None))
            else:
                out.append(("term", st.qubits, st.noise.terms[int(d[0])]))
        return out


def inject_noise(circuit: Circuit, model: NoiseModel, seed: int, shot: int = 0) -> ConcreteCircuit:
    """Draw one term per noisy operation for shot ``shot`` of master seed ``seed``."""
    stages = compile_circuit(circuit, model)
    shots = np.array([shot])
    return ConcreteCircuit(stages, draw_terms(stages, seed, shots), seed, shot)


def run_pure_state(concrete: ConcreteCircuit) -> str:
    """Execute one concrete circuit; returns the outcome bits in measurement order."""
    bits = run_batch(concrete.stages, concrete.master_seed, np.array([concrete.shot]))
    return "".join(str(b) for b in bits[0])


# -- sampling --------------------------------------------------------------------------------------


@dataclass
class SampleRecord:
    """Outcome counts of a sampling run.

    Bitstrings list the measurement results in the order the ``measure``
    instructions appear.  ``expectations[k]`` is the frequency of a 1 in
    measurement ``k`` and ``std_errors[k]`` its binomial standard error.
    """

    shots: int
    counts: dict
    expectations: np.ndarray
    std_errors: np.ndarray
    master_seed: int

    def frequency(self, bits: str) -> float:
        return self.counts.get(bits, 0) / self.shots

    def to_dict(self) -> dict:
        return {
            "shots": self.shots,
            "master_seed": self.master_seed,
            "counts": dict(sorted(self.counts.items())),
            "expectations": self.expectations.tolist(),
            "std_errors": self.std_errors.tolist(),
        }


def _chunk_worker(args):
    stages, master_seed, start, stop = args
    return run_batch(stages, master_seed, np.arange(start, stop))


def default_batch_size(circuit: Circuit, budget_bytes: int = 64 << 20) -> int:
    """Shots per batch so that one batch of state vectors stays near ``budget_bytes``."""
    live = peak = 0
    for ins in circuit.instructions:
        if ins.op == "prep":
            live += 1
        elif ins.op == "measure":
            live -= 1
        peak = max(peak, live)
    return int(max(1, min(65536, budget_bytes // (16 * 2**peak * 3))))


def sample_bits(circuit: Circuit, model: NoiseModel, shots: int, master_seed: int,
                workers: int = 1, batch_size: int | None = None) -> np.ndarray:
    """Per-shot measurement records, shape ``(shots, n_measurements)``."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    stages = compile_circuit(circuit, model)
    batch = batch_size or default_batch_size(circuit)
    jobs = [(stages, master_seed, s, min(s + batch, shots)) for s in range(0, shots, batch)]
    if workers <= 1 or len(jobs) == 1:
        parts = [_chunk_worker(j) for j in jobs]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_chunk_worker, jobs))
    return np.concatenate(parts, axis=0)


def record_from_bits(bits: np.ndarray, master_seed: int) -> SampleRecord:
    shots = bits.shape[0]
    if bits.shape[1] == 0:
        counts = {"": shots}
    else:
        weights = 1 << np.arange(bits.shape[1] - 1, -1, -1, dtype=np.int64)
        codes = bits.astype(np.int64) @ weights
        values, freq = np.unique(codes, return_counts=True)
        width = bits.shape[1]
        counts = {format(int(v), f"0{width}b"): int(c) for v, c in zip(values, freq)}
    mean = bits.mean(axis=0) if bits.shape[1] else np.zeros(0)
    return SampleRecord(shots, counts, mean, np.sqrt(mean * (1 - mean) / shots), master_seed)


def sample(circuit: Circuit, model: NoiseModel, shots: int, master_seed: int,
           workers: int = 1, batch_size: int | None = None) -> SampleRecord:
    """Monte Carlo estimate of the outcome distribution.

    The result depends only on ``(circuit, model, shots, master_seed)``, not on
    ``workers`` or ``batch_size``.
    """
    bits = sample_bits(circuit, model, shots, master_seed, workers, batch_size)
    return record_from_bits(bits, master_seed)


# -- density-matrix backend --------------------------------------------------------------------------


_RESET_PTM = approx.reset_ptm(np.array([0.0, 0.0, 1.0]))


def run_density_matrix(circuit: Circuit, model: NoiseModel) -> dict:
    """Exact outcome distribution ``{bitstring: probability}``.

    Every noisy operation applies the full superoperator of its entry.  The
    state is kept per classical record, branching at each measurement.

    Raises:
        ResourceGuardError: for circuits wider than six qubits.
    """
    if circuit.n_qubits > MAX_DENSITY_QUBITS:
        raise ResourceGuardError(f"density-matrix backend is limited to {MAX_DENSITY_QUBITS} qubits")
    model.check_covers(circuit)
    d = 2**circuit.n_qubits
    rho = np.zeros((d, d), dtype=complex)
    rho[0, 0] = 1.0
    branches = {"": rho}
    p0 = np.diag([1.0, 0.0]).astype(complex)
    p1 = np.diag([0.0, 1.0]).astype(complex)
    eye = np.eye(2, dtype=complex)

    def project(r, q, proj):
        full = np.ones((1, 1), dtype=complex)
        for k in reversed(range(circuit.n_qubits)):
            full = np.kron(full, proj if k == q else eye)
        return full @ r @ full

    for ins in circuit.instructions:
        new = {}
        for key, r in branches.items():
            if ins.op == "prep":
                q = ins.qubits[0]
                r = qcore.apply_superop(_RESET_PTM, r, [q])
                if model.prep is not None:
                    r = qcore.apply_superop(model.prep.ptm, r, [q])
                new[key] = r
            elif ins.op == "gate":
                new[key] = qcore.apply_superop(model.entry(ins.name).ptm, r, list(ins.qubits))
            else:
                q = ins.qubits[0]
                if model.meas is not None:
                    r = qcore.apply_superop(model.meas.ptm, r, [q])
                new[key + "0"] = project(r, q, p0)
                new[key + "1"] = project(r, q, p1)
        branches = new
    return {key: float(np.trace(r).real) for key, r in sorted(branches.items())}


# -- benchmark circuits --------------------------------------------------------------------------


def grover_circuit(marked: str = "11") -> Circuit:
    """Two-qubit Grover search for ``marked`` (bits listed qubit 0 first) in the
    ``{Ry(90), Ry(180), Rx(180), CZ}`` gate set.

    The oracle is a CZ flanked by an ``Ry(180) Rx(180)`` bit flip on qubit 0
    when ``marked[1] == '0'`` and on qubit 1 when ``marked[0] == '0'``; the
    diffusion step flips both qubits around a second CZ.  Noiseless, the
    measured bitstring equals ``marked`` with probability 1.
    """
    if marked not in ("00", "01", "10", "11"):
        raise ValueError(f"marked state must be a two-bit string, got {marked!r}")
    flank = [q for q, other in ((0, marked[1]), (1, marked[0])) if other == "0"]
    c = Circuit(2)
    for q in (0, 1):
        c.prep(q)
    for q in (0, 1):
        c.gate("ry90", q)
    for q in flank:
        c.gate("ry180", q)
        c.gate("rx180", q)
    c.gate("cz", 1, 0)
    for q in (0, 1):
        c.gate("ry90", q)
    for q in (0, 1):
        c.gate("ry180", q)
        c.gate("rx180", q)
    c.gate("cz", 1, 0)
    for q in (0, 1):
        c.gate("ry90", q)
    for q in (0, 1):
        c.measure(q)
    return c
