"""Distance-3 surface code (17 qubits): circuits, detectors, decoding, threshold.

Layout (data qubits ``d = 3 r + c`` on a 3x3 grid, ancillas 9..16)::

    X checks  X0 {1,2}   X1 {0,1,3,4}   X2 {4,5,7,8}   X3 {6,7}
    Z checks  Z0 {0,3}   Z1 {1,2,4,5}   Z2 {3,4,6,7}   Z3 {5,8}

with logical operators ``Z_L = Z0 Z1 Z2`` and ``X_L = X0 X3 X6``.  A round
measures the Z checks and then the X checks, each through four CZ layers in a
fixed tiled order.  Ancillas are wrapped in ``Ry(90)`` / ``Ry(-90)``; for X
checks the data qubits are additionally wrapped in ``Ry(-90)`` / ``Ry(90)`` so
that CZ acts as a controlled X.

Detectors compare each check with its previous value (checks of the memory
basis are also compared with the deterministic +1 of the initial state in
round 0 and with the final transversal data readout).  The decoding graph is
derived by propagating every single-qubit Pauli fault through the ideal
circuit, so spatial, temporal, diagonal and boundary edges all appear with
unit weight.
"""
from __future__ import annotations

import functools
from collections import deque
from dataclasses import dataclass, field

import networkx as nx
import numpy as np
from statsmodels.stats.proportion import proportion_confint

from . import approx, gateset, qcore, sim

N_DATA = 9
X_CHECKS = ((1, 2), (0, 1, 3, 4), (4, 5, 7, 8), (6, 7))
Z_CHECKS = ((0, 3), (1, 2, 4, 5), (3, 4, 6, 7), (5, 8))
LOGICAL_Z = (0, 1, 2)
LOGICAL_X = (0, 3, 6)
# CZ layers as (check index, data qubit); the tiled schedule keeps hook errors harmless
X_LAYERS = (((1, 0), (2, 4), (3, 6)), ((1, 1), (2, 5), (3, 7)), ((1, 3), (2, 7), (0, 1)), ((1, 4), (2, 8), (0, 2)))
Z_LAYERS = (((1, 1), (2, 3), (3, 5)), ((1, 4), (2, 6), (3, 8)), ((1, 2), (2, 4), (0, 0)), ((1, 5), (2, 7), (0, 3)))
BOUNDARY = -1


@dataclass(frozen=True)
class Surface17Layout:
    x_checks: tuple = X_CHECKS
    z_checks: tuple = Z_CHECKS
    logical_z: tuple = LOGICAL_Z
    logical_x: tuple = LOGICAL_X

    @property
    def n_qubits(self) -> int:
        return N_DATA + len(self.x_checks) + len(self.z_checks)

    def ancilla(self, kind: str, k: int) -> int:
        """Qubit index of check ``k`` of type ``'x'`` or ``'z'``."""
        return N_DATA + k if kind == "x" else N_DATA + len(self.x_checks) + k

    def stabilizers(self) -> list[str]:
        """Checks as Pauli strings over the data qubits (qubit 0 first)."""
        out = []
        for kind, checks in (("X", self.x_checks), ("Z", self.z_checks)):
            for support in checks:
                out.append("".join(kind if q in support else "I" for q in range(N_DATA)))
        return out


LAYOUT = Surface17Layout()


def paulis_commute(a: str, b: str) -> bool:
    anti = sum(1 for p, q in zip(a, b) if p != "I" and q != "I" and p != q)
    return anti % 2 == 0


# -- circuit ------------------------------------------------------------------------------------


def _half_round(c: sim.Circuit, kind: str, layout: Surface17Layout, measured: list):
    checks = layout.x_checks if kind == "x" else layout.z_checks
    layers = X_LAYERS if kind == "x" else Z_LAYERS
    ancillas = [layout.ancilla(kind, k) for k in range(len(checks))]
    for a in ancillas:
        c.prep(a)
    for a in ancillas:
        c.gate("ry90", a)
    if kind == "x":
        for d in range(N_DATA):
            c.gate("ry-90", d)
    for layer in layers:
        for k, d in layer:
            c.gate("cz", layout.ancilla(kind, k), d)
    if kind == "x":
        for d in range(N_DATA):
            c.gate("ry90", d)
    for a in ancillas:
        c.gate("ry-90", a)
    for k, a in enumerate(ancillas):
        c.measure(a)
        measured.append((kind, k))


@dataclass
class SurfaceExperiment:
    """A memory experiment: circuit, measurement bookkeeping, detectors and observable.

    Attributes:
        circuit: the full circuit.
        measurements: per measurement index, ``(kind, index, round)`` where
            kind is ``x``/``z`` (checks) or ``d`` (final data readout).
        detectors: per detector, the measurement indices whose XOR it is.
        detector_info: per detector, ``(kind, check, round)``; the final data
            layer uses round ``rounds``.
        observable: measurement indices whose XOR is the logical readout.
    """

    circuit: sim.Circuit
    rounds: int
    basis: str
    measurements: list
    detectors: list
    detector_info: list
    observable: list
    layout: Surface17Layout = LAYOUT

    def detection_events(self, bits: np.ndarray) -> np.ndarray:
        """Detector values, shape ``(shots, n_detectors)``, from measurement records."""
        bits = np.atleast_2d(bits)
        out = np.zeros((bits.shape[0], len(self.detectors)), dtype=np.uint8)
        for k, idx in enumerate(self.detectors):
            out[:, k] = np.bitwise_xor.reduce(bits[:, idx], axis=1)
        return out

    @property
    def decoded_detectors(self) -> list[int]:
        """Indices of the detectors built from checks of the memory basis."""
        return [k for k, (kind, _, _) in enumerate(self.detector_info) if kind == self.basis]

    def observed_logical(self, bits: np.ndarray) -> np.ndarray:
        bits = np.atleast_2d(bits)
        return np.bitwise_xor.reduce(bits[:, self.observable], axis=1)

    def syndrome_history(self, bits: np.ndarray) -> np.ndarray:
        """Check outcomes as ``(rounds, 8)`` (X checks then Z checks) for one shot."""
        bits = np.asarray(bits).ravel()
        hist = np.zeros((self.rounds, 8), dtype=np.uint8)
        for m, (kind, k, r) in enumerate(self.measurements):
            if kind in "xz":
                hist[r, k + (0 if kind == "x" else 4)] = bits[m]
        return hist


def build_surface17_circuit(rounds: int = 3, basis: str = "z", inject: tuple | None = None,
                            layout: Surface17Layout = LAYOUT) -> SurfaceExperiment:
    """Memory experiment circuit.

    Args:
        rounds: syndrome rounds (>= 1).
        basis: ``"z"`` (data in |0>, logical Z readout) or ``"x"`` (data in
            |+>, logical X readout).
        inject: optional ``(after_round, data_qubit, pauli)`` inserting an
            ``x``/``y``/``z`` gate on a data qubit after the given round.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if basis not in ("x", "z"):
        raise ValueError("basis must be 'x' or 'z'")
    c = sim.Circuit(layout.n_qubits)
    for d in range(N_DATA):
        c.prep(d)
    if basis == "x":
        for d in range(N_DATA):
            c.gate("ry90", d)
    measurements = []
    for r in range(rounds):
        measured = []
        _half_round(c, "z", layout, measured)
        _half_round(c, "x", layout, measured)
        measurements.extend((kind, k, r) for kind, k in measured)
        if inject is not None and inject[0] == r:
            c.gate(inject[2].lower(), inject[1])
    if basis == "x":
        for d in range(N_DATA):
            c.gate("ry-90", d)
    for d in range(N_DATA):
        c.measure(d)
        measurements.append(("d", d, rounds))

    index = {m: i for i, m in enumerate(measurements)}
    detectors, info = [], []
    for r in range(rounds):
        for kind, checks in (("z", layout.z_checks), ("x", layout.x_checks)):
            for k in range(len(checks)):
                if r == 0 and kind != basis:
                    continue  # random first outcome
                idx = [index[(kind, k, r)]]
                if r > 0:
                    idx.append(index[(kind, k, r - 1)])
                detectors.append(idx)
                info.append((kind, k, r))
    checks = layout.z_checks if basis == "z" else layout.x_checks
    for k, support in enumerate(checks):
        idx = [index[("d", d, rounds)] for d in support] + [index[(basis, k, rounds - 1)]]
        detectors.append(idx)
        info.append((basis, k, rounds))
    logical = layout.logical_z if basis == "z" else layout.logical_x
    observable = [index[("d", d, rounds)] for d in logical]
    return SurfaceExperiment(c, rounds, basis, measurements, detectors, info, observable, layout)


# -- fault propagation -------------------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def _clifford_map(name: str) -> tuple:
    """Images of every Pauli index under conjugation by an ideal Clifford gate (signs dropped)."""
    u = gateset.IDEAL_GATES[name]
    n = qcore.n_qubits_of(u.shape[0])
    paulis = qcore.pauli_basis(n)
    out = []
    for p in paulis:
        img = u @ p @ u.conj().T
        overlaps = np.abs(np.einsum("kab,ba->k", paulis, img)) / 2**n
        k = int(np.argmax(overlaps))
        if abs(overlaps[k] - 1) > 1e-9:
            raise ValueError(f"gate {name!r} is not a Clifford")
        out.append(k)
    return tuple(out)


def _propagate(circuit: sim.Circuit, start: int, qubit: int, pauli: int, n_meas: int) -> np.ndarray:
    """Measurement flips caused by ``pauli`` on ``qubit`` right after instruction ``start``."""
    frame = {qubit: pauli}
    flips = np.zeros(n_meas, dtype=np.uint8)
    m = sum(1 for ins in circuit.instructions[:start + 1] if ins.op == "measure")
    for ins in circuit.instructions[start + 1:]:
        if ins.op == "measure":
            if frame.get(ins.qubits[0], 0) in (1, 2):
                flips[m] = 1
            frame.pop(ins.qubits[0], None)
            m += 1
        elif ins.op == "prep":
            frame.pop(ins.qubits[0], None)
        else:
            local = sum(frame.get(q, 0) << (2 * i) for i, q in enumerate(ins.qubits))
            if local:
                image = _clifford_map(ins.name)[local]
                for i, q in enumerate(ins.qubits):
                    p = (image >> (2 * i)) & 3
                    if p:
                        frame[q] = p
                    else:
                        frame.pop(q, None)
        if not frame:
            break
    return flips


@dataclass
class DecodingGraph:
    """Unit-weight graph over detectors plus a boundary node.

    ``edges`` maps a sorted pair ``(u, v)`` (``v`` may be :data:`BOUNDARY`)
    to the logical-observable flip of the fault that produced it.
    """

    n_detectors: int
    edges: dict = field(default_factory=dict)

    def neighbors(self) -> dict:
        adj = {BOUNDARY: []}
        for k in range(self.n_detectors):
            adj[k] = []
        for (u, v), obs in self.edges.items():
            adj[u].append((v, obs))
            adj[v].append((u, obs))
        return adj

    @functools.cached_property
    def _shortest(self) -> dict:
        """BFS distance and path observable parity from every node."""
        adj = self.neighbors()
        table = {}
        for src in adj:
            dist, par = {src: 0}, {src: 0}
            queue = deque([src])
            while queue:
                u = queue.popleft()
                for v, obs in adj[u]:
                    if v not in dist:
                        dist[v] = dist[u] + 1
                        par[v] = par[u] ^ obs
                        queue.append(v)
            table[src] = (dist, par)
        return table

    def distance(self, u: int, v: int) -> tuple[float, int]:
        dist, par = self._shortest[u]
        if v not in dist:
            return np.inf, 0
        return dist[v], par[v]


@functools.lru_cache(maxsize=None)
def decoding_graph(rounds: int, basis: str) -> DecodingGraph:
    """Graph of every single-qubit Pauli fault that flips one or two decoded detectors.

    Only detectors of the memory basis are decoded (the other check type
    carries no information about the logical readout); they keep their
    global indices and the others are left isolated.
    """
    exp = build_surface17_circuit(rounds, basis)
    n_meas = len(exp.measurements)
    det_matrix = np.zeros((len(exp.detectors), n_meas), dtype=np.uint8)
    for k in exp.decoded_detectors:
        det_matrix[k, exp.detectors[k]] = 1
    obs_vec = np.zeros(n_meas, dtype=np.uint8)
    obs_vec[exp.observable] = 1
    graph = DecodingGraph(len(exp.detectors))
    for pos, ins in enumerate(exp.circuit.instructions):
        if ins.op == "measure":
            # a readout error flips the result itself
            locations = [(pos - 1, ins.qubits[0], 1)]
        else:
            locations = [(pos, q, p) for q in ins.qubits for p in (1, 2, 3)]
        for start, q, p in locations:
            flips = _propagate(exp.circuit, start, q, p, n_meas)
            dets = np.nonzero(det_matrix @ flips % 2)[0]
            obs = int(obs_vec @ flips % 2)
            if len(dets) == 1:
                key = (int(dets[0]), BOUNDARY)
            elif len(dets) == 2:
                key = (int(dets[0]), int(dets[1]))
            else:
                continue
            graph.edges.setdefault(key, obs)
    return graph


# -- matching ------------------------------------------------------------------------------------

EXHAUSTIVE_LIMIT = 14


def _match_exhaustive(events: list[int], graph: DecodingGraph) -> tuple[float, int]:
    """Exact minimum-weight matching of events (with boundary) by bitmask recursion."""
    k = len(events)
    pair = [[graph.distance(events[i], events[j]) for j in range(k)] for i in range(k)]
    bnd = [graph.distance(e, BOUNDARY) for e in events]

    @functools.lru_cache(maxsize=None)
    def best(mask: int) -> tuple[float, int]:
        if mask == 0:
            return 0.0, 0
        i = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << i)
        w, o = bnd[i]
        sub_w, sub_o = best(rest)
        choice = (w + sub_w, o ^ sub_o)
        j_mask = rest
        while j_mask:
            j = (j_mask & -j_mask).bit_length() - 1
            j_mask &= j_mask - 1
            w, o = pair[i][j]
            sub_w, sub_o = best(rest & ~(1 << j))
            if w + sub_w < choice[0]:
                choice = (w + sub_w, o ^ sub_o)
        return choice

    return best((1 << k) - 1)


def _match_blossom(events: list[int], graph: DecodingGraph) -> tuple[float, int]:
    """Same matching via a blossom solver, with one private boundary copy per event."""
    g = nx.Graph()
    k = len(events)
    for i in range(k):
        for j in range(i + 1, k):
            w, _ = graph.distance(events[i], events[j])
            if np.isfinite(w):
                g.add_edge(("e", i), ("e", j), weight=w)
                g.add_edge(("b", i), ("b", j), weight=0.0)
        w, _ = graph.distance(events[i], BOUNDARY)
        if np.isfinite(w):
            g.add_edge(("e", i), ("b", i), weight=w)
    matching = nx.min_weight_matching(g)
    total, obs = 0.0, 0
    for a, b in matching:
        if a[0] == "b" and b[0] == "b":
            continue
        if a[0] == "b":
            a, b = b, a
        if b[0] == "b":
            w, o = graph.distance(events[a[1]], BOUNDARY)
        else:
            w, o = graph.distance(events[a[1]], events[b[1]])
        total += w
        obs ^= o
    return total, obs


def match(events: list[int], graph: DecodingGraph) -> tuple[float, int]:
    """Minimum total weight and the logical parity of the chosen correction."""
    if not events:
        return 0.0, 0
    if len(events) <= EXHAUSTIVE_LIMIT:
        return _match_exhaustive(list(events), graph)
    return _match_blossom(list(events), graph)


def decode_mwpm(detection: np.ndarray, graph: DecodingGraph) -> int:
    """Predicted logical flip (0/1) for one shot's detection events."""
    events = [int(k) for k in np.nonzero(np.asarray(detection))[0]]
    weight, obs = match(events, graph)
    if not np.isfinite(weight):
        raise RuntimeError("detection events cannot be matched (no boundary path)")
    return obs


def logical_failures(exp: SurfaceExperiment, bits: np.ndarray) -> np.ndarray:
    """Per shot, whether the decoded logical readout differs from the prepared value."""
    graph = decoding_graph(exp.rounds, exp.basis)
    det = exp.detection_events(bits)
    det[:, [k for k in range(det.shape[1]) if k not in set(exp.decoded_detectors)]] = 0
    observed = exp.observed_logical(bits)
    cache = {}
    out = np.zeros(len(det), dtype=np.uint8)
    for s, row in enumerate(det):
        key = row.tobytes()
        if key not in cache:
            cache[key] = decode_mwpm(row, graph)
        out[s] = observed[s] ^ cache[key]
    return out


# -- logical error rates and thresholds -----------------------------------------------------------


@dataclass
class LogicalRate:
    fidelity: float
    shots: int
    errors: int
    ci_low: float
    ci_high: float

    @property
    def rate(self) -> float:
        return self.errors / self.shots


def wilson_interval(errors: int, shots: int, alpha: float = 0.05) -> tuple[float, float]:
    low, high = proportion_confint(errors, shots, alpha=alpha, method="wilson")
    return float(low), float(high)


SURFACE_GATES = ("ry90", "ry-90", "cz")


def surface_noise_model(gs: gateset.GateSetModel, fidelity: float,
                        opts: approx.UmcOptions | None = None) -> sim.NoiseModel:
    """UMC noise model of ``gs`` with every operation scaled to ``fidelity``."""
    scaled = gateset.scale_gateset(gs, fidelity, SURFACE_GATES)
    return sim.NoiseModel.from_gateset(scaled, "umc", opts)


def estimate_logical_error_rate(gs: gateset.GateSetModel, fidelity: float, rounds: int = 3,
                                shots: int = 10_000, seed: int = 0, basis: str = "z",
                                workers: int = 1, opts: approx.UmcOptions | None = None,
                                model: sim.NoiseModel | None = None) -> LogicalRate:
    """Fraction of shots whose decoded logical readout is wrong (no idle noise)."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    exp = build_surface17_circuit(rounds, basis)
    if model is None:
        model = sim.NoiseModel.ideal() if fidelity >= 1 else surface_noise_model(gs, fidelity, opts)
    bits = sim.sample_bits(exp.circuit, model, shots, seed, workers)
    errors = int(logical_failures(exp, bits).sum())
    low, high = wilson_interval(errors, shots)
    return LogicalRate(fidelity, shots, errors, low, high)


@dataclass
class ThresholdEstimate:
    points: list
    crossing: float
    bracket: tuple
    reference: str = "1 - F"


def _crossings(fids: np.ndarray, rates: np.ndarray) -> list[float]:
    """Fidelities where the log-linear interpolation of ``rates`` meets ``1 - f``."""
    floor = 1e-12
    diff = np.log(np.maximum(rates, floor)) - np.log(1 - fids)
    out = []
    for i in range(len(fids) - 1):
        a, b = diff[i], diff[i + 1]
        if a == 0:
            out.append(float(fids[i]))
        elif a * b < 0:
            out.append(float(fids[i] + (fids[i + 1] - fids[i]) * a / (a - b)))
    if diff[-1] == 0:
        out.append(float(fids[-1]))
    return out


def estimate_pseudo_threshold(sweep: list) -> ThresholdEstimate:
    """Crossing of the logical-rate curve with the physical line ``r = 1 - f``.

    Args:
        sweep: ``(fidelity, rate, ci_low, ci_high)`` tuples or
            :class:`LogicalRate` objects.

    Raises:
        ValueError: if the sweep does not straddle the reference line.
    """
    pts = []
    for p in sweep:
        if isinstance(p, LogicalRate):
            pts.append((p.fidelity, p.rate, p.ci_low, p.ci_high))
        else:
            f, r, *ci = p
            lo, hi = (ci + [r, r])[:2] if ci else (r, r)
            pts.append((f, r, lo, hi))
    pts.sort()
    fids = np.array([p[0] for p in pts])
    cross = _crossings(fids, np.array([p[1] for p in pts]))
    if not cross:
        raise ValueError(f"sweep over fidelities {fids.min()}..{fids.max()} does not cross r = 1 - f")
    ends = cross[:1]
    for col in (2, 3):
        c = _crossings(fids, np.array([p[col] for p in pts]))
        ends.append(c[0] if c else (fids[0] if col == 3 else fids[-1]))
    return ThresholdEstimate(pts, cross[0], (float(min(ends)), float(max(ends))))
