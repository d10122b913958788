"""Gate-set models: ideal gate registry, JSON file format and synthetic noisy sets.

A gate set holds a PTM per named gate, the prepared state ``|rho0>>`` and the
measurement effect ``<<E|`` (both 4-vectors in the normalized Pauli basis).
``E`` is the effect of outcome ``1``, so a perfect measurement has
``<<E| = (1/sqrt2, 0, 0, -1/sqrt2)``.

File format (JSON)::

    {
      "schema_version": 1,
      "basis": "pauli-normalized",
      "gates": {"ry90": {"qubits": 1, "target": "ry90", "ptm": [[...], ...]}, ...},
      "rho0": [..4..],
      "effect": [..4..],
      "metadata": {...}
    }

PTMs are row-major nested lists.  The ``target`` of a gate is a name in
:data:`IDEAL_GATES`; it defaults to the gate's own name.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import channels, qcore

SCHEMA_VERSION = 1
BASIS_TAG = "pauli-normalized"
SQRT_HALF = np.sqrt(0.5)
PERFECT_RHO0 = np.array([SQRT_HALF, 0.0, 0.0, SQRT_HALF])
PERFECT_EFFECT = np.array([SQRT_HALF, 0.0, 0.0, -SQRT_HALF])

_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
IDEAL_GATES: dict[str, np.ndarray] = {
    "idle": np.eye(2, dtype=complex),
    "i": np.eye(2, dtype=complex),
    "x": qcore.PAULI_1Q[1],
    "y": qcore.PAULI_1Q[2],
    "z": qcore.PAULI_1Q[3],
    "h": _H,
    "s": np.diag([1, 1j]),
    "t": np.diag([1, np.exp(0.25j * np.pi)]),
    "rx90": channels.rx(np.pi / 2),
    "rx180": channels.rx(np.pi),
    "rx-90": channels.rx(-np.pi / 2),
    "ry90": channels.ry(np.pi / 2),
    "ry180": channels.ry(np.pi),
    "ry-90": channels.ry(-np.pi / 2),
    "rz90": channels.rz(np.pi / 2),
    "rz180": channels.rz(np.pi),
    "rz-90": channels.rz(-np.pi / 2),
    "cz": np.diag([1, 1, 1, -1]).astype(complex),
    # control is qubit 1 (most significant factor), target qubit 0
    "cnot": np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
}
for _u in IDEAL_GATES.values():
    _u.setflags(write=False)


class GateSetError(ValueError):
    """Base class for gate-set file problems."""


class SchemaError(GateSetError):
    pass


class BasisTagError(GateSetError):
    pass


class CptpViolationError(GateSetError):
    def __init__(self, gate: str, min_eig: float):
        super().__init__(f"gate {gate!r} is not CPTP (min Choi eigenvalue {min_eig:.3e})")
        self.gate = gate
        self.min_eig = min_eig


def ideal_ptm(name: str) -> np.ndarray:
    try:
        return qcore.unitary_to_ptm(IDEAL_GATES[name.lower()])
    except KeyError:
        raise KeyError(f"unknown ideal gate {name!r}") from None


def prep_fidelity(rho0: np.ndarray) -> float:
    """Fidelity of the prepared state with ``|0>``."""
    return float(np.dot(rho0, PERFECT_RHO0))


def meas_fidelity(effect: np.ndarray) -> float:
    """Assignment fidelity ``1 - (P(1|0) + P(0|1)) / 2`` of an outcome-1 effect."""
    e = qcore.from_pauli_vector(np.asarray(effect, dtype=float))
    p1_given0 = e[0, 0].real
    p0_given1 = 1.0 - e[1, 1].real
    return float(1.0 - (p1_given0 + p0_given1) / 2)


@dataclass
class GateSetModel:
    gates: dict
    targets: dict
    rho0: np.ndarray = field(default_factory=lambda: PERFECT_RHO0.copy())
    effect: np.ndarray = field(default_factory=lambda: PERFECT_EFFECT.copy())
    metadata: dict = field(default_factory=dict)

    def n_qubits(self, name: str) -> int:
        return qcore.n_qubits_of(int(round(np.sqrt(self.gates[name].shape[0]))))

    def target_ptm(self, name: str) -> np.ndarray:
        return ideal_ptm(self.targets.get(name, name))

    def fidelity(self, name: str) -> float:
        return qcore.average_gate_fidelity(self.gates[name], self.target_ptm(name))

    def error_generator(self, name: str) -> np.ndarray:
        return channels.error_generator(self.target_ptm(name), self.gates[name])

    @property
    def rho0_matrix(self) -> np.ndarray:
        return qcore.from_pauli_vector(self.rho0)

    @property
    def effect_matrix(self) -> np.ndarray:
        return qcore.from_pauli_vector(self.effect)

    def validate(self, tol: float = qcore.CP_TOL) -> None:
        for name, ptm in self.gates.items():
            report = qcore.validate_cptp(ptm, tol)
            if not report.ok:
                raise CptpViolationError(name, report.min_choi_eig)
            target = self.targets.get(name, name)
            if target.lower() not in IDEAL_GATES:
                raise SchemaError(f"gate {name!r} has unknown target {target!r}")
            if ideal_ptm(target).shape != ptm.shape:
                raise SchemaError(f"gate {name!r} has the wrong dimension for target {target!r}")
        if not qcore.is_density_matrix(self.rho0_matrix, 1e-9):
            raise SchemaError("rho0 is not a density matrix")
        w = np.linalg.eigvalsh(self.effect_matrix)
        if w[0] < -1e-9 or w[-1] > 1 + 1e-9:
            raise SchemaError("effect is not between 0 and I")

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "basis": BASIS_TAG,
            "gates": {
                name: {"qubits": self.n_qubits(name), "target": self.targets.get(name, name),
                       "ptm": np.asarray(ptm).tolist()}
                for name, ptm in self.gates.items()
            },
            "rho0": np.asarray(self.rho0).tolist(),
            "effect": np.asarray(self.effect).tolist(),
            "metadata": self.metadata,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")


def gateset_from_dict(data: dict, validate: bool = True) -> GateSetModel:
    if not isinstance(data, dict):
        raise SchemaError("gate set must be a JSON object")
    if data.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {data.get('schema_version')!r}")
    if data.get("basis") != BASIS_TAG:
        raise BasisTagError(f"basis tag must be {BASIS_TAG!r}, got {data.get('basis')!r}")
    try:
        gates, targets = {}, {}
        for name, entry in data["gates"].items():
            ptm = np.array(entry["ptm"], dtype=float)
            k = int(entry.get("qubits", qcore.n_qubits_of(int(round(np.sqrt(ptm.shape[0]))))))
            if ptm.shape != (4**k, 4**k):
                raise SchemaError(f"gate {name!r}: PTM shape {ptm.shape} does not match {k} qubit(s)")
            gates[name.lower()] = ptm
            targets[name.lower()] = str(entry.get("target", name)).lower()
        rho0 = np.array(data["rho0"], dtype=float)
        effect = np.array(data["effect"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(f"malformed gate set: {exc}") from exc
    if rho0.shape != (4,) or effect.shape != (4,):
        raise SchemaError("rho0 and effect must be 4-vectors")
    model = GateSetModel(gates, targets, rho0, effect, dict(data.get("metadata", {})))
    if validate:
        model.validate()
    return model


def load_gateset(path: str | Path) -> GateSetModel:
    """Read and validate a gate-set JSON file."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from exc
    return gateset_from_dict(data)


BUNDLED = ("ideal", "paper_like", "high_fidelity")


def bundled_path(name: str) -> Path:
    path = Path(__file__).parent / "data" / f"{name}.json"
    if not path.exists():
        raise FileNotFoundError(f"no bundled gate set {name!r}; choose from {BUNDLED}")
    return path


def resolve_gateset(spec: str | Path) -> GateSetModel:
    """Load a gate set from a path, or a bundled one by name."""
    if str(spec) in BUNDLED:
        return load_gateset(bundled_path(str(spec)))
    return load_gateset(spec)


# -- synthetic noise ---------------------------------------------------------------


@dataclass(frozen=True)
class NoiseProfile:
    """Shares of a gate's infidelity carried by each error mechanism.

    ``pauli_support`` is ``"all"`` (random rates on every non-identity Pauli)
    or ``"z"`` (only products of I and Z); ``diagonal_hamiltonian`` restricts
    the coherent error to Z-type terms.
    """

    coherent: float = 0.01
    damping: float = 0.1
    pauli_support: str = "all"
    diagonal_hamiltonian: bool = False

    @property
    def pauli(self) -> float:
        return 1.0 - self.coherent - self.damping


SINGLE_QUBIT_PROFILE = NoiseProfile()
TWO_QUBIT_PROFILE = NoiseProfile(coherent=0.2, damping=0.03, pauli_support="z", diagonal_hamiltonian=True)


def _random_hamiltonian(n: int, rng: np.random.Generator, diagonal: bool) -> np.ndarray:
    paulis = qcore.pauli_basis(n)
    idx = [i for i in range(1, 4**n) if not diagonal or set(qcore.pauli_label(i, n)) <= {"I", "Z"}]
    coef = rng.normal(size=len(idx))
    h = np.einsum("k,kab->ab", coef, paulis[idx])
    return h / np.linalg.norm(h, 2)


def _component_generators(n: int, profile: NoiseProfile, rng: np.random.Generator) -> list[tuple[float, np.ndarray]]:
    paulis = qcore.pauli_basis(n)
    comps = []
    if profile.coherent > 0:
        comps.append((profile.coherent, channels.lindbladian_ptm(_random_hamiltonian(n, rng, profile.diagonal_hamiltonian), [], n)))
    if profile.pauli > 0:
        idx = [i for i in range(1, 4**n)
               if profile.pauli_support == "all" or set(qcore.pauli_label(i, n)) <= {"I", "Z"}]
        rates = rng.dirichlet(np.ones(len(idx)))
        jumps = [np.sqrt(r) * paulis[i] for r, i in zip(rates, idx)]
        comps.append((profile.pauli, channels.lindbladian_ptm(None, jumps, n)))
    if profile.damping > 0:
        lower = np.array([[0, 1], [0, 0]], dtype=complex)
        jumps = []
        for q in range(n):
            op = np.ones((1, 1))
            for k in reversed(range(n)):
                op = np.kron(op, lower if k == q else np.eye(2))
            jumps.append(np.sqrt(rng.uniform(0.5, 1.5)) * op)
        comps.append((profile.damping, channels.lindbladian_ptm(None, jumps, n)))
    return comps


def random_error_generator(target: np.ndarray, infidelity: float, rng: np.random.Generator,
                           profile: NoiseProfile = SINGLE_QUBIT_PROFILE) -> np.ndarray:
    """GKSL error generator whose gate reaches ``infidelity`` with the profile's mix.

    Each mechanism is first scaled on its own to its share of the infidelity,
    then the sum is rescaled once more so the total hits the target.
    """
    n = qcore.n_qubits_of(int(round(np.sqrt(target.shape[0]))))
    total = np.zeros_like(target)
    for share, gen in _component_generators(n, profile, rng):
        scale, _ = channels.scale_to_fidelity(target, gen, 1.0 - share * infidelity)
        total = total + scale * gen
    scale, _ = channels.scale_to_fidelity(target, total, 1.0 - infidelity)
    return scale * total


def noisy_prep_state(fidelity: float, tilt: float = 0.05) -> np.ndarray:
    """``|rho0>>`` of a slightly mixed state tilted by ``tilt`` about Y with ``<0|rho0|0> = fidelity``."""
    rz_ = 2 * fidelity - 1
    length = rz_ / np.cos(tilt)
    if not 0 <= length <= 1:
        raise ValueError(f"prep fidelity {fidelity} with tilt {tilt} is not a valid state")
    bloch = length * np.array([np.sin(tilt), 0.0, np.cos(tilt)])
    return np.concatenate([[1.0], bloch]) * SQRT_HALF


def noisy_effect(fidelity: float, bias: float = 1.5) -> np.ndarray:
    """Outcome-1 effect ``(1-q1)|1><1| + q0|0><0|`` with assignment fidelity ``fidelity``.

    ``bias = q1 / q0`` makes the readout asymmetric (so ``Tr E != 1``).
    """
    total = 2 * (1 - fidelity)
    q0 = total / (1 + bias)
    q1 = total - q0
    e = np.diag([q0, 1 - q1]).astype(complex)
    return qcore.to_pauli_vector(e)


def interpolate_spam(vec: np.ndarray, perfect: np.ndarray, fidelity_fn, fidelity: float) -> np.ndarray:
    """Point on the line through ``perfect`` and ``vec`` with the requested fidelity.

    Both SPAM fidelities are affine in the vector, so this is exact.  Points
    beyond ``vec`` (lower fidelity) are allowed; callers validate the result.
    """
    f_perfect, f_vec = fidelity_fn(perfect), fidelity_fn(vec)
    if fidelity > f_perfect + 1e-12:
        raise ValueError(f"fidelity {fidelity} exceeds that of the perfect operation")
    if abs(f_perfect - f_vec) < 1e-15:
        if abs(fidelity - f_perfect) > 1e-12:
            raise ValueError("cannot scale an operation that is already perfect")
        return np.asarray(perfect, dtype=float).copy()
    t = (f_perfect - fidelity) / (f_perfect - f_vec)
    return (1 - t) * np.asarray(perfect, dtype=float) + t * np.asarray(vec, dtype=float)


def synthesize_noisy_gateset(targets: dict, infidelities: dict, seed: int,
                             spam: dict | None = None, profiles: dict | None = None) -> GateSetModel:
    """Synthetic gate set with prescribed average gate infidelities.

    Args:
        targets: gate name -> ideal gate name (see :data:`IDEAL_GATES`).
        infidelities: gate name -> ``1 - F_avg`` in ``(0, 0.2]``.
        seed: master seed; gate ``k`` (in ``targets`` order) uses child ``k``.
        spam: optional ``{"prep": F_prep, "meas": F_meas}``.
        profiles: optional gate name -> :class:`NoiseProfile`; defaults depend
            on the gate width.

    Raises:
        ValueError: for an infidelity outside ``(0, 0.2]``.
        channels.ChannelError: if bisection cannot reach a target.
    """
    profiles = profiles or {}
    children = np.random.SeedSequence(seed).spawn(len(targets))
    gates, fids = {}, {}
    for child, (name, target_name) in zip(children, targets.items()):
        inf = infidelities[name]
        if not 0 < inf <= 0.2:
            raise ValueError(f"infidelity for {name!r} must lie in (0, 0.2], got {inf}")
        target = ideal_ptm(target_name)
        default = SINGLE_QUBIT_PROFILE if target.shape[0] == 4 else TWO_QUBIT_PROFILE
        gen = random_error_generator(target, inf, np.random.default_rng(child), profiles.get(name, default))
        gates[name] = channels.scale_channel(target, gen, 1.0)
        fids[name] = qcore.average_gate_fidelity(gates[name], target)
    spam = spam or {}
    rho0 = noisy_prep_state(spam["prep"]) if "prep" in spam else PERFECT_RHO0.copy()
    effect = noisy_effect(spam["meas"]) if "meas" in spam else PERFECT_EFFECT.copy()
    meta = {
        "source": "synthetic",
        "seed": seed,
        "fidelity": fids,
        "prep_fidelity": prep_fidelity(rho0),
        "meas_fidelity": meas_fidelity(effect),
    }
    return GateSetModel(gates, dict(targets), rho0, effect, meta)


def ideal_gateset(names=("rx90", "rx180", "ry90", "ry180", "ry-90", "idle", "cz")) -> GateSetModel:
    return GateSetModel({n: ideal_ptm(n) for n in names}, {n: n for n in names},
                        metadata={"source": "ideal"})


def scale_gateset(gs: GateSetModel, fidelity: float, names=None) -> GateSetModel:
    """Copy of ``gs`` with every gate in ``names`` (default: all) and both SPAM
    operations moved to the same fidelity.

    Gates follow their own Lindblad error generator, ``G_t e^{nL}``; SPAM
    vectors move along the straight line from the perfect operation.
    """
    names = list(gs.gates) if names is None else list(names)
    gates, scales = {}, {}
    for name in names:
        if name not in gs.gates:
            raise GateSetError(f"gate set has no gate {name!r}")
        target = gs.target_ptm(name)
        gen = gs.error_generator(name)
        scales[name], gates[name] = channels.scale_to_fidelity(target, gen, fidelity)
    rho0 = interpolate_spam(gs.rho0, PERFECT_RHO0, prep_fidelity, fidelity)
    effect = interpolate_spam(gs.effect, PERFECT_EFFECT, meas_fidelity, fidelity)
    meta = dict(gs.metadata, scaled_to=fidelity, scales=scales)
    out = GateSetModel(gates, {n: gs.targets.get(n, n) for n in names}, rho0, effect, meta)
    out.validate()
    return out
