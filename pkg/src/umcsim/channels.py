"""Parametrized channel families and Lindbladian error generators.

The building blocks of a UMC decomposition are

* single-qubit unitaries ``U = Rz(t1) Ry(t2) Rz(t3)``,
* two-qubit unitaries ``U = exp(-i sum_k t_k P_k)`` over the 15 non-identity
  two-qubit Paulis (index order of :func:`umcsim.qcore.pauli_label`),
* measurement channels with Kraus pair ``{|f1><f|, |f2><fbar|}`` where
  ``|f1> = U(b1,b2,b3)|0>``, ``|f2> = U(b4,b5,b6)|1>`` and
  ``<f| = <0|U(b7,b8,b9)``, ``<fbar| = <1|U(b7,b8,b9)``,

and convex sums of them.  Everything returns PTMs (see :mod:`umcsim.qcore`).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
import scipy.linalg

from . import qcore

TWO_PI = 2 * np.pi


class ChannelError(ValueError):
    """A channel failed validation (simplex violated, not CPTP, ...)."""


class BranchCutError(ChannelError):
    """The matrix logarithm has no unambiguous principal branch."""


# -- elementary gates -------------------------------------------------------------


def rx(angle: float) -> np.ndarray:
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def ry(angle: float) -> np.ndarray:
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz(angle: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * angle), np.exp(0.5j * angle)])


def wrap_angles(theta: np.ndarray) -> np.ndarray:
    """Wrap angles into ``[0, 2 pi)``."""
    out = np.mod(np.asarray(theta, dtype=float), TWO_PI)
    out[out >= TWO_PI] = 0.0  # mod can round up to exactly 2 pi
    return out


def euler_unitary(theta: Sequence[float]) -> np.ndarray:
    """``Rz(theta[0]) Ry(theta[1]) Rz(theta[2])``."""
    t1, t2, t3 = theta
    return rz(t1) @ ry(t2) @ rz(t3)


def euler_angles(u: np.ndarray) -> np.ndarray:
    """ZYZ angles of a 2x2 unitary, up to global phase (inverse of :func:`euler_unitary`)."""
    u = np.asarray(u, dtype=complex)
    u = u / np.sqrt(np.linalg.det(u))
    # u = [[e^{-i(a+c)/2} cos(b/2), -e^{-i(a-c)/2} sin(b/2)],
    #      [e^{ i(a-c)/2} sin(b/2),  e^{ i(a+c)/2} cos(b/2)]]
    b = 2 * np.arctan2(abs(u[1, 0]), abs(u[0, 0]))
    plus = 2 * np.angle(u[1, 1]) if abs(u[1, 1]) > 1e-12 else 0.0
    minus = 2 * np.angle(u[1, 0]) if abs(u[1, 0]) > 1e-12 else 0.0
    return wrap_angles(np.array([(plus + minus) / 2, b, (plus - minus) / 2]))


def pauli_generator_unitary(theta: Sequence[float]) -> np.ndarray:
    """``exp(-i sum_k theta_k P_k)`` over the 15 non-identity two-qubit Paulis."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (15,):
        raise qcore.DimensionError(f"expected 15 coefficients, got {theta.shape}")
    h = np.einsum("k,kab->ab", theta, qcore.pauli_basis(2)[1:])
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w)) @ v.conj().T


def pauli_generator_coefficients(u: np.ndarray) -> np.ndarray:
    """Coefficients ``theta`` with ``exp(-i sum theta_k P_k) = u`` up to global phase."""
    u = np.asarray(u, dtype=complex)
    u = u / np.linalg.det(u) ** 0.25
    h = 1j * scipy.linalg.logm(u)
    h = (h + h.conj().T) / 2
    paulis = qcore.pauli_basis(2)[1:]
    return np.einsum("kab,ba->k", paulis, h).real / 4


def measurement_kraus(beta: Sequence[float]) -> list[np.ndarray]:
    """Kraus pair ``[|f1><f|, |f2><fbar|]`` of a measurement channel."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (9,):
        raise qcore.DimensionError(f"expected 9 angles, got {beta.shape}")
    f1 = euler_unitary(beta[0:3])[:, 0]
    f2 = euler_unitary(beta[3:6])[:, 1]
    basis = euler_unitary(beta[6:9])
    bra_f, bra_fbar = basis[0], basis[1]
    return [np.outer(f1, bra_f), np.outer(f2, bra_fbar)]


def measurement_bloch(beta: Sequence[float]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bloch vectors ``(a, b, n)`` of ``|f1>``, ``|f2>`` and the measured state ``|f>``."""
    beta = np.asarray(beta, dtype=float)
    f1 = euler_unitary(beta[0:3])[:, 0]
    f2 = euler_unitary(beta[3:6])[:, 1]
    f = euler_unitary(beta[6:9])[0].conj()
    return tuple(qcore.bloch_vector(np.outer(v, v.conj())) for v in (f1, f2, f))


def measurement_ptm(beta: Sequence[float]) -> np.ndarray:
    """PTM of a measurement channel.

    For Bloch vectors ``a``, ``b`` of the two output states and ``n`` of the
    measured state, ``r -> (a + b)/2 + (a - b)(n . r)/2``.
    """
    a, b, n = measurement_bloch(beta)
    out = np.zeros((4, 4))
    out[0, 0] = 1.0
    out[1:, 0] = (a + b) / 2
    out[1:, 1:] = np.outer(a - b, n) / 2
    return out


def unitary_channel_1q(theta: Sequence[float]) -> np.ndarray:
    return qcore.unitary_to_ptm(euler_unitary(theta))


def unitary_channel_2q(theta: Sequence[float]) -> np.ndarray:
    return qcore.unitary_to_ptm(pauli_generator_unitary(theta))


def measurement_channel(beta: Sequence[float]) -> list[np.ndarray]:
    """Kraus representation of a measurement channel (alias of :func:`measurement_kraus`)."""
    return measurement_kraus(beta)


# -- convex-sum terms -------------------------------------------------------------


@dataclass(frozen=True)
class UnitaryTerm:
    """A unitary channel; 3 Euler angles (one qubit) or 15 Pauli coefficients (two)."""

    theta: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if theta.shape not in ((3,), (15,)):
            raise qcore.DimensionError(f"unitary term needs 3 or 15 parameters, got {theta.shape}")
        object.__setattr__(self, "theta", theta)

    @property
    def n_qubits(self) -> int:
        return 1 if self.theta.shape == (3,) else 2

    @property
    def kind(self) -> str:
        return "unitary"

    def unitary(self) -> np.ndarray:
        if self.n_qubits == 1:
            return euler_unitary(self.theta)
        return pauli_generator_unitary(self.theta)

    def kraus(self) -> list[np.ndarray]:
        return [self.unitary()]

    def ptm(self) -> np.ndarray:
        return qcore.unitary_to_ptm(self.unitary())

    def to_dict(self) -> dict:
        return {"kind": "unitary", "theta": self.theta.tolist()}


MEASUREMENT_TAGS = {
    # tag: (qubits measured, operator width)
    "meas": ((0,), 1),
    "meas_q0": ((0,), 2),  # I (x) M
    "meas_q1": ((1,), 2),  # M (x) I
    "meas_pair": ((0, 1), 2),  # M (x) M
}


@dataclass(frozen=True)
class MeasurementTerm:
    """Measurement channel(s) on some qubits of a one- or two-qubit operation.

    ``betas`` holds one 9-angle vector per entry of ``qubits``.  Tags follow
    :data:`MEASUREMENT_TAGS`; with qubit 0 the least significant factor,
    ``meas_q1`` is ``M (x) I`` and ``meas_q0`` is ``I (x) M``.
    """

    tag: str
    betas: tuple

    def __post_init__(self):
        if self.tag not in MEASUREMENT_TAGS:
            raise ValueError(f"unknown measurement tag {self.tag!r}")
        betas = tuple(np.asarray(b, dtype=float) for b in self.betas)
        if len(betas) != len(self.qubits) or any(b.shape != (9,) for b in betas):
            raise qcore.DimensionError(f"{self.tag} needs {len(self.qubits)} vectors of 9 angles")
        object.__setattr__(self, "betas", betas)

    @property
    def qubits(self) -> tuple:
        return MEASUREMENT_TAGS[self.tag][0]

    @property
    def n_qubits(self) -> int:
        return MEASUREMENT_TAGS[self.tag][1]

    @property
    def kind(self) -> str:
        return self.tag

    def kraus(self) -> list[np.ndarray]:
        per_qubit = {q: measurement_kraus(b) for q, b in zip(self.qubits, self.betas)}
        eye = [np.eye(2)]
        if self.n_qubits == 1:
            return per_qubit[0]
        return [np.kron(k1, k0) for k1 in per_qubit.get(1, eye) for k0 in per_qubit.get(0, eye)]

    def ptm(self) -> np.ndarray:
        per_qubit = {q: measurement_ptm(b) for q, b in zip(self.qubits, self.betas)}
        if self.n_qubits == 1:
            return per_qubit[0]
        return np.kron(per_qubit.get(1, np.eye(4)), per_qubit.get(0, np.eye(4)))

    def to_dict(self) -> dict:
        return {"kind": self.tag, "beta": [b.tolist() for b in self.betas]}


Term = Union[UnitaryTerm, MeasurementTerm]


def term_from_dict(data: dict) -> Term:
    if data["kind"] == "unitary":
        return UnitaryTerm(np.array(data["theta"]))
    return MeasurementTerm(data["kind"], tuple(np.array(b) for b in data["beta"]))


def check_simplex(p: Sequence[float], tol: float = 1e-9) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ChannelError("probabilities must be a non-empty vector")
    if np.any(p < -tol) or abs(p.sum() - 1) > tol:
        raise ChannelError(f"probabilities are not on the simplex (sum {p.sum():.12g}, min {p.min():.3g})")
    return p


@dataclass(frozen=True)
class ConvexSumChannel:
    """``sum_i p_i Lambda_i`` over unitary and measurement terms."""

    p: np.ndarray
    terms: tuple = field(default_factory=tuple)

    def __post_init__(self):
        p = check_simplex(self.p)
        terms = tuple(self.terms)
        if len(terms) != p.size:
            raise ChannelError(f"{p.size} probabilities for {len(terms)} terms")
        widths = {t.n_qubits for t in terms}
        if len(widths) != 1:
            raise qcore.DimensionError(f"terms act on different numbers of qubits: {sorted(widths)}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "terms", terms)

    @property
    def n_qubits(self) -> int:
        return self.terms[0].n_qubits

    def ptm(self) -> np.ndarray:
        return convex_sum_ptm(self)

    def to_dict(self) -> dict:
        return {"p": self.p.tolist(), "terms": [t.to_dict() for t in self.terms]}

    @classmethod
    def from_dict(cls, data: dict) -> "ConvexSumChannel":
        return cls(np.array(data["p"]), tuple(term_from_dict(t) for t in data["terms"]))


def convex_sum_ptm(c: ConvexSumChannel) -> np.ndarray:
    """``sum_i p_i PTM(Lambda_i)``."""
    check_simplex(c.p)
    return sum(pi * t.ptm() for pi, t in zip(c.p, c.terms))


# -- Lindbladian error generators -------------------------------------------------


def superop_to_ptm(fn, n_qubits: int) -> np.ndarray:
    """PTM of an arbitrary linear map given as a Python function on matrices."""
    b = qcore._normalized_basis(n_qubits)
    images = np.array([fn(bj) for bj in b])
    return np.einsum("iab,jba->ij", b, images).real


def lindbladian_ptm(hamiltonian: np.ndarray | None, jumps: Sequence[np.ndarray], n_qubits: int) -> np.ndarray:
    """PTM of ``L(rho) = -i[H, rho] + sum_k (A_k rho A_k^dag - {A_k^dag A_k, rho}/2)``.

    Rates are folded into the jump operators.
    """
    d = 2**n_qubits
    h = np.zeros((d, d), complex) if hamiltonian is None else np.asarray(hamiltonian, complex)
    jumps = [np.asarray(a, complex) for a in jumps]
    anti = sum((a.conj().T @ a for a in jumps), np.zeros((d, d), complex))

    def fn(rho):
        out = -1j * (h @ rho - rho @ h) - 0.5 * (anti @ rho + rho @ anti)
        for a in jumps:
            out = out + a @ rho @ a.conj().T
        return out

    return superop_to_ptm(fn, n_qubits)


def error_generator(g_target: np.ndarray, g_noisy: np.ndarray) -> np.ndarray:
    """Principal logarithm ``L`` of ``G_target^-1 G_noisy``, so ``G_noisy = G_target e^L``.

    Raises:
        BranchCutError: if ``G_target^-1 G_noisy`` has an eigenvalue on the
            closed negative real axis (the principal branch is ambiguous there).
    """
    g_target = np.asarray(g_target, dtype=float)
    g_noisy = np.asarray(g_noisy, dtype=float)
    if g_target.shape != g_noisy.shape:
        raise qcore.DimensionError(f"shape mismatch {g_target.shape} vs {g_noisy.shape}")
    m = np.linalg.solve(g_target, g_noisy)
    ev = np.linalg.eigvals(m)
    bad = ev[(np.abs(ev.imag) <= 1e-10) & (ev.real <= 1e-12)]
    if bad.size:
        raise BranchCutError(f"eigenvalue {bad[0]:.3g} on the closed negative real axis; no principal logarithm")
    gen = scipy.linalg.logm(m)
    if np.max(np.abs(gen.imag)) > 1e-8:
        raise BranchCutError("matrix logarithm is not real")
    gen = gen.real
    recon = g_target @ scipy.linalg.expm(gen)
    err = np.max(np.abs(recon - g_noisy))
    if err > 1e-9:
        raise BranchCutError(f"logarithm does not reconstruct the gate (error {err:.2e})")
    return gen


def scale_channel(g_target: np.ndarray, generator: np.ndarray, n: float, tol: float = qcore.CP_TOL) -> np.ndarray:
    """``G_target exp(n L)``, checked to be CPTP.

    Raises:
        ChannelError: if the scaled map is not CPTP within ``tol``.
    """
    if n < 0:
        raise ValueError(f"scale factor must be non-negative, got {n}")
    g = np.asarray(g_target, dtype=float) @ scipy.linalg.expm(n * np.asarray(generator, dtype=float))
    g[0] = 0.0
    g[0, 0] = 1.0  # trace preservation is exact for a generator with zero first row
    report = qcore.validate_cptp(g, tol)
    if not report.ok:
        raise ChannelError(f"scaled channel (n={n}) is not CPTP: min Choi eigenvalue {report.min_choi_eig:.3e}")
    return g


def infidelity(ptm: np.ndarray, target: np.ndarray) -> float:
    return 1.0 - qcore.average_gate_fidelity(ptm, target)


def scale_to_fidelity(g_target: np.ndarray, generator: np.ndarray, fidelity: float,
                      tol: float = 1e-10, max_scale: float = 1e6) -> tuple[float, np.ndarray]:
    """Find ``n`` with ``F_avg(G_target e^{nL}) = fidelity`` by bisection.

    Assumes the infidelity grows monotonically in ``n``, which holds for the
    small error generators this package builds.

    Returns:
        ``(n, scaled PTM)``.
    """
    target_inf = 1.0 - fidelity
    if target_inf < 0:
        raise ValueError(f"fidelity {fidelity} exceeds 1")
    if target_inf == 0:
        return 0.0, np.asarray(g_target, dtype=float).copy()

    def inf_at(n):
        return infidelity(np.asarray(g_target) @ scipy.linalg.expm(n * generator), g_target)

    lo, hi = 0.0, 1.0
    while inf_at(hi) < target_inf:
        lo, hi = hi, 2 * hi
        if hi > max_scale:
            raise ChannelError(f"fidelity {fidelity} not reachable with this error generator")
    for _ in range(200):
        mid = (lo + hi) / 2
        if inf_at(mid) < target_inf:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * hi:
            break
    n = (lo + hi) / 2
    return n, scale_channel(g_target, generator, n)
