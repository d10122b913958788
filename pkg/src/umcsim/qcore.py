"""State and channel representations.

Conventions used throughout the package:

* Qubit 0 is the least significant bit of an amplitude index, so for a
  two-qubit operator ``kron(A, B)`` the factor ``B`` acts on qubit 0.
* Superoperators are Pauli transfer matrices (PTMs) in the normalized Pauli
  basis ``B_i = P_i / sqrt(d)``, with ``|rho>>_i = Tr(B_i rho)``.  The n-qubit
  Pauli index is ``i = sum_k i_k 4**k`` where ``i_k`` labels the Pauli
  (I, X, Y, Z) on qubit ``k``.
* Choi matrices are ``J = sum_ab Phi(E_ab) (x) E_ab`` (output factor first),
  so ``Tr J = d`` for trace-preserving maps and the identity channel maps to
  the unnormalized maximally entangled projector.

States, channels and Choi matrices are plain numpy arrays; the functions here
validate shapes and do the conversions.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.linalg

PAULI_1Q = np.array(
    [
        [[1, 0], [0, 1]],
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)
PAULI_LABELS = "IXYZ"

CP_TOL = 1e-8
TP_TOL = 1e-9


class DimensionError(ValueError):
    """Raised when operands have incompatible shapes."""


def n_qubits_of(dim: int) -> int:
    n = int(round(np.log2(dim)))
    if n < 0 or 2**n != dim:
        raise DimensionError(f"dimension {dim} is not a power of two")
    return n


@lru_cache(maxsize=None)
def pauli_basis(n_qubits: int) -> np.ndarray:
    """Unnormalized n-qubit Pauli matrices, shape (4**n, 2**n, 2**n)."""
    mats = PAULI_1Q
    for _ in range(n_qubits - 1):
        # new qubit becomes the most significant factor
        mats = np.einsum("iab,jcd->jicadb", mats, PAULI_1Q)
        k = mats.shape[0] * mats.shape[1]
        dim = mats.shape[2] * mats.shape[3]
        mats = mats.reshape(k, dim, dim)
    mats.setflags(write=False)
    return mats


def pauli_label(index: int, n_qubits: int) -> str:
    """Label such as ``"ZI"`` for a Pauli index; leftmost character is the highest qubit."""
    digits = [(index >> (2 * k)) & 3 for k in range(n_qubits)]
    return "".join(PAULI_LABELS[d] for d in reversed(digits))


def pauli_index(label: str) -> int:
    """Inverse of :func:`pauli_label`."""
    index = 0
    for k, ch in enumerate(reversed(label.upper())):
        index |= PAULI_LABELS.index(ch) << (2 * k)
    return index


@lru_cache(maxsize=None)
def _normalized_basis(n_qubits: int) -> np.ndarray:
    b = pauli_basis(n_qubits) / np.sqrt(2**n_qubits)
    b.setflags(write=False)
    return b


@lru_cache(maxsize=None)
def _vec_basis(n_qubits: int) -> np.ndarray:
    """Rows are conj(vec_row(B_i)) so that ``T @ vec_row(M)`` gives ``Tr(B_i M)``."""
    b = _normalized_basis(n_qubits)
    t = np.ascontiguousarray(b.transpose(0, 2, 1).reshape(b.shape[0], -1))
    t.setflags(write=False)
    return t


def ket(bits: str) -> np.ndarray:
    """Computational basis state; ``bits[0]`` is qubit 0."""
    n = len(bits)
    v = np.zeros(2**n, dtype=complex)
    v[sum(int(b) << k for k, b in enumerate(bits))] = 1.0
    return v


def projector(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def to_pauli_vector(rho: np.ndarray) -> np.ndarray:
    """``|rho>>`` in the normalized Pauli basis (complex for non-Hermitian input)."""
    rho = np.asarray(rho)
    n = n_qubits_of(rho.shape[0])
    v = _vec_basis(n) @ rho.reshape(-1)
    if np.isrealobj(rho) or np.allclose(rho, rho.conj().T):
        return v.real.copy()
    return v


def from_pauli_vector(vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec)
    n = n_qubits_of(int(round(np.sqrt(vec.shape[0]))))
    return np.einsum("i,iab->ab", vec, _normalized_basis(n))


# -- representation changes --------------------------------------------------


def _check_square(m: np.ndarray, what: str) -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"{what} must be square, got shape {m.shape}")
    return m


def kraus_to_ptm(kraus: Sequence[np.ndarray]) -> np.ndarray:
    """PTM with entries ``Tr(B_i sum_k K B_j K^dag)``.

    Args:
        kraus: Square Kraus operators of one common dimension.

    Returns:
        Real ``d**2 x d**2`` matrix.
    """
    ops = [np.asarray(k, dtype=complex) for k in kraus]
    if not ops:
        raise DimensionError("empty Kraus set")
    d = ops[0].shape[0]
    for k in ops:
        if k.shape != (d, d):
            raise DimensionError(f"Kraus operator shape {k.shape} does not match {(d, d)}")
    b = _normalized_basis(n_qubits_of(d))
    out = np.zeros((d * d, d * d))
    for k in ops:
        images = k @ b @ k.conj().T  # (d^2, d, d): K B_j K^dag
        out += np.einsum("iab,jba->ij", b, images).real
    return out


def unitary_to_ptm(u: np.ndarray) -> np.ndarray:
    return kraus_to_ptm([u])


def ptm_to_choi(ptm: np.ndarray) -> np.ndarray:
    """Choi matrix ``sum_ij R_ij B_i (x) B_j^T``."""
    r = _check_square(ptm, "PTM")
    n = n_qubits_of(int(round(np.sqrt(r.shape[0]))))
    if 4**n != r.shape[0]:
        raise DimensionError(f"PTM dimension {r.shape[0]} is not 4**n")
    b = _normalized_basis(n)
    d = 2**n
    # out[a, c, b, e] = sum_ij R_ij B_i[a, b] B_j^T[c, e]
    j = np.einsum("ij,iab,jec->acbe", r, b, b)
    return j.reshape(d * d, d * d)


def choi_to_ptm(choi: np.ndarray) -> np.ndarray:
    """Inverse of :func:`ptm_to_choi`; the imaginary part is dropped."""
    j = _check_square(choi, "Choi matrix")
    d = int(round(np.sqrt(j.shape[0])))
    if d * d != j.shape[0]:
        raise DimensionError(f"Choi dimension {j.shape[0]} is not d**2")
    b = _normalized_basis(n_qubits_of(d))
    jt = j.reshape(d, d, d, d)  # [a, c, b, e] with rows (a,c), cols (b,e)
    return np.einsum("acbe,iba,jce->ij", jt, b, b).real


def ptm_choi_convert(matrix: np.ndarray, direction: str) -> np.ndarray:
    """Convert between PTM and Choi; ``direction`` is ``"ptm->choi"`` or ``"choi->ptm"``."""
    if direction == "ptm->choi":
        return ptm_to_choi(matrix)
    if direction == "choi->ptm":
        return choi_to_ptm(matrix)
    raise ValueError(f"unknown direction {direction!r}")


def choi_to_kraus(choi: np.ndarray, tol: float = 1e-12) -> list[np.ndarray]:
    """Kraus operators from the eigendecomposition of a PSD Choi matrix."""
    j = _check_square(choi, "Choi matrix")
    d = int(round(np.sqrt(j.shape[0])))
    w, v = np.linalg.eigh((j + j.conj().T) / 2)
    ops = []
    for val, vec in zip(w[::-1], v.T[::-1]):
        if val <= tol:
            break
        # vec indexed (out a, in c): K[a, c] = sqrt(val) * vec[a, c]
        ops.append(np.sqrt(val) * vec.reshape(d, d))
    return ops


def ptm_to_kraus(ptm: np.ndarray) -> list[np.ndarray]:
    return choi_to_kraus(ptm_to_choi(ptm))


def ptm_embed(ptm: np.ndarray, qubits: Sequence[int], n_qubits: int) -> np.ndarray:
    """Embed a k-qubit PTM acting on ``qubits`` into an n-qubit PTM."""
    r = np.asarray(ptm)
    k = len(qubits)
    if r.shape != (4**k, 4**k):
        raise DimensionError(f"PTM shape {r.shape} does not act on {k} qubits")
    if len(set(qubits)) != k or any(q < 0 or q >= n_qubits for q in qubits):
        raise IndexError(f"invalid qubit indices {list(qubits)} for {n_qubits} qubits")
    others = [q for q in range(n_qubits) if q not in qubits]
    full = np.kron(np.eye(4 ** len(others)), r).reshape((4,) * (2 * n_qubits))
    # axis order of `full` as built: highest other ... lowest other, then qubits[k-1] ... qubits[0]
    built = list(reversed(others)) + list(reversed(list(qubits)))
    # move so that axis position p corresponds to qubit n-1-p
    perm = [built.index(n_qubits - 1 - p) for p in range(n_qubits)]
    full = full.transpose(perm + [n_qubits + x for x in perm])
    return full.reshape(4**n_qubits, 4**n_qubits)


# -- validation ---------------------------------------------------------------


@dataclass(frozen=True)
class CptpReport:
    is_tp: bool
    is_cp: bool
    min_choi_eig: float

    @property
    def ok(self) -> bool:
        return self.is_tp and self.is_cp


def validate_cptp(ptm: np.ndarray, tol: float = CP_TOL) -> CptpReport:
    """Report trace preservation (first-row test) and complete positivity (Choi spectrum)."""
    r = _check_square(ptm, "PTM")
    first = np.zeros(r.shape[0])
    first[0] = 1.0
    is_tp = bool(np.max(np.abs(r[0] - first)) <= TP_TOL)
    j = ptm_to_choi(r)
    min_eig = float(np.linalg.eigvalsh((j + j.conj().T) / 2)[0])
    return CptpReport(is_tp=is_tp, is_cp=min_eig >= -tol, min_choi_eig=min_eig)


def kraus_is_cptp(kraus: Sequence[np.ndarray], tol: float = 1e-9) -> bool:
    ops = [np.asarray(k) for k in kraus]
    s = sum(k.conj().T @ k for k in ops)
    return bool(np.allclose(s, np.eye(s.shape[0]), atol=tol))


def is_density_matrix(rho: np.ndarray, tol: float = 1e-9) -> bool:
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        return False
    if np.linalg.norm(rho - rho.conj().T) > 1e-10 + tol:
        return False
    if abs(np.trace(rho) - 1) > 1e-10 + tol:
        return False
    return bool(np.linalg.eigvalsh((rho + rho.conj().T) / 2)[0] >= -tol)


# -- fidelities -----------------------------------------------------------------


def process_fidelity(ptm: np.ndarray, target: np.ndarray) -> float:
    """``Tr(S_target^T S) / d**2`` (exact for a unitary target)."""
    s = _check_square(ptm, "PTM")
    t = _check_square(target, "target PTM")
    if s.shape != t.shape:
        raise DimensionError(f"shape mismatch {s.shape} vs {t.shape}")
    return float(np.trace(t.T @ s) / s.shape[0])


def average_gate_fidelity(ptm: np.ndarray, target: np.ndarray) -> float:
    """Average gate fidelity ``(d F_pro + 1) / (d + 1)`` against a unitary target."""
    f_pro = process_fidelity(ptm, target)
    d = int(round(np.sqrt(np.asarray(ptm).shape[0])))
    return float(min(1.0, max(0.0, (d * f_pro + 1) / (d + 1))))


def _psd_sqrt(a: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((a + a.conj().T) / 2)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T


def state_fidelity(a: np.ndarray, b: np.ndarray, tol: float = 1e-9) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(a) b sqrt(a)))**2``.

    Raises:
        ValueError: if either argument has an eigenvalue below ``-tol``.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    for m, name in ((a, "first"), (b, "second")):
        if np.linalg.eigvalsh((m + m.conj().T) / 2)[0] < -tol:
            raise ValueError(f"{name} argument is not positive semidefinite")
    sa = _psd_sqrt(a)
    inner = sa @ b @ sa
    w = np.linalg.eigvalsh((inner + inner.conj().T) / 2)
    return float(np.sum(np.sqrt(np.clip(w, 0, None))) ** 2)


# -- applying channels to states ---------------------------------------------------


def ptm_to_liouville(ptm: np.ndarray) -> np.ndarray:
    """Row-major computational superoperator ``S`` with ``vec(rho') = S vec(rho)``."""
    r = np.asarray(ptm)
    n = n_qubits_of(int(round(np.sqrt(r.shape[0]))))
    t = _vec_basis(n)
    # vec_row(B_i) = conj(t[i]) since B_i are Hermitian
    return t.conj().T @ r @ t


def apply_superop(ptm: np.ndarray, rho: np.ndarray, qubits: Sequence[int]) -> np.ndarray:
    """Apply a k-qubit PTM to the listed qubits of an n-qubit density matrix.

    ``qubits[0]`` receives the operator's qubit 0 (its least significant factor).
    """
    rho = np.asarray(rho, dtype=complex)
    n = n_qubits_of(rho.shape[0])
    k = len(qubits)
    r = np.asarray(ptm)
    if r.shape != (4**k, 4**k):
        raise DimensionError(f"PTM shape {r.shape} does not act on {k} qubits")
    if len(set(qubits)) != k or any(q < 0 or q >= n for q in qubits):
        raise IndexError(f"invalid qubit indices {list(qubits)} for {n} qubits")
    s = ptm_to_liouville(r).reshape((2,) * (4 * k))
    # s axes: out rows (k), out cols (k), in rows (k), in cols (k); each group high->low local qubit
    t = rho.reshape((2,) * (2 * n))
    row_axes = [n - 1 - q for q in reversed(list(qubits))]
    col_axes = [2 * n - 1 - q for q in reversed(list(qubits))]
    out = np.tensordot(s, t, axes=(list(range(2 * k, 4 * k)), row_axes + col_axes))
    # out axes: the 2k output axes followed by the untouched axes in original order
    rest = [a for a in range(2 * n) if a not in row_axes + col_axes]
    current = row_axes + col_axes + rest
    out = np.moveaxis(out, list(range(2 * n)), current)
    return out.reshape(2**n, 2**n)


def apply_unitary(u: np.ndarray, psi: np.ndarray, qubits: Sequence[int]) -> np.ndarray:
    """Apply a k-qubit unitary to a state vector (same qubit convention as :func:`apply_superop`)."""
    psi = np.asarray(psi, dtype=complex)
    n = n_qubits_of(psi.shape[0])
    k = len(qubits)
    t = psi.reshape((2,) * n)
    axes = [n - 1 - q for q in reversed(list(qubits))]
    out = np.tensordot(np.asarray(u).reshape((2,) * (2 * k)), t, axes=(list(range(k, 2 * k)), axes))
    out = np.moveaxis(out, list(range(k)), axes)
    return out.reshape(-1)


# -- misc helpers -------------------------------------------------------------------


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_kraus(d: int, rank: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Random CPTP Kraus set from a Haar isometry."""
    u = random_unitary(d * rank, rng)
    iso = u[:, :d]
    return [iso[k * d:(k + 1) * d] for k in range(rank)]


def random_cptp_ptm(n_qubits: int, rng: np.random.Generator, rank: int = 2) -> np.ndarray:
    return kraus_to_ptm(random_kraus(2**n_qubits, rank, rng))


def random_density_matrix(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def bloch_vector(rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho)
    return np.array([np.trace(p @ rho).real for p in PAULI_1Q[1:]])


def nearest_unitary(m: np.ndarray) -> np.ndarray:
    """Unitary factor of the polar decomposition."""
    u, _ = scipy.linalg.polar(np.asarray(m, dtype=complex))
    return u
