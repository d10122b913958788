"""Diamond norm of trace-annihilating Hermiticity-preserving maps.

Two independent routes:

* :func:`diamond_norm_sdp` solves the semidefinite program
  ``||D|| = 2 max <J(D), W>`` over ``0 <= W <= I (x) rho`` with ``rho`` a density
  operator, then turns the interior-point iterate into rigorous lower and
  upper bounds.
* :func:`diamond_norm_multistart` maximizes ``||(D (x) id)(|psi><psi|)||_1``
  over system+ancilla pure states with a monotone see-saw ascent and random
  restarts.  It is always a lower bound.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any

import numpy as np

from . import qcore, sdp

TOL_1Q = 1e-7
TOL_2Q = 1e-6


class DiamondNormError(RuntimeError):
    """The SDP did not certify its value to the requested tolerance."""

    def __init__(self, message: str, lower: float, upper: float):
        super().__init__(f"{message} (bounds [{lower:.3e}, {upper:.3e}])")
        self.lower = lower
        self.upper = upper


@dataclass
class DiamondResult:
    value: float
    method: str
    certificate: Any = field(repr=False)
    lower: float = 0.0
    upper: float = np.inf


def default_tol(dim_ptm: int) -> float:
    return TOL_1Q if dim_ptm <= 4 else TOL_2Q


def _check_delta(delta: np.ndarray) -> np.ndarray:
    delta = np.asarray(delta, dtype=float)
    if delta.ndim != 2 or delta.shape[0] != delta.shape[1]:
        raise qcore.DimensionError(f"map must be square, got {delta.shape}")
    if delta.shape[0] > 256:
        raise ValueError("diamond norms are limited to two qubits")
    if np.max(np.abs(delta[0])) > 1e-9:
        raise ValueError("map is not trace-annihilating (first PTM row must vanish)")
    return delta


@lru_cache(maxsize=None)
def _hermitian_basis(dim: int) -> np.ndarray:
    """Orthonormal (Re Tr) basis of dim x dim Hermitian matrices."""
    mats = []
    for p in range(dim):
        e = np.zeros((dim, dim), complex)
        e[p, p] = 1
        mats.append(e)
    r2 = np.sqrt(0.5)
    for p in range(dim):
        for q in range(p + 1, dim):
            e = np.zeros((dim, dim), complex)
            e[p, q] = e[q, p] = r2
            mats.append(e)
            e = np.zeros((dim, dim), complex)
            e[p, q] = 1j * r2
            e[q, p] = -1j * r2
            mats.append(e)
    out = np.array(mats)
    out.setflags(write=False)
    return out


def _trace_out(m: np.ndarray, d: int) -> np.ndarray:
    """Partial trace over the first (output) factor of a d*d x d*d operator."""
    return np.einsum("acae->ce", m.reshape(d, d, d, d))


@lru_cache(maxsize=None)
def _problem_data(d: int):
    """Constraint matrices for blocks (W, V, R) with W + V = I (x) R and Tr R = 1."""
    h = _hermitian_basis(d * d)
    n = 2 * d * d + d
    m = h.shape[0] + 1
    a = np.zeros((m, n, n), complex)
    dd = d * d
    for k, hk in enumerate(h):
        a[k, :dd, :dd] = hk
        a[k, dd:2 * dd, dd:2 * dd] = hk
        a[k, 2 * dd:, 2 * dd:] = -_trace_out(hk, d)
    a[-1, 2 * dd:, 2 * dd:] = np.eye(d)
    b = np.zeros(m)
    b[-1] = 1.0
    a.setflags(write=False)
    return h, a, b


def _psd_part(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((m + m.conj().T) / 2)
    return (v * np.clip(w, 0, None)) @ v.conj().T


def _bounds(j: np.ndarray, sol: sdp.SdpSolution, d: int, h: np.ndarray) -> tuple[float, float]:
    dd = d * d
    x = sol.x
    # upper bound from a repaired dual point: Z >= 0, Z >= J gives ||D|| <= 2 lambda_max(Tr_out Z)
    z = -np.einsum("k,kab->ab", sol.y[:-1], h)
    z = (z + z.conj().T) / 2
    shift = max(0.0, -np.linalg.eigvalsh(z)[0], -np.linalg.eigvalsh(z - j)[0])
    z = z + shift * np.eye(dd)
    upper = 2 * float(np.linalg.eigvalsh(_trace_out(z, d))[-1])
    # lower bound: for a fixed density rho the best feasible W is
    # (I (x) sqrt rho) P+ (I (x) sqrt rho), P+ the positive eigenprojector of
    # the sandwiched Choi matrix, so the value is its positive trace
    rho = _psd_part(x[2 * dd:, 2 * dd:])
    tr = np.trace(rho).real
    if tr <= 0:
        return 0.0, upper
    ev, evec = np.linalg.eigh(rho / tr)
    root = np.kron(np.eye(d), (evec * np.sqrt(np.clip(ev, 0, None))) @ evec.conj().T)
    sandwich = root @ j @ root
    w = np.linalg.eigvalsh((sandwich + sandwich.conj().T) / 2)
    lower = 2 * float(np.sum(w[w > 0]))
    return lower, upper


def diamond_norm_sdp(delta: np.ndarray, tol: float | None = None) -> DiamondResult:
    """Diamond norm of a trace-annihilating map given by its PTM.

    Args:
        delta: PTM of the map, typically a difference of two CPTP PTMs.
        tol: required width of the certified interval; defaults to 1e-7 for
            one qubit and 1e-6 for two.

    Raises:
        DiamondNormError: if the certified bounds are wider than ``tol``.
    """
    delta = _check_delta(delta)
    tol = default_tol(delta.shape[0]) if tol is None else tol
    d = int(round(np.sqrt(delta.shape[0])))
    j = qcore.ptm_to_choi(delta)
    j = (j + j.conj().T) / 2
    if np.max(np.abs(j)) < 1e-15:
        return DiamondResult(0.0, "sdp", 0.0, 0.0, 0.0)
    h, a, b = _problem_data(d)
    dd = d * d
    n = 2 * dd + d
    c = np.zeros((n, n), complex)
    c[:dd, :dd] = -j
    x0 = np.zeros((n, n), complex)
    x0[:dd, :dd] = np.eye(dd) / (2 * d)
    x0[dd:2 * dd, dd:2 * dd] = np.eye(dd) / (2 * d)
    x0[2 * dd:, 2 * dd:] = np.eye(d) / d
    zc = max(np.linalg.eigvalsh(j)[-1], 0.0) + 1.0
    y0 = np.zeros(a.shape[0])
    y0[:-1] = np.einsum("kab,ba->k", h, -zc * np.eye(dd)).real
    y0[-1] = -zc * d - 1.0
    s0 = c - np.einsum("k,kab->ab", y0, a)
    sol = sdp.solve(c, a, b, x0, y0, s0, gap_tol=1e-12, feas_tol=1e-10, max_iter=60)
    lower, upper = _bounds(j, sol, d, h)
    if upper < lower:
        lower, upper = upper, lower
    if upper - lower > tol:
        raise DiamondNormError("diamond norm SDP did not reach tolerance", lower, upper)
    return DiamondResult((lower + upper) / 2, "sdp", upper - lower, lower, upper)


def _apply_on_system(liouville: np.ndarray, rho4: np.ndarray) -> np.ndarray:
    """Apply a row-major Liouville matrix to the system legs of rho[s, a, s', a']."""
    d = rho4.shape[0]
    s = liouville.reshape(d, d, d, d)
    return np.einsum("tusv,savb->taub", s, rho4)


def diamond_norm_multistart(delta: np.ndarray, restarts: int = 64, seed: int = 0,
                            max_iter: int = 2000) -> DiamondResult:
    """Lower bound on the diamond norm by see-saw ascent over pure input states.

    Each restart alternates between the optimal sign operator for the current
    output and the top eigenvector of the adjoint map applied to it; the
    objective never decreases.  Restart seeds are spawned from ``seed``.
    """
    delta = _check_delta(delta)
    d = int(round(np.sqrt(delta.shape[0])))
    fwd = qcore.ptm_to_liouville(delta)
    back = qcore.ptm_to_liouville(delta.T)
    best, best_psi = 0.0, None
    for child in np.random.SeedSequence(seed).spawn(restarts):
        rng = np.random.default_rng(child)
        psi = rng.normal(size=d * d) + 1j * rng.normal(size=d * d)
        psi /= np.linalg.norm(psi)
        value = -1.0
        for _ in range(max_iter):
            rho4 = np.einsum("i,j->ij", psi, psi.conj()).reshape(d, d, d, d)
            out = _apply_on_system(fwd, rho4).reshape(d * d, d * d)
            w, v = np.linalg.eigh((out + out.conj().T) / 2)
            new_value = float(np.sum(np.abs(w)))
            sign = (v * np.sign(w)) @ v.conj().T
            q = _apply_on_system(back, sign.reshape(d, d, d, d)).reshape(d * d, d * d)
            _, qv = np.linalg.eigh((q + q.conj().T) / 2)
            psi = qv[:, -1]
            if new_value - value < 1e-14:
                value = max(value, new_value)
                break
            value = new_value
        if value > best:
            best, best_psi = value, psi
    return DiamondResult(best, "multistart", best_psi, best, np.inf)


def diamond_distance(a: np.ndarray, b: np.ndarray, method: str = "sdp", **kwargs) -> DiamondResult:
    """Diamond distance between two channels given as PTMs."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise qcore.DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    delta = a - b
    if np.max(np.abs(delta[0])) <= 1e-9:
        delta[0] = 0.0  # rounding in the trace row of two TP maps
    if method == "sdp":
        return diamond_norm_sdp(delta, **kwargs)
    if method == "multistart":
        return diamond_norm_multistart(delta, **kwargs)
    raise ValueError(f"unknown method {method!r}")
