"""Small dense primal-dual interior-point solver for complex Hermitian SDPs.

Solves the standard-form pair::

    primal:  min <C, X>   s.t.  <A_k, X> = b_k,  X >= 0
    dual:    max b.y      s.t.  sum_k y_k A_k + S = C,  S >= 0

with ``<A, X> = Re Tr(A^dag X)``.  Block structure is expressed by giving
block-diagonal data; the HKM search direction keeps iterates block diagonal,
so blocks need no special bookkeeping.  Intended for the few-dozen-row
problems the diamond norm produces, where dense linear algebra is cheapest.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


class SdpError(RuntimeError):
    pass


@dataclass
class SdpSolution:
    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    primal_objective: float
    dual_objective: float
    primal_residual: float
    dual_residual: float
    iterations: int
    converged: bool


def _herm(m: np.ndarray) -> np.ndarray:
    return (m + m.conj().swapaxes(-1, -2)) / 2


def _max_step(x: np.ndarray, dx: np.ndarray) -> float:
    """Largest alpha with ``x + alpha dx`` PSD (inf if dx does not decrease it)."""
    w, v = np.linalg.eigh(_herm(x))
    # rounding can push the smallest eigenvalues of a near-boundary iterate to <= 0
    w = np.maximum(w, 1e-15 * max(w[-1], 1e-300))
    half = v / np.sqrt(w)
    lam = np.linalg.eigvalsh(_herm(half.conj().T @ dx @ half))[0]
    if lam >= 0:
        return np.inf
    return -1.0 / lam


def solve(
    c: np.ndarray,
    a: np.ndarray,
    b: np.ndarray,
    x0: np.ndarray,
    y0: np.ndarray,
    s0: np.ndarray,
    gap_tol: float = 1e-12,
    feas_tol: float = 1e-10,
    max_iter: int = 100,
) -> SdpSolution:
    """Run Mehrotra predictor-corrector iterations from a PSD starting point.

    Args:
        c: (N, N) Hermitian cost.
        a: (m, N, N) Hermitian constraint matrices.
        b: (m,) right-hand side.
        x0, y0, s0: starting primal, dual multipliers and dual slack; X0 and S0
            must be positive definite.
        gap_tol: stop once ``|<C,X> - b.y| / (1 + |<C,X>|)`` drops below this.
        feas_tol: required primal and dual residual norms.
        max_iter: iteration cap.

    Returns the best iterate seen (by gap and residuals), which matters once
    the Schur complement becomes too ill-conditioned to make progress.
    """
    m, n, _ = a.shape
    amat = a.reshape(m, n * n)
    amat_c = amat.conj()

    def op(x):
        return (amat_c @ x.reshape(-1)).real

    def adj(y):
        return (y @ amat).reshape(n, n)

    x, y, s = x0.astype(complex), y0.astype(float), s0.astype(complex)
    converged = False
    best, best_merit = (x, y, s), np.inf
    it = 0
    for it in range(1, max_iter + 1):
        rp = b - op(x)
        rd = _herm(c - adj(y) - s)
        mu = float(np.vdot(x, s).real) / n
        pobj = float(np.vdot(c, x).real)
        dobj = float(b @ y)
        gap = abs(pobj - dobj) / (1.0 + abs(pobj))
        feas = max(np.linalg.norm(rp), np.linalg.norm(rd))
        merit = max(gap, feas)
        if merit < best_merit:
            best, best_merit = (x, y, s), merit
        if gap <= gap_tol and feas <= feas_tol:
            converged = True
            break
        if merit > 1e3 * best_merit:
            # ill-conditioned endgame has started to lose accuracy
            break
        sinv = _herm(np.linalg.inv(s))
        g = x @ a @ sinv  # (m, N, N)
        schur = (amat_c @ g.reshape(m, n * n).T).real
        schur = (schur + schur.T) / 2
        try:
            factor = scipy.linalg.cho_factor(schur)

            def msolve(v):
                return scipy.linalg.cho_solve(factor, v)
        except np.linalg.LinAlgError:
            pinv = np.linalg.pinv(schur, rcond=1e-14)

            def msolve(v):
                return pinv @ v

        base = rp + op(x) + op(x @ rd @ sinv)

        def direction(sigma, corr=None):
            rhs = base - sigma * mu * op(sinv)
            if corr is not None:
                rhs = rhs + op(corr)
            dy = msolve(rhs)
            ds = _herm(rd - adj(dy))
            dx = -x + sigma * mu * sinv - _herm(x @ ds @ sinv)
            if corr is not None:
                dx = dx - _herm(corr)
            return _herm(dx), dy, ds

        dx_a, dy_a, ds_a = direction(0.0)
        ap = min(1.0, _max_step(x, dx_a))
        ad = min(1.0, _max_step(s, ds_a))
        mu_aff = float(np.vdot(x + ap * dx_a, s + ad * ds_a).real) / n
        sigma = min(1.0, (mu_aff / mu) ** 3) if mu > 0 else 0.0
        dx, dy, ds = direction(sigma, dx_a @ ds_a @ sinv)
        ap = min(1.0, 0.98 * _max_step(x, dx))
        ad = min(1.0, 0.98 * _max_step(s, ds))
        if ap < 1e-14 and ad < 1e-14:
            break
        x = _herm(x + ap * dx)
        y = y + ad * dy
        s = _herm(s + ad * ds)
    x, y, s = best
    rp = b - op(x)
    rd = _herm(c - adj(y) - s)
    return SdpSolution(
        x=x,
        y=y,
        s=s,
        primal_objective=float(np.vdot(c, x).real),
        dual_objective=float(b @ y),
        primal_residual=float(np.linalg.norm(rp)),
        dual_residual=float(np.linalg.norm(rd)),
        iterations=it,
        converged=converged,
    )
