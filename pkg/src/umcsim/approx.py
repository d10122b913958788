"""Approximating noisy channels by stochastic mixtures of simulable channels.

* :func:`decompose_umc_1q` / :func:`decompose_umc_2q` fit a convex sum of
  unitary and measurement channels (4 U + 2 M for one qubit; 5 U,
  ``M (x) I``, ``I (x) M`` and ``M (x) M`` for two qubits).
* :func:`decompose_cmc` fits a mixture of the 24 single-qubit Cliffords and
  the 6 Pauli-eigenstate resets.
* :func:`decompose_pta` keeps the Pauli-diagonal of the error channel.
* :func:`fit_prep_channel` / :func:`fit_meas_channel` fit SPAM channels.

Fits minimize the squared Frobenius distance of PTMs (equal to the Choi
Frobenius distance in the normalized Pauli basis) and report the true diamond
distance of the result.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from . import channels, dnorm, qcore
from .channels import ConvexSumChannel, MeasurementTerm, UnitaryTerm

DECOMPOSITION_SCHEMA = 1

_Z = np.array([0.0, 0.0, 1.0])


# -- batched PTMs for the optimizer ---------------------------------------------------
#
# The optimizer evaluates many parameter vectors at once (all finite-difference
# probes of one Jacobian), so the term PTMs are built for a leading batch axis.


def _rot_z(a: np.ndarray) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    out = np.zeros(a.shape + (3, 3))
    out[..., 0, 0], out[..., 0, 1], out[..., 1, 0], out[..., 1, 1] = c, -s, s, c
    out[..., 2, 2] = 1.0
    return out


def _rot_y(a: np.ndarray) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    out = np.zeros(a.shape + (3, 3))
    out[..., 0, 0], out[..., 0, 2], out[..., 2, 0], out[..., 2, 2] = c, s, -s, c
    out[..., 1, 1] = 1.0
    return out


def euler_rotation(theta) -> np.ndarray:
    """Bloch-sphere rotation of ``Rz(t1) Ry(t2) Rz(t3)`` (batched over leading axes)."""
    theta = np.asarray(theta, dtype=float)
    return _rot_z(theta[..., 0]) @ _rot_y(theta[..., 1]) @ _rot_z(theta[..., 2])


def _unitary_ptm_1q(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    out = np.zeros(theta.shape[:-1] + (4, 4))
    out[..., 0, 0] = 1.0
    out[..., 1:, 1:] = euler_rotation(theta)
    return out


def _measurement_ptm_1q(beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    a = euler_rotation(beta[..., 0:3])[..., :, 2]
    b = -euler_rotation(beta[..., 3:6])[..., :, 2]
    n = euler_rotation(beta[..., 6:9])[..., 2, :]
    out = np.zeros(beta.shape[:-1] + (4, 4))
    out[..., 0, 0] = 1.0
    out[..., 1:, 0] = (a + b) / 2
    out[..., 1:, 1:] = (a - b)[..., :, None] * n[..., None, :] / 2
    return out


_B2 = qcore._normalized_basis(2)
_P2 = qcore.pauli_basis(2)[1:]


def _unitary_ptm_2q(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    h = np.einsum("...k,kab->...ab", theta, _P2)
    w, v = np.linalg.eigh(h)
    u = (v * np.exp(-1j * w)[..., None, :]) @ np.swapaxes(v.conj(), -1, -2)
    images = u[..., None, :, :] @ _B2 @ np.swapaxes(u.conj(), -1, -2)[..., None, :, :]
    return np.einsum("iab,...jba->...ij", _B2, images).real


def _kron_batch(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n, m = a.shape[-1], b.shape[-1]
    out = a[..., :, None, :, None] * b[..., None, :, None, :]
    return out.reshape(a.shape[:-2] + (n * m, n * m))


# -- parameter layouts ------------------------------------------------------------------


@dataclass(frozen=True)
class _Layout:
    n_qubits: int
    n_unitary: int
    meas_tags: tuple

    @property
    def n_terms(self) -> int:
        return self.n_unitary + len(self.meas_tags)

    @property
    def theta_size(self) -> int:
        return 3 if self.n_qubits == 1 else 15

    @property
    def n_betas(self) -> int:
        return sum(len(channels.MEASUREMENT_TAGS[t][0]) for t in self.meas_tags)

    @property
    def size(self) -> int:
        return self.n_terms + self.n_unitary * self.theta_size + 9 * self.n_betas

    def split(self, x):
        k = self.n_terms
        s = x[:k]
        th = x[k:k + self.n_unitary * self.theta_size].reshape(self.n_unitary, self.theta_size)
        be = x[k + self.n_unitary * self.theta_size:].reshape(self.n_betas, 9)
        return s, th, be

    def join(self, s, th, be) -> np.ndarray:
        return np.concatenate([np.ravel(s), np.ravel(th), np.ravel(be)])

    def split_batch(self, xs: np.ndarray):
        k = self.n_terms
        nu = self.n_unitary * self.theta_size
        s = xs[:, :k]
        th = xs[:, k:k + nu].reshape(-1, self.n_unitary, self.theta_size)
        be = xs[:, k + nu:].reshape(-1, self.n_betas, 9)
        return s, th, be

    def term_ptms_batch(self, th: np.ndarray, be: np.ndarray) -> np.ndarray:
        """Term PTMs, shape ``(batch, n_terms, D, D)``."""
        if self.n_qubits == 1:
            mats = [_unitary_ptm_1q(th)]
        else:
            mats = [_unitary_ptm_2q(th)]
        meas = _measurement_ptm_1q(be)
        eye = np.broadcast_to(np.eye(4), meas.shape[:1] + (4, 4))
        k = 0
        for tag in self.meas_tags:
            qubits, width = channels.MEASUREMENT_TAGS[tag]
            per = {q: meas[:, k + j] for j, q in enumerate(qubits)}
            k += len(qubits)
            if width == 1:
                mats.append(per[0][:, None])
            else:
                mats.append(_kron_batch(per.get(1, eye), per.get(0, eye))[:, None])
        return np.concatenate(mats, axis=1)

    @staticmethod
    def probabilities_batch(s: np.ndarray) -> np.ndarray:
        w = s**2
        total = w.sum(axis=-1, keepdims=True)
        return np.where(total > 0, w / np.where(total > 0, total, 1.0), 1.0 / w.shape[-1])

    def probabilities(self, s) -> np.ndarray:
        return self.probabilities_batch(np.asarray(s, dtype=float)[None])[0]

    def ptm_batch(self, xs: np.ndarray) -> np.ndarray:
        s, th, be = self.split_batch(np.atleast_2d(xs))
        p = self.probabilities_batch(s)
        return np.einsum("bt,btij->bij", p, self.term_ptms_batch(th, be))

    def ptm(self, x) -> np.ndarray:
        return self.ptm_batch(np.asarray(x, dtype=float)[None])[0]

    def channel(self, x) -> ConvexSumChannel:
        s, th, be = self.split(x)
        p = self.probabilities(s)
        terms = []
        for t in th:
            terms.append(UnitaryTerm(channels.wrap_angles(t) if self.n_qubits == 1 else t))
        k = 0
        for tag in self.meas_tags:
            n = len(channels.MEASUREMENT_TAGS[tag][0])
            terms.append(MeasurementTerm(tag, tuple(channels.wrap_angles(b) for b in be[k:k + n])))
            k += n
        return ConvexSumChannel(p, tuple(terms))


LAYOUT_1Q = _Layout(1, 4, ("meas", "meas"))
LAYOUT_2Q = _Layout(2, 5, ("meas_q1", "meas_q0", "meas_pair"))


# -- results ---------------------------------------------------------------------------------


@dataclass
class UmcDecomposition:
    """A fitted convex sum of unitary and measurement channels.

    ``achieved_distance`` is the diamond distance to ``target_ptm`` (for
    gate fits) or ``None`` for SPAM fits, whose quality is ``residual``.
    """

    channel: ConvexSumChannel
    target_name: str
    target_ptm: np.ndarray | None
    achieved_distance: float | None
    surrogate: float
    converged: bool
    residual: float = 0.0
    kind: str = "umc"
    meta: dict = field(default_factory=dict)

    @property
    def p(self) -> np.ndarray:
        return self.channel.p

    @property
    def unitary_terms(self) -> list:
        return [t for t in self.channel.terms if isinstance(t, UnitaryTerm)]

    @property
    def measurement_terms(self) -> list:
        return [t for t in self.channel.terms if isinstance(t, MeasurementTerm)]

    def ptm(self) -> np.ndarray:
        return self.channel.ptm()

    def terms(self) -> list[tuple[float, object]]:
        return list(zip(self.channel.p, self.channel.terms))

    def reevaluate(self) -> float:
        return dnorm.diamond_distance(self.ptm(), self.target_ptm).value

    def to_dict(self) -> dict:
        return {
            "schema_version": DECOMPOSITION_SCHEMA,
            "kind": self.kind,
            "target_name": self.target_name,
            "target_ptm": None if self.target_ptm is None else np.asarray(self.target_ptm).tolist(),
            "achieved_distance": self.achieved_distance,
            "surrogate": self.surrogate,
            "converged": self.converged,
            "residual": self.residual,
            "channel": self.channel.to_dict(),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "UmcDecomposition":
        if data.get("schema_version") != DECOMPOSITION_SCHEMA:
            raise ValueError(f"unsupported decomposition schema {data.get('schema_version')!r}")
        target = data.get("target_ptm")
        return cls(
            channel=ConvexSumChannel.from_dict(data["channel"]),
            target_name=data["target_name"],
            target_ptm=None if target is None else np.array(target),
            achieved_distance=data["achieved_distance"],
            surrogate=data["surrogate"],
            converged=data["converged"],
            residual=data.get("residual", 0.0),
            kind=data.get("kind", "umc"),
            meta=data.get("meta", {}),
        )


@dataclass
class UmcOptions:
    """Knobs for UMC fitting.

    Attributes:
        restarts: number of local searches (the first is seeded from the
            target's Kraus decomposition, the rest are random).
        max_iters: cap on residual evaluations (optimizer iterations) per
            local search.
        tol: if set, a fit whose diamond distance exceeds it is flagged
            non-converged.
        seed: master seed; restart ``k`` uses child ``k``.
        candidates: how many of the best surrogate optima get a diamond-norm
            evaluation.
    """

    restarts: int = 32
    max_iters: int = 200
    tol: float | None = None
    seed: int = 0
    candidates: int = 3


# -- initial points ---------------------------------------------------------------------------


def _kraus_start(target: np.ndarray, layout: _Layout) -> tuple[np.ndarray, np.ndarray]:
    """Unitary parameters and weights from the leading Kraus operators of the target."""
    kraus = qcore.ptm_to_kraus(target)
    weights, params = [], []
    for k in kraus[:layout.n_unitary]:
        u = qcore.nearest_unitary(k)
        if layout.n_qubits == 1:
            params.append(channels.euler_angles(u))
        else:
            params.append(channels.pauli_generator_coefficients(u))
        weights.append(np.linalg.norm(k) ** 2 / 2**layout.n_qubits)
    while len(params) < layout.n_unitary:
        params.append(params[0] if params else np.zeros(layout.theta_size))
        weights.append(0.0)
    return np.array(params), np.array(weights)


def _random_start(layout: _Layout, rng: np.random.Generator) -> np.ndarray:
    s = rng.uniform(0.1, 1.0, layout.n_terms)
    th = rng.uniform(0, 2 * np.pi, (layout.n_unitary, layout.theta_size))
    if layout.n_qubits == 2:
        th = rng.normal(scale=1.0, size=th.shape)
    be = rng.uniform(0, 2 * np.pi, (layout.n_betas, 9))
    return layout.join(s, th, be)


def _seeded_start(target: np.ndarray, layout: _Layout, rng: np.random.Generator) -> np.ndarray:
    th, w = _kraus_start(target, layout)
    s = np.concatenate([np.sqrt(w), np.full(len(layout.meas_tags), 1e-3)])
    be = rng.uniform(0, 2 * np.pi, (layout.n_betas, 9))
    return layout.join(s, th, be)


# -- local search -------------------------------------------------------------------------------


class _BatchedResidual:
    """Residual ``f(x)`` and its central-difference Jacobian from one batched call.

    ``batch_fn`` maps ``(N, n)`` parameter rows to ``(N, m)`` residual rows.
    """

    def __init__(self, batch_fn, step: float = 6e-6):
        self.batch_fn = batch_fn
        self.step = step

    def __call__(self, x):
        return self.batch_fn(x[None])[0]

    def jac(self, x):
        n = x.size
        h = self.step * np.maximum(1.0, np.abs(x))
        probes = np.concatenate([x + np.diag(h), x - np.diag(h)])
        vals = self.batch_fn(probes)
        return ((vals[:n] - vals[n:]) / (2 * h[:, None])).T


def _least_squares(residual: _BatchedResidual, x0: np.ndarray, max_nfev: int):
    return scipy.optimize.least_squares(
        residual, x0, jac=residual.jac, method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15,
        max_nfev=max_nfev,
    )


EXACT_COST = 1e-26  # surrogate below which a fit is exact to rounding


def _multistart(residual, starts: list[np.ndarray], max_nfev: int):
    runs = []
    for x0 in starts:
        sol = _least_squares(residual, x0, max_nfev)
        runs.append((float(2 * sol.cost), sol))
        if runs[-1][0] <= EXACT_COST:
            break  # an exact fit cannot be improved by further restarts
    runs.sort(key=lambda r: r[0])
    return runs


def _decompose_umc(target: np.ndarray, layout: _Layout, name: str, opts: UmcOptions) -> UmcDecomposition:
    target = np.asarray(target, dtype=float)
    if target.shape != (4**layout.n_qubits,) * 2:
        raise qcore.DimensionError(f"target shape {target.shape} is not a {layout.n_qubits}-qubit PTM")
    if not qcore.validate_cptp(target, 1e-7).ok:
        raise channels.ChannelError(f"target {name!r} is not CPTP")
    rows = slice(1, None)  # the trace row is matched by construction

    def batch(xs):
        return (layout.ptm_batch(xs)[:, rows] - target[rows]).reshape(xs.shape[0], -1)

    residual = _BatchedResidual(batch)

    children = np.random.SeedSequence(opts.seed).spawn(max(opts.restarts, 1))
    starts = []
    for k, child in enumerate(children):
        rng = np.random.default_rng(child)
        starts.append(_seeded_start(target, layout, rng) if k == 0 else _random_start(layout, rng))
    runs = _multistart(residual, starts, opts.max_iters)

    best = None
    for cost, sol in runs[:max(opts.candidates, 1)]:
        chan = layout.channel(sol.x)
        dist = dnorm.diamond_distance(chan.ptm(), target).value
        if best is None or dist < best[0] - 1e-15:
            best = (dist, cost, chan, sol)
    dist, cost, chan, sol = best
    converged = bool(sol.status > 0) and (opts.tol is None or dist <= opts.tol)
    return UmcDecomposition(
        channel=chan, target_name=name, target_ptm=target, achieved_distance=float(dist),
        surrogate=cost, converged=converged,
        meta={"restarts": opts.restarts, "seed": opts.seed, "n_qubits": layout.n_qubits},
    )


def decompose_umc_1q(target: np.ndarray, opts: UmcOptions | None = None, name: str = "") -> UmcDecomposition:
    """Best 4-unitary + 2-measurement mixture for a one-qubit channel.

    Args:
        target: 4x4 CPTP PTM.
        opts: search options; see :class:`UmcOptions`.
        name: label stored with the result.

    Returns:
        The decomposition whose diamond distance to ``target`` is smallest
        among the best surrogate optima.
    """
    return _decompose_umc(target, LAYOUT_1Q, name, opts or UmcOptions())


def decompose_umc_2q(target: np.ndarray, opts: UmcOptions | None = None, name: str = "") -> UmcDecomposition:
    """Best mixture of 5 two-qubit unitaries, ``M (x) I``, ``I (x) M`` and ``M (x) M``."""
    return _decompose_umc(target, LAYOUT_2Q, name, opts or UmcOptions())


def decompose_umc(target: np.ndarray, opts: UmcOptions | None = None, name: str = "") -> UmcDecomposition:
    if np.asarray(target).shape[0] == 4:
        return decompose_umc_1q(target, opts, name)
    return decompose_umc_2q(target, opts, name)


# -- CMC baseline ---------------------------------------------------------------------------------


def clifford_group_1q() -> list[np.ndarray]:
    """The 24 single-qubit Clifford unitaries (identity first), by closure over H and S."""
    gens = [np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2), np.diag([1, 1j])]
    found = [np.eye(2, dtype=complex)]
    keys = {_ptm_key(found[0])}
    frontier = list(found)
    while frontier:
        nxt = []
        for u in frontier:
            for g in gens:
                v = g @ u
                key = _ptm_key(v)
                if key not in keys:
                    keys.add(key)
                    found.append(v)
                    nxt.append(v)
        frontier = nxt
    return found


def _ptm_key(u: np.ndarray) -> tuple:
    return tuple(np.round(qcore.unitary_to_ptm(u), 6).ravel())


PAULI_RESET_STATES = ("+x", "-x", "+y", "-y", "+z", "-z")


def reset_ptm(bloch: np.ndarray) -> np.ndarray:
    """PTM of ``rho -> |psi><psi|`` for the pure state with Bloch vector ``bloch``."""
    out = np.zeros((4, 4))
    out[0, 0] = 1.0
    out[1:, 0] = bloch
    return out


def cmc_channel_set() -> tuple[list[str], list[np.ndarray]]:
    labels, mats = [], []
    for k, u in enumerate(clifford_group_1q()):
        labels.append(f"clifford{k}")
        mats.append(qcore.unitary_to_ptm(u))
    for lab in PAULI_RESET_STATES:
        axis = "xyz".index(lab[1])
        vec = np.zeros(3)
        vec[axis] = 1.0 if lab[0] == "+" else -1.0
        labels.append(f"reset{lab}")
        mats.append(reset_ptm(vec))
    return labels, mats


@dataclass
class CmcDecomposition:
    p: np.ndarray
    labels: list
    ptms: list = field(repr=False)
    achieved_distance: float = 0.0
    target_name: str = ""
    target_ptm: np.ndarray | None = field(default=None, repr=False)
    kind: str = "cmc"

    def ptm(self) -> np.ndarray:
        return sum(pi * m for pi, m in zip(self.p, self.ptms))

    def terms(self) -> list[tuple[float, np.ndarray]]:
        return list(zip(self.p, self.ptms))

    def to_dict(self) -> dict:
        return {
            "schema_version": DECOMPOSITION_SCHEMA,
            "kind": "cmc",
            "target_name": self.target_name,
            "target_ptm": None if self.target_ptm is None else np.asarray(self.target_ptm).tolist(),
            "achieved_distance": self.achieved_distance,
            "p": self.p.tolist(),
            "labels": self.labels,
        }


def _simplex_lstsq(mats: list[np.ndarray], target: np.ndarray) -> np.ndarray:
    """Least-squares mixture weights on the probability simplex.

    Solved as a non-negative least-squares problem with a heavily weighted
    sum-to-one row, then renormalized.
    """
    a = np.array([m.ravel() for m in mats]).T
    weight = 1e4
    a_aug = np.vstack([a, weight * np.ones(a.shape[1])])
    b_aug = np.concatenate([target.ravel(), [weight]])
    p, _ = scipy.optimize.nnls(a_aug, b_aug, maxiter=50 * a.shape[1])
    return p / p.sum()


def decompose_cmc(target: np.ndarray, name: str = "") -> CmcDecomposition:
    """Best mixture of the 24 Cliffords and 6 Pauli resets for a one-qubit channel."""
    target = np.asarray(target, dtype=float)
    if target.shape != (4, 4):
        raise qcore.DimensionError("CMC is defined for one-qubit channels")
    labels, mats = cmc_channel_set()
    p = _simplex_lstsq(mats, target)
    dec = CmcDecomposition(p, labels, mats, target_name=name, target_ptm=target)
    dec.achieved_distance = float(dnorm.diamond_distance(dec.ptm(), target).value)
    return dec


# -- PTA baseline -----------------------------------------------------------------------------------


def _commutation_signs(n_qubits: int) -> np.ndarray:
    """``s[j, k] = +1`` if Paulis j and k commute, else -1."""
    one = np.array([[1, 1, 1, 1], [1, 1, -1, -1], [1, -1, 1, -1], [1, -1, -1, 1]])
    out = np.ones((1, 1))
    for _ in range(n_qubits):
        out = np.kron(one, out)
    return out


@dataclass
class PauliProbabilities:
    """Pauli-error probabilities applied before the ideal gate."""

    p: np.ndarray
    n_qubits: int
    ideal_ptm: np.ndarray | None = field(default=None, repr=False)
    achieved_distance: float | None = None
    target_name: str = ""
    kind: str = "pta"

    def error_ptm(self) -> np.ndarray:
        return np.diag(_commutation_signs(self.n_qubits) @ self.p)

    def ptm(self) -> np.ndarray:
        ideal = np.eye(4**self.n_qubits) if self.ideal_ptm is None else self.ideal_ptm
        return ideal @ self.error_ptm()

    def terms(self) -> list[tuple[float, np.ndarray]]:
        ideal = np.eye(4**self.n_qubits) if self.ideal_ptm is None else self.ideal_ptm
        paulis = qcore.pauli_basis(self.n_qubits)
        return [(pk, ideal @ qcore.unitary_to_ptm(paulis[k])) for k, pk in enumerate(self.p)]

    def to_dict(self) -> dict:
        return {
            "schema_version": DECOMPOSITION_SCHEMA,
            "kind": "pta",
            "target_name": self.target_name,
            "achieved_distance": self.achieved_distance,
            "p": self.p.tolist(),
            "labels": [qcore.pauli_label(k, self.n_qubits) for k in range(4**self.n_qubits)],
        }


def pauli_twirl_probabilities(error_ptm: np.ndarray, clip_tol: float = 1e-8) -> np.ndarray:
    """Diagonal of the process matrix of a channel, from its PTM diagonal.

    Raises:
        ValueError: if an entry is below ``-clip_tol``.
    """
    r = np.asarray(error_ptm, dtype=float)
    n = qcore.n_qubits_of(int(round(np.sqrt(r.shape[0]))))
    p = _commutation_signs(n) @ np.diag(r) / 4**n
    if p.min() < -clip_tol:
        raise ValueError(f"Pauli probability {p.min():.3e} is negative beyond tolerance")
    p = np.clip(p, 0, None)
    return p / p.sum()


def decompose_pta(target: np.ndarray, ideal: np.ndarray | None = None, name: str = "") -> PauliProbabilities:
    """Pauli twirl of the error channel ``E = G_ideal^-1 G_noisy``.

    Args:
        target: noisy PTM.
        ideal: PTM of the declared ideal gate (identity if omitted, i.e.
            ``target`` is already the error channel).
    """
    target = np.asarray(target, dtype=float)
    n = qcore.n_qubits_of(int(round(np.sqrt(target.shape[0]))))
    error = target if ideal is None else np.linalg.solve(ideal, target)
    dec = PauliProbabilities(pauli_twirl_probabilities(error), n, ideal, target_name=name)
    dec.achieved_distance = float(dnorm.diamond_distance(dec.ptm(), target).value)
    return dec


# -- SPAM fits ---------------------------------------------------------------------------------------


def _fit_spam(residual, seeded: np.ndarray, opts: UmcOptions):
    starts = [seeded]
    children = np.random.SeedSequence(opts.seed).spawn(max(opts.restarts, 1))
    for child in children[1:]:
        starts.append(_random_start(LAYOUT_1Q, np.random.default_rng(child)))
    best = None
    for x0 in starts:
        sol = _least_squares(residual, x0, opts.max_iters)
        res = float(np.linalg.norm(residual(sol.x)))
        if best is None or res < best[0]:
            best = (res, sol)
        if res <= 1e-13:
            break  # an exact fit cannot be improved
    return best


def _spam_start(unitaries: list[np.ndarray], weights: list[float], resets: list[tuple[int, float]]) -> np.ndarray:
    """Parameter vector with given unitary terms and measurement terms resetting to |b>."""
    th = np.zeros((4, 3))
    s = np.zeros(6)
    for k, (u, w) in enumerate(zip(unitaries, weights)):
        th[k] = channels.euler_angles(u)
        s[k] = np.sqrt(w)
    be = np.zeros((2, 9))
    for k, (bit, w) in enumerate(resets):
        # |f1> = |f2> = |bit>: b2 = pi puts |0> at |1>; b5 = pi puts |1> at |0>
        be[k, 1] = np.pi * bit
        be[k, 4] = np.pi * (1 - bit)
        s[4 + k] = np.sqrt(w)
    return LAYOUT_1Q.join(s, th, be)


def fit_prep_channel(rho0: np.ndarray, opts: UmcOptions | None = None) -> UmcDecomposition:
    """UMC channel mapping ``|0><0|`` to ``rho0``.

    The seeded start mixes the unitaries taking ``|0>`` to the eigenvectors of
    ``rho0`` with its eigenvalues as weights, which is already exact; the
    least-squares polish and random restarts only matter if it is not.
    """
    opts = opts or UmcOptions(restarts=8)
    rho0 = np.asarray(rho0, dtype=complex)
    if not qcore.is_density_matrix(rho0):
        raise ValueError("rho0 is not a density matrix")
    target = qcore.to_pauli_vector(rho0)[1:]
    perfect = np.zeros(4)
    perfect[0] = perfect[3] = np.sqrt(0.5)

    residual = _BatchedResidual(lambda xs: LAYOUT_1Q.ptm_batch(xs)[:, 1:] @ perfect - target)

    w, v = np.linalg.eigh(rho0)
    unitaries = []
    for k in range(2):
        other = v[:, 1 - k]
        unitaries.append(np.column_stack([v[:, k], other]))
    seeded = _spam_start(unitaries, list(np.clip(w, 0, None)), [])
    res, sol = _fit_spam(residual, seeded, opts)
    chan = LAYOUT_1Q.channel(sol.x)
    out_state = qcore.from_pauli_vector(chan.ptm() @ perfect)
    infid = 1.0 - qcore.state_fidelity(out_state, rho0)
    return UmcDecomposition(
        channel=chan, target_name="prep", target_ptm=None, achieved_distance=None,
        surrogate=res**2, converged=infid <= 1e-9, residual=float(infid), kind="prep",
        meta={"residual_norm": res},
    )


def fit_meas_channel(effect: np.ndarray, opts: UmcOptions | None = None) -> UmcDecomposition:
    """UMC channel ``L`` with ``<<E_perfect| L = <<E|`` for an outcome-1 effect ``E``.

    Seeded with the exact mixture ``E = a |u><u| + b I``: a unitary taking
    ``|u>`` to ``|1>`` with weight ``a``, a reset to ``|1>`` with weight ``b``
    and a reset to ``|0>`` with the remaining weight.

    Returns:
        Decomposition whose ``residual`` is the vector-norm mismatch of the
        reproduced effect.
    """
    opts = opts or UmcOptions(restarts=8)
    effect = np.asarray(effect, dtype=float)
    e_mat = qcore.from_pauli_vector(effect)
    w, v = np.linalg.eigh(e_mat)
    if w[0] < -1e-9 or w[-1] > 1 + 1e-9:
        raise ValueError("effect is not between 0 and I")
    w = np.clip(w, 0, 1)
    perfect = np.zeros(4)
    perfect[0], perfect[3] = np.sqrt(0.5), -np.sqrt(0.5)

    residual = _BatchedResidual(lambda xs: perfect @ LAYOUT_1Q.ptm_batch(xs) - effect)

    # unitary mapping |u> (top eigenvector) to |1> and |u_perp> to |0>
    u = np.outer(qcore.ket("1"), v[:, 1].conj()) + np.outer(qcore.ket("0"), v[:, 0].conj())
    seeded = _spam_start([u], [w[1] - w[0]], [(1, w[0]), (0, 1 - w[1])])
    res, sol = _fit_spam(residual, seeded, opts)
    chan = LAYOUT_1Q.channel(sol.x)
    res = float(np.linalg.norm(perfect @ chan.ptm() - effect))
    return UmcDecomposition(
        channel=chan, target_name="meas", target_ptm=None, achieved_distance=None,
        surrogate=res**2, converged=res <= 1e-9, residual=res, kind="meas",
    )


__all__ = [
    "UmcDecomposition", "UmcOptions", "CmcDecomposition", "PauliProbabilities",
    "decompose_umc", "decompose_umc_1q", "decompose_umc_2q", "decompose_cmc", "decompose_pta",
    "fit_prep_channel", "fit_meas_channel", "clifford_group_1q", "cmc_channel_set",
    "pauli_twirl_probabilities",
]
