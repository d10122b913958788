import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from umcsim import approx, channels, dnorm, gateset, qcore, sdp


def unitary_pair_distance(u: np.ndarray, v: np.ndarray) -> float:
    """Closed form: 2 sqrt(1 - r^2), r the distance from 0 to the hull of eig(U^dag V).

    The hull distance is found by brute force over the polygon edges.
    """
    ev = np.linalg.eigvals(u.conj().T @ v)
    ang = np.sort(np.angle(ev))
    gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * np.pi]]))
    if gaps.max() <= np.pi + 1e-12:
        return 2.0  # 0 lies in the hull
    # the hull is the chord opposite the largest gap; distance to 0 is cos(arc/2)
    arc = 2 * np.pi - gaps.max()
    r = np.cos(arc / 2)
    return 2 * np.sqrt(max(0.0, 1 - r * r))


def test_zero_map():
    assert dnorm.diamond_norm_sdp(np.zeros((4, 4))).value == 0
    assert dnorm.diamond_norm_multistart(np.zeros((4, 4)), restarts=2).value == 0


def test_identity_vs_x_is_two():
    res = dnorm.diamond_distance(np.eye(4), gateset.ideal_ptm("x"))
    assert res.value == pytest.approx(2.0, abs=1e-7)
    assert res.lower <= res.value <= res.upper


def test_identity_vs_depolarizing():
    p = 0.01
    dep = np.diag([1, 1 - p, 1 - p, 1 - p])
    assert dnorm.diamond_distance(np.eye(4), dep).value == pytest.approx(1.5 * p, abs=1e-8)
    assert dnorm.diamond_distance(np.eye(4), dep, method="multistart").value == pytest.approx(1.5 * p, abs=1e-6)


def test_pauli_channel_distance_is_twice_error_weight():
    probs = np.array([0.9, 0.05, 0.03, 0.02])
    ptm = sum(pk * qcore.unitary_to_ptm(P) for pk, P in zip(probs, qcore.PAULI_1Q))
    assert dnorm.diamond_distance(ptm, np.eye(4)).value == pytest.approx(0.2, abs=1e-7)


def test_z_rotation_closed_form():
    eps = 0.3
    res = dnorm.diamond_distance(np.eye(4), qcore.unitary_to_ptm(channels.rz(eps)))
    assert res.value == pytest.approx(2 * abs(np.sin(eps / 2)), abs=1e-6)
    ms = dnorm.diamond_distance(np.eye(4), qcore.unitary_to_ptm(channels.rz(eps)), method="multistart")
    assert ms.value == pytest.approx(res.value, abs=1e-6)


def test_unitary_pairs_closed_form():
    rng = np.random.default_rng(11)
    for _ in range(50):
        u, v = qcore.random_unitary(2, rng), qcore.random_unitary(2, rng)
        res = dnorm.diamond_distance(qcore.unitary_to_ptm(u), qcore.unitary_to_ptm(v))
        assert res.value == pytest.approx(unitary_pair_distance(u, v), abs=1e-6)


def test_two_qubit_unitary_pairs_closed_form():
    rng = np.random.default_rng(12)
    for _ in range(3):
        u = qcore.random_unitary(4, rng)
        v = u @ channels.pauli_generator_unitary(rng.normal(scale=0.05, size=15))
        res = dnorm.diamond_distance(qcore.unitary_to_ptm(u), qcore.unitary_to_ptm(v))
        assert res.value == pytest.approx(unitary_pair_distance(u, v), abs=1e-6)
    assert dnorm.diamond_distance(np.eye(16), gateset.ideal_ptm("cz")).value == pytest.approx(2.0, abs=1e-6)


def test_identity_vs_reset_methods_agree():
    reset = approx.reset_ptm(np.array([0.0, 0.0, 1.0]))
    sdp_value = dnorm.diamond_distance(np.eye(4), reset).value
    ms_value = dnorm.diamond_distance(np.eye(4), reset, method="multistart").value
    assert 0 < sdp_value <= 2 + 1e-9
    assert ms_value == pytest.approx(sdp_value, abs=1e-6)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_multistart_is_lower_bound_and_tight(seed):
    rng = np.random.default_rng(seed)
    a, b = qcore.random_cptp_ptm(1, rng), qcore.random_cptp_ptm(1, rng)
    s = dnorm.diamond_distance(a, b)
    m = dnorm.diamond_distance(a, b, method="multistart", restarts=64)
    assert m.value <= s.upper + 1e-9
    assert m.value >= s.value - 1e-5


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_symmetry_and_triangle(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (qcore.random_cptp_ptm(1, rng) for _ in range(3))
    ab = dnorm.diamond_distance(a, b).value
    assert dnorm.diamond_distance(b, a).value == pytest.approx(ab, abs=1e-8)
    assert ab <= dnorm.diamond_distance(a, c).value + dnorm.diamond_distance(c, b).value + 1e-8


def test_two_qubit_random_channels_bracketed():
    rng = np.random.default_rng(13)
    a, b = qcore.random_cptp_ptm(2, rng), qcore.random_cptp_ptm(2, rng)
    res = dnorm.diamond_distance(a, b)
    assert res.upper - res.lower <= dnorm.TOL_2Q
    ms = dnorm.diamond_distance(a, b, method="multistart", restarts=16)
    assert ms.value <= res.upper + 1e-9


def test_input_validation():
    with pytest.raises(qcore.DimensionError):
        dnorm.diamond_distance(np.eye(4), np.eye(16))
    with pytest.raises(ValueError):
        dnorm.diamond_norm_sdp(np.eye(4))  # not trace annihilating
    with pytest.raises(ValueError):
        dnorm.diamond_distance(np.eye(4), np.eye(4), method="guess")


def test_sdp_solver_min_eigenvalue():
    # min <C, X> over density matrices is the smallest eigenvalue of C
    rng = np.random.default_rng(14)
    g = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    c = (g + g.conj().T) / 2
    a = np.eye(3)[None].astype(complex)
    b = np.array([1.0])
    y0 = np.array([np.linalg.eigvalsh(c)[0] - 1.0])
    sol = sdp.solve(c, a, b, np.eye(3) / 3, y0, c - y0[0] * np.eye(3))
    assert sol.converged
    assert sol.primal_objective == pytest.approx(np.linalg.eigvalsh(c)[0], abs=1e-9)
    assert sol.dual_objective == pytest.approx(np.linalg.eigvalsh(c)[0], abs=1e-9)
