import numpy as np
import pytest

from umcsim import approx, channels, gateset, qcore

FAST = approx.UmcOptions(restarts=4)
RESET0 = approx.reset_ptm(np.array([0.0, 0.0, 1.0]))


def noisy(name, infidelity, seed, profile=None):
    target = gateset.ideal_ptm(name)
    profile = profile or (gateset.SINGLE_QUBIT_PROFILE if target.shape[0] == 4 else gateset.TWO_QUBIT_PROFILE)
    gen = gateset.random_error_generator(target, infidelity, np.random.default_rng(seed), profile)
    return channels.scale_channel(target, gen, 1.0)


def test_unitary_target_is_recovered_exactly():
    rng = np.random.default_rng(0)
    target = qcore.unitary_to_ptm(qcore.random_unitary(2, rng))
    dec = approx.decompose_umc_1q(target, FAST)
    assert dec.achieved_distance <= 1e-8
    assert dec.p.max() == pytest.approx(1.0, abs=1e-8)
    assert dec.converged


def test_reset_target_is_recovered_exactly():
    dec = approx.decompose_umc_1q(RESET0, FAST)
    assert dec.achieved_distance <= 1e-8
    # the weight sits on measurement terms
    weight = sum(p for p, t in dec.terms() if isinstance(t, channels.MeasurementTerm))
    assert weight == pytest.approx(1.0, abs=1e-6)


def test_term_structure():
    dec1 = approx.decompose_umc_1q(np.eye(4), FAST)
    assert len(dec1.unitary_terms) == 4 and len(dec1.measurement_terms) == 2
    dec2 = approx.decompose_umc_2q(gateset.ideal_ptm("cz"), approx.UmcOptions(restarts=1))
    assert len(dec2.unitary_terms) == 5
    assert sorted(t.tag for t in dec2.measurement_terms) == ["meas_pair", "meas_q0", "meas_q1"]
    assert dec2.achieved_distance <= 1e-7
    for d in (dec1, dec2):
        assert np.all(d.p >= 0) and d.p.sum() == pytest.approx(1.0, abs=1e-12)
        for t in d.unitary_terms:
            if t.n_qubits == 1:
                assert np.all((t.theta >= 0) & (t.theta < 2 * np.pi))


def test_noisy_ry90_quality_and_reevaluation():
    target = noisy("ry90", 4e-4, 1)
    dec = approx.decompose_umc_1q(target, approx.UmcOptions(restarts=8), "ry90")
    assert dec.achieved_distance <= 5e-4
    assert dec.reevaluate() == pytest.approx(dec.achieved_distance, abs=1e-6)
    again = approx.UmcDecomposition.from_dict(dec.to_dict())
    assert again.reevaluate() == pytest.approx(dec.achieved_distance, abs=1e-6)
    # the fit can never be worse than the CMC baseline on the same target
    assert dec.achieved_distance <= approx.decompose_cmc(target).achieved_distance + 1e-9


def test_surrogate_tracks_diamond_distance():
    # squared Frobenius distance between Choi matrices bounds the diamond distance
    # from above via ||.||_diamond <= d ||J||_1 <= d * sqrt(d^2) ||J||_F
    target = noisy("rx90", 4e-4, 2)
    dec = approx.decompose_umc_1q(target, FAST)
    frob = np.linalg.norm(qcore.ptm_to_choi(dec.ptm() - target))
    assert dec.achieved_distance <= 2 * 2 * frob + 1e-9


def test_determinism_by_seed():
    target = noisy("ry180", 4e-4, 3)
    a = approx.decompose_umc_1q(target, approx.UmcOptions(restarts=3, seed=7))
    b = approx.decompose_umc_1q(target, approx.UmcOptions(restarts=3, seed=7))
    assert a.to_dict() == b.to_dict()


def test_two_qubit_beats_pta_on_coherent_error():
    # depolarizing on both qubits plus a small coherent ZZ over-rotation
    dep = np.diag([1.0] + [0.99] * 3)
    coherent = qcore.unitary_to_ptm(channels.pauli_generator_unitary(
        np.eye(15)[qcore.pauli_index("ZZ") - 1] * 0.02))
    target = gateset.ideal_ptm("cz") @ coherent @ np.kron(dep, dep)
    umc = approx.decompose_umc_2q(target, approx.UmcOptions(restarts=2, max_iters=100))
    pta = approx.decompose_pta(target, gateset.ideal_ptm("cz"))
    assert umc.achieved_distance < pta.achieved_distance


def test_cz_with_depolarizing_is_pauli_exact():
    # CZ followed by depolarizing noise is itself a Pauli channel after CZ,
    # so the twirl is exact and UMC can only tie
    dep = np.diag([1.0] + [0.99] * 3)
    target = np.kron(dep, dep) @ gateset.ideal_ptm("cz")
    pta = approx.decompose_pta(target, gateset.ideal_ptm("cz"))
    assert pta.achieved_distance <= 1e-7


def test_cmc_examples():
    labels, mats = approx.cmc_channel_set()
    assert len(labels) == 30 and len(approx.clifford_group_1q()) == 24
    h = gateset.ideal_ptm("h")
    dec = approx.decompose_cmc(h)
    assert dec.achieved_distance <= 1e-8
    assert dec.p.max() == pytest.approx(1.0, abs=1e-6)
    p = 0.05
    dep = approx.decompose_cmc(np.diag([1, 1 - p, 1 - p, 1 - p]))
    assert dep.achieved_distance <= 1e-8
    assert np.all(dep.p >= 0) and dep.p.sum() == pytest.approx(1.0)


def test_pta_examples():
    np.testing.assert_allclose(approx.decompose_pta(np.eye(4)).p, [1, 0, 0, 0], atol=1e-14)
    p = 0.04
    dec = approx.decompose_pta(np.diag([1, 1 - p, 1 - p, 1 - p]))
    np.testing.assert_allclose(dec.p, [1 - 3 * p / 4, p / 4, p / 4, p / 4], atol=1e-14)
    eps = 0.1
    rot = approx.decompose_pta(qcore.unitary_to_ptm(channels.rz(eps)))
    assert rot.p[3] == pytest.approx(np.sin(eps / 2) ** 2, abs=1e-12)
    with pytest.raises(ValueError):
        approx.decompose_pta(np.diag([1.0, 1, 1, -1]))


def test_pta_relative_to_declared_ideal():
    target = noisy("rx90", 4e-4, 4)
    dec = approx.decompose_pta(target, gateset.ideal_ptm("rx90"))
    # the twirled model keeps the gate and only replaces the error
    assert qcore.average_gate_fidelity(dec.ptm(), gateset.ideal_ptm("rx90")) == pytest.approx(
        qcore.average_gate_fidelity(target, gateset.ideal_ptm("rx90")), abs=1e-12)


def test_prep_fit_examples():
    zero = qcore.projector(qcore.ket("0"))
    assert approx.fit_prep_channel(zero).residual <= 1e-12
    mixed = 0.96 * zero + 0.04 * qcore.projector(qcore.ket("1"))
    assert approx.fit_prep_channel(mixed).residual <= 1e-9
    tilted = channels.ry(0.05) @ np.diag([0.93, 0.07]) @ channels.ry(0.05).conj().T
    dec = approx.fit_prep_channel(tilted)
    assert dec.residual <= 1e-9 and dec.converged
    out = qcore.from_pauli_vector(dec.ptm() @ gateset.PERFECT_RHO0)
    np.testing.assert_allclose(out, tilted, atol=1e-8)


def test_meas_fit_examples():
    perfect = approx.fit_meas_channel(gateset.PERFECT_EFFECT)
    assert perfect.residual <= 1e-9
    np.testing.assert_allclose(gateset.PERFECT_EFFECT @ perfect.ptm(), gateset.PERFECT_EFFECT, atol=1e-9)
    q = 0.03
    symmetric = qcore.to_pauli_vector(np.diag([q, 1 - q]))
    assert approx.fit_meas_channel(symmetric).residual <= 1e-9
    biased = gateset.noisy_effect(0.96, bias=1.5)
    dec = approx.fit_meas_channel(biased)
    assert dec.converged and dec.residual <= 1e-9
    # pointwise check on random states
    rng = np.random.default_rng(5)
    for _ in range(20):
        rho = qcore.to_pauli_vector(qcore.random_density_matrix(2, rng))
        assert abs(gateset.PERFECT_EFFECT @ dec.ptm() @ rho - biased @ rho) <= 1e-8


def test_bad_inputs():
    with pytest.raises(ValueError):
        approx.fit_prep_channel(np.diag([1.2, -0.2]))
    with pytest.raises(ValueError):
        approx.fit_meas_channel(qcore.to_pauli_vector(np.diag([1.5, 0.0])))
    with pytest.raises(qcore.DimensionError):
        approx.decompose_cmc(np.eye(16))
