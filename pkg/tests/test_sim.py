import numpy as np
import pytest

from umcsim import approx, gateset, qcore, sim
from umcsim.sim import Circuit, ChannelNoise, CircuitError, NoiseModel


def one_qubit_umc_model(name="paper_like", gates=("ry90", "rx180", "ry180", "rx90")):
    """UMC model for the one-qubit gates of a bundled set; two-qubit gates run ideal."""
    gs = gateset.resolve_gateset(name)
    opts = approx.UmcOptions(restarts=4)
    entries = {g: ChannelNoise.from_umc(approx.decompose_umc_1q(gs.gates[g], opts, g)) for g in gates}
    prep = ChannelNoise.from_umc(approx.fit_prep_channel(gs.rho0_matrix))
    meas = ChannelNoise.from_umc(approx.fit_meas_channel(gs.effect))
    return NoiseModel(entries, prep, meas, ideal_fallback=True, label="umc")


@pytest.fixture(scope="module")
def umc_model():
    return one_qubit_umc_model()


def test_parse_example():
    c = sim.parse_circuit("qubits 2\nprep q0\nprep q1\nry q0 90  # comment\ncz q1 q0\nmeasure q0\nmeasure q1\n")
    assert c.n_qubits == 2 and len(c.instructions) == 6
    assert c.instructions[2].name == "ry90"
    assert c.instructions[3].qubits == (0, 1)
    assert sim.parse_circuit(c.to_text()).to_text() == c.to_text()
    assert sim.parse_circuit("qubits 1\nprep q0\nRY q0 -90\nmeasure q0").instructions[1].name == "ry-90"


@pytest.mark.parametrize("text, line", [
    ("qubits 1\nprep q0\nfoo q0\n", 3),
    ("qubits 1\nprep q3\n", 2),
    ("qubits 2\nprep q0\nprep q1\ncz q0\n", 4),
    ("qubits 1\nry q0 90\n", 2),
    ("qubits 1\nprep q0\nmeasure q0\nry q0 90\n", 4),
    ("prep q0\n", 1),
])
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(CircuitError) as info:
        sim.parse_circuit(text)
    assert info.value.line == line
    assert f"line {line}" in str(info.value)


def test_parse_empty_circuit():
    with pytest.raises(CircuitError):
        sim.parse_circuit("# nothing\n")


def test_noiseless_basics():
    ideal = NoiseModel.ideal()
    c = Circuit(1).prep(0).measure(0)
    assert sim.sample(c, ideal, 100, 1).counts == {"0": 100}
    c = Circuit(1).prep(0).gate("rx180", 0).measure(0)
    assert sim.sample(c, ideal, 100, 1).counts == {"1": 100}
    assert sim.run_density_matrix(c, ideal) == pytest.approx({"0": 0.0, "1": 1.0})


def test_ry90_born_statistics():
    c = Circuit(1).prep(0).gate("ry90", 0).measure(0)
    rec = sim.sample(c, NoiseModel.ideal(), 40000, 3)
    assert rec.expectations[0] == pytest.approx(0.5, abs=5 * 0.5 / np.sqrt(40000))


def test_depolarizing_flip_probability():
    p = 0.1
    model = NoiseModel({"idle": ChannelNoise.depolarizing(np.eye(2), p)})
    c = Circuit(1).prep(0).gate("idle", 0).measure(0)
    assert sim.run_density_matrix(c, model)["1"] == pytest.approx(p / 2, abs=1e-12)
    rec = sim.sample(c, model, 40000, 4)
    assert rec.expectations[0] == pytest.approx(p / 2, abs=5 * rec.std_errors[0])


def test_measurement_channel_reset_term():
    # a measurement term that resets to |0> undoes an X flip
    reset = approx.decompose_umc_1q(approx.reset_ptm(np.array([0.0, 0.0, 1.0])), approx.UmcOptions(restarts=2))
    model = NoiseModel({"idle": ChannelNoise.from_umc(reset)}, ideal_fallback=True)
    c = Circuit(1).prep(0).gate("x", 0).gate("idle", 0).measure(0)
    assert sim.sample(c, model, 2000, 5).counts == {"0": 2000}


def test_inject_noise_is_deterministic(umc_model):
    c = sim.grover_circuit("01")
    a = sim.inject_noise(c, umc_model, seed=9, shot=17)
    b = sim.inject_noise(c, umc_model, seed=9, shot=17)
    assert a.draw_log == b.draw_log
    assert sim.run_pure_state(a) == sim.run_pure_state(b)
    # a different shot index gives an independent draw
    logs = {tuple(sim.inject_noise(c, umc_model, 9, s).draw_log) for s in range(50)}
    assert len(logs) > 1


def test_deterministic_channel_always_draws_term_zero():
    c = sim.grover_circuit("11")
    concrete = sim.inject_noise(c, NoiseModel.ideal(), seed=1, shot=3)
    assert all(k == 0 for _, k in concrete.draw_log)
    assert sim.run_pure_state(concrete) == "11"


def test_worker_and_batch_independence(umc_model):
    c = sim.grover_circuit("10")
    base = sim.sample_bits(c, umc_model, 3000, 21, workers=1, batch_size=3000)
    np.testing.assert_array_equal(sim.sample_bits(c, umc_model, 3000, 21, workers=1, batch_size=257), base)
    np.testing.assert_array_equal(sim.sample_bits(c, umc_model, 3000, 21, workers=2, batch_size=1000), base)


@pytest.mark.parametrize("marked", ["00", "01", "10", "11"])
def test_noiseless_grover(marked):
    c = sim.grover_circuit(marked)
    assert sim.run_density_matrix(c, NoiseModel.ideal())[marked] == pytest.approx(1.0, abs=1e-12)
    assert sim.sample(c, NoiseModel.ideal(), 500, 0).counts == {marked: 500}


def test_density_guard():
    c = Circuit(7)
    for q in range(7):
        c.prep(q)
    with pytest.raises(sim.ResourceGuardError):
        sim.run_density_matrix(c, NoiseModel.ideal())


def test_missing_noise_entry():
    with pytest.raises(KeyError):
        sim.sample(Circuit(1).prep(0).gate("ry90", 0).measure(0), NoiseModel(), 10, 0)


def test_uniforms_are_in_unit_interval_and_counter_based():
    u = sim.uniforms(5, np.arange(1000), 3)
    assert np.all((u >= 0) & (u < 1))
    np.testing.assert_array_equal(sim.uniforms(5, np.arange(500, 1000), 3), u[500:])
    assert abs(u.mean() - 0.5) < 0.05


def _mid_circuit_reuse():
    return (Circuit(2).prep(0).prep(1).gate("ry90", 0).gate("cz", 1, 0).measure(0)
            .prep(0).gate("rx90", 0).gate("cz", 0, 1).measure(0).measure(1))


@pytest.mark.parametrize("build", [
    lambda: Circuit(1).prep(0).gate("ry90", 0).gate("rx90", 0).measure(0),
    lambda: sim.grover_circuit("00"),
    _mid_circuit_reuse,
    lambda: Circuit(3).prep(0).prep(1).prep(2).gate("ry90", 0).gate("cz", 0, 1).gate("ry90", 2)
    .gate("rx180", 1).gate("cz", 2, 1).measure(0).measure(1).measure(2),
])
def test_sampler_matches_density_backend(umc_model, build):
    c = build()
    exact = sim.run_density_matrix(c, umc_model)
    assert sum(exact.values()) == pytest.approx(1.0, abs=1e-10)
    shots = 20000
    rec = sim.sample(c, umc_model, shots, 13)
    for bits, p in exact.items():
        sigma = np.sqrt(max(p * (1 - p), 1e-6) / shots)
        assert abs(rec.frequency(bits) - p) <= 5 * sigma, bits


def test_density_backend_against_direct_kraus_oracle():
    # independent oracle: explicit Kraus evolution of |0> through a noisy Ry(90)
    gs = gateset.resolve_gateset("paper_like")
    model = NoiseModel.exact(gs)
    c = Circuit(1).prep(0).gate("ry90", 0).measure(0)
    rho = qcore.from_pauli_vector(gs.rho0)
    for k in (gs.gates["ry90"], sim.meas_exact_ptm(gs.effect)):
        rho = sum(kk @ rho @ kk.conj().T for kk in qcore.ptm_to_kraus(k))
    assert sim.run_density_matrix(c, model)["1"] == pytest.approx(np.real(rho[1, 1]), abs=1e-12)
    # readout with the raw effect gives the same number
    direct = qcore.from_pauli_vector(gs.gates["ry90"] @ gs.rho0)
    p1 = np.real(np.trace(qcore.from_pauli_vector(gs.effect) @ direct))
    assert sim.run_density_matrix(c, model)["1"] == pytest.approx(p1, abs=1e-12)


def test_sample_rejects_zero_shots():
    with pytest.raises(ValueError):
        sim.sample(Circuit(1).prep(0).measure(0), NoiseModel.ideal(), 0, 0)


def test_noisy_grover_matches_fidelity_budget():
    # the success rate is roughly the product of the process fidelities of the
    # error-prone operations: two CZ gates, two preparations, two readouts
    gs = gateset.resolve_gateset("paper_like")
    f_pro = (5 * gs.fidelity("cz") - 1) / 4  # F_pro = ((d + 1) F_avg - 1) / d with d = 4
    budget = f_pro**2 * gateset.prep_fidelity(gs.rho0) ** 2 * gateset.meas_fidelity(gs.effect) ** 2
    model = NoiseModel.exact(gs)
    for marked in ("00", "01", "10", "11"):
        p = sim.run_density_matrix(sim.grover_circuit(marked), model)[marked]
        assert abs(p - budget) < 0.05
