import itertools

import numpy as np
import pytest

from umcsim import gateset, qec, sim
from umcsim.sim import Instruction, NoiseModel


def run_once(exp, seed=0):
    return sim.sample_bits(exp.circuit, NoiseModel.ideal(), 1, seed)


def events_of(exp, bits):
    det = exp.detection_events(bits)[0]
    return [exp.detector_info[k] for k in np.nonzero(det)[0]]


def with_initial_flips(exp, qubits, pauli="x"):
    """Apply ``pauli`` to data qubits right after their preparation (z basis only)."""
    for q in qubits:
        exp.circuit.instructions.insert(qec.N_DATA, Instruction("gate", (q,), pauli))
    return exp


def test_layout_sizes():
    exp = qec.build_surface17_circuit(rounds=1)
    assert exp.circuit.n_qubits == 17
    assert sum(1 for i in exp.circuit.instructions if i.name == "cz") == 24
    assert exp.circuit.n_measurements == 8 + 9
    exp3 = qec.build_surface17_circuit(rounds=3)
    assert sum(1 for i in exp3.circuit.instructions if i.name == "cz") == 72
    # round 0 keeps only memory-basis checks; later rounds keep all; then a final layer
    assert len(exp3.detectors) == 4 + 8 + 8 + 4


def test_stabilizers_commute():
    stabs = qec.LAYOUT.stabilizers()
    assert len(stabs) == 8
    for a, b in itertools.combinations(stabs, 2):
        assert qec.paulis_commute(a, b)
    lz = "".join("Z" if q in qec.LOGICAL_Z else "I" for q in reversed(range(17)))
    lx = "".join("X" if q in qec.LOGICAL_X else "I" for q in reversed(range(17)))
    for s in stabs:
        assert qec.paulis_commute(s, lz) and qec.paulis_commute(s, lx)
    assert not qec.paulis_commute(lz, lx)


@pytest.mark.parametrize("basis", ["z", "x"])
def test_noiseless_has_no_events(basis):
    exp = qec.build_surface17_circuit(rounds=3, basis=basis)
    bits = sim.sample_bits(exp.circuit, NoiseModel.ideal(), 20, 1)
    assert not exp.detection_events(bits)[:, exp.decoded_detectors].any()
    if basis == "z":
        assert not exp.detection_events(bits).any()
    assert not exp.observed_logical(bits).any()
    assert not qec.logical_failures(exp, bits).any()


def test_bulk_x_error_fires_two_z_checks():
    exp = qec.build_surface17_circuit(rounds=3, inject=(0, 4, "x"))
    assert sorted(events_of(exp, run_once(exp))) == [("z", 1, 1), ("z", 2, 1)]
    hist = exp.syndrome_history(run_once(exp)[0])
    # X-check outcomes are random in the z basis; the Z checks are deterministic
    np.testing.assert_array_equal(hist[0, 4:], 0)
    np.testing.assert_array_equal(hist[1, 4:], [0, 1, 1, 0])


def test_final_round_error_is_seen_by_data_layer():
    exp = qec.build_surface17_circuit(rounds=2, inject=(1, 0, "x"))
    assert events_of(exp, run_once(exp)) == [("z", 0, 2)]


@pytest.mark.parametrize("basis", ["z", "x"])
def test_every_single_data_error_is_corrected(basis):
    for q in range(qec.N_DATA):
        for pauli in "xyz":
            exp = qec.build_surface17_circuit(rounds=3, basis=basis, inject=(1, q, pauli))
            bits = run_once(exp, seed=q)
            assert qec.logical_failures(exp, bits)[0] == 0, (q, pauli)


def test_weight_two_and_logical_errors():
    # two flips on a column: the decoder corrects to the wrong coset
    exp = with_initial_flips(qec.build_surface17_circuit(rounds=2), (0, 3))
    bits = run_once(exp)
    assert events_of(exp, bits)
    assert qec.logical_failures(exp, bits)[0] == 1
    # a full logical X: no events, readout flipped, undetectable failure
    exp = with_initial_flips(qec.build_surface17_circuit(rounds=2), qec.LOGICAL_X)
    bits = run_once(exp)
    assert events_of(exp, bits) == []
    assert exp.observed_logical(bits)[0] == 1
    assert qec.logical_failures(exp, bits)[0] == 1


def brute_force_matching(events, graph):
    """Minimum weight over all ways to pair events or send them to the boundary."""
    if not events:
        return 0.0
    first, rest = events[0], events[1:]
    best = graph.distance(first, qec.BOUNDARY)[0] + brute_force_matching(rest, graph)
    for j, other in enumerate(rest):
        w = graph.distance(first, other)[0]
        best = min(best, w + brute_force_matching(rest[:j] + rest[j + 1:], graph))
    return best


def test_matching_agrees_across_methods():
    graph = qec.decoding_graph(3, "z")
    decoded = qec.build_surface17_circuit(3, "z").decoded_detectors
    rng = np.random.default_rng(0)
    for size in range(1, 7):
        for _ in range(5):
            events = sorted(rng.choice(decoded, size, replace=False).tolist())
            w_exact, _ = qec._match_exhaustive(events, graph)
            w_blossom, _ = qec._match_blossom(events, graph)
            assert w_exact == pytest.approx(brute_force_matching(events, graph))
            assert w_blossom == pytest.approx(w_exact)


def test_decoding_graph_structure():
    graph = qec.decoding_graph(3, "z")
    decoded = qec.build_surface17_circuit(3, "z").decoded_detectors
    assert graph.n_detectors == 24 and len(decoded) == 16
    assert all(w in (0, 1) for w in graph.edges.values())  # values are logical parities
    for k in decoded:
        assert np.isfinite(graph.distance(k, qec.BOUNDARY)[0])
    assert graph.distance(0, 0) == (0.0, 0)


def test_threshold_on_synthetic_sweep():
    fids = np.array([0.999, 0.9995, 0.9997, 0.9999])
    rates = 2000 * (1 - fids) ** 2  # crosses 1 - f at 1 - f = 5e-4
    est = qec.estimate_pseudo_threshold(list(zip(fids, rates)))
    assert 0.999 < est.crossing < 0.9999
    assert est.crossing == pytest.approx(0.9995, abs=1e-9)
    assert est.bracket[0] <= est.crossing <= est.bracket[1]
    with pytest.raises(ValueError):
        qec.estimate_pseudo_threshold([(f, 0.5) for f in fids])


def test_threshold_bracket_from_intervals():
    pts = [qec.LogicalRate(0.999, 1000, 3, *qec.wilson_interval(3, 1000)),
           qec.LogicalRate(0.9999, 10000, 0, *qec.wilson_interval(0, 10000))]
    est = qec.estimate_pseudo_threshold(pts)
    assert est.bracket[0] <= est.crossing <= est.bracket[1]


def test_logical_rate_edge_cases():
    gs = gateset.resolve_gateset("ideal")
    res = qec.estimate_logical_error_rate(gs, 1.0, rounds=1, shots=50, seed=3)
    assert res.errors == 0 and res.rate == 0.0 and res.ci_low == 0.0
    with pytest.raises(ValueError):
        qec.estimate_logical_error_rate(gs, 1.0, shots=0)
    with pytest.raises(ValueError):
        qec.build_surface17_circuit(rounds=0)


def test_decoder_suppresses_weak_depolarizing_noise():
    p = 4e-3
    gates = {g: sim.ChannelNoise.depolarizing(gateset.IDEAL_GATES[g], p) for g in qec.SURFACE_GATES}
    model = NoiseModel(gates)
    res = qec.estimate_logical_error_rate(None, 0.0, rounds=2, shots=1500, seed=5, model=model)
    assert res.rate < p
