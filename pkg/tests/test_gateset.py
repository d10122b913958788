import json

import numpy as np
import pytest

from umcsim import channels, gateset, qcore


def test_bundled_sets_load_and_validate():
    for name in gateset.BUNDLED:
        gs = gateset.resolve_gateset(name)
        assert {"ry90", "ry-90", "rx180", "ry180", "cz"} <= set(gs.gates)


def test_ideal_set_has_unit_fidelity_and_perfect_spam():
    gs = gateset.resolve_gateset("ideal")
    for name in gs.gates:
        assert gs.fidelity(name) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(gs.rho0, [2**-0.5, 0, 0, 2**-0.5], atol=1e-15)
    np.testing.assert_allclose(gs.effect, [2**-0.5, 0, 0, -(2**-0.5)], atol=1e-15)


def test_paper_like_fidelities():
    gs = gateset.resolve_gateset("paper_like")
    for name in ("rx90", "rx180", "ry90", "ry180", "idle"):
        assert gs.fidelity(name) == pytest.approx(0.9996, abs=1e-5)
    assert gs.fidelity("cz") == pytest.approx(0.9266, abs=1e-5)
    assert gateset.prep_fidelity(gs.rho0) == pytest.approx(0.9296, abs=1e-9)
    assert gateset.meas_fidelity(gs.effect) == pytest.approx(0.9603, abs=1e-9)


def _ideal_dict():
    return json.loads(gateset.bundled_path("ideal").read_text())


def test_cptp_violation_names_the_gate(tmp_path):
    data = _ideal_dict()
    # shrink the identity component of the CZ Choi matrix: min eigenvalue becomes about -1e-3
    choi = qcore.ptm_to_choi(np.array(data["gates"]["cz"]["ptm"]))
    w, v = np.linalg.eigh(choi)
    w[0] = -1e-3 * 4  # Choi trace is d = 4
    bad = qcore.choi_to_ptm((v * w) @ v.conj().T)
    data["gates"]["cz"]["ptm"] = bad.tolist()
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    with pytest.raises(gateset.CptpViolationError) as info:
        gateset.load_gateset(path)
    assert info.value.gate == "cz"
    assert "cz" in str(info.value)


def test_wrong_basis_tag_and_schema(tmp_path):
    data = _ideal_dict()
    data["basis"] = "pauli-unnormalized"
    path = tmp_path / "basis.json"
    path.write_text(json.dumps(data))
    with pytest.raises(gateset.BasisTagError):
        gateset.load_gateset(path)
    data = _ideal_dict()
    data["schema_version"] = 99
    path.write_text(json.dumps(data))
    with pytest.raises(gateset.SchemaError):
        gateset.load_gateset(path)
    data = _ideal_dict()
    del data["rho0"]
    path.write_text(json.dumps(data))
    with pytest.raises(gateset.SchemaError):
        gateset.load_gateset(path)
    path.write_text("{not json")
    with pytest.raises(gateset.SchemaError):
        gateset.load_gateset(path)


def test_save_load_round_trip(tmp_path):
    gs = gateset.resolve_gateset("paper_like")
    gs.save(tmp_path / "copy.json")
    back = gateset.load_gateset(tmp_path / "copy.json")
    for name in gs.gates:
        np.testing.assert_array_equal(back.gates[name], gs.gates[name])
    np.testing.assert_array_equal(back.rho0, gs.rho0)


def test_synthesize_rejects_bad_infidelity():
    with pytest.raises(ValueError):
        gateset.synthesize_noisy_gateset({"x": "rx90"}, {"x": 0.0}, seed=0)
    with pytest.raises(ValueError):
        gateset.synthesize_noisy_gateset({"x": "rx90"}, {"x": 0.3}, seed=0)


def test_synthesize_hits_fidelities_and_is_deterministic():
    targets = {"rx90": "rx90", "idle": "idle", "cz": "cz"}
    inf = {"rx90": 4e-4, "idle": 4e-4, "cz": 0.0734}
    a = gateset.synthesize_noisy_gateset(targets, inf, seed=3, spam={"prep": 0.95, "meas": 0.97})
    b = gateset.synthesize_noisy_gateset(targets, inf, seed=3, spam={"prep": 0.95, "meas": 0.97})
    for name in targets:
        assert qcore.validate_cptp(a.gates[name]).ok
        assert a.fidelity(name) == pytest.approx(1 - inf[name], abs=1e-5)
        np.testing.assert_array_equal(a.gates[name], b.gates[name])
    assert gateset.prep_fidelity(a.rho0) == pytest.approx(0.95)
    assert gateset.meas_fidelity(a.effect) == pytest.approx(0.97)


def test_spam_helpers():
    rho = qcore.from_pauli_vector(gateset.noisy_prep_state(0.96))
    assert np.real(rho[0, 0]) == pytest.approx(0.96)
    assert qcore.is_density_matrix(rho)
    effect = qcore.from_pauli_vector(gateset.noisy_effect(0.9, bias=1.5))
    q0, q1 = np.real(effect[0, 0]), 1 - np.real(effect[1, 1])
    assert q1 / q0 == pytest.approx(1.5)
    assert 1 - (q0 + q1) / 2 == pytest.approx(0.9)
    # interpolation is exact because both fidelities are affine in the vector
    vec = gateset.interpolate_spam(gateset.noisy_prep_state(0.9), gateset.PERFECT_RHO0, gateset.prep_fidelity, 0.97)
    assert gateset.prep_fidelity(vec) == pytest.approx(0.97)


def test_scale_gateset_moves_everything_to_one_fidelity():
    gs = gateset.resolve_gateset("high_fidelity")
    scaled = gateset.scale_gateset(gs, 0.9995, ("ry90", "cz"))
    for name in ("ry90", "cz"):
        assert scaled.fidelity(name) == pytest.approx(0.9995, abs=1e-9)
    assert gateset.prep_fidelity(scaled.rho0) == pytest.approx(0.9995)
    assert gateset.meas_fidelity(scaled.effect) == pytest.approx(0.9995)
    # the error generator direction is preserved: scaling back recovers the original
    gen = channels.error_generator(gs.target_ptm("cz"), scaled.gates["cz"])
    np.testing.assert_allclose(gen / np.linalg.norm(gen),
                               gs.error_generator("cz") / np.linalg.norm(gs.error_generator("cz")), atol=1e-8)
    with pytest.raises(gateset.GateSetError):
        gateset.scale_gateset(gs, 0.999, ("nope",))
