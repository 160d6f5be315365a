import numpy as np
import pytest

import qdtb


def test_ideal_state_metrics():
    rho = qdtb.ideal_timebin_density(0.7)
    assert rho.shape == (4, 4)
    assert np.allclose(rho, rho.conj().T)
    assert np.trace(rho).real == pytest.approx(1.0)
    assert qdtb.concurrence(rho) == pytest.approx(0.7, abs=1e-12)
    assert qdtb.fidelity_phi_plus(rho) == pytest.approx(0.85, abs=1e-12)


KETS = {
    "E": np.array([1, 0], dtype=complex),
    "L": np.array([0, 1], dtype=complex),
    "P": np.array([1, 1], dtype=complex) / np.sqrt(2),
    "Pi": np.array([1, 1j], dtype=complex) / np.sqrt(2),
}


def test_linear_inversion_round_trip():
    rng = np.random.default_rng(1)
    g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = g @ g.conj().T
    rho /= np.trace(rho)
    probs = []
    for xx, x in qdtb.setting_labels():
        psi = np.kron(KETS[xx], KETS[x])
        probs.append(float(np.real(psi.conj() @ rho @ psi)))
    back = qdtb.linear_reconstruct(probs)
    assert np.max(np.abs(back - rho)) < 1e-9


def test_reconstruct_simulated_counts():
    rho = qdtb.ideal_timebin_density(0.7)
    table = qdtb.simulate_counts(rho, 200000, 0.02, seed=5)
    assert len(table["counts"]) == 16
    out = qdtb.reconstruct(table["counts"], table["acquisition_cycles"], table["efficiency_product"],
                           table["slot_weighted"], mc_runs=5, seed=3)
    assert out["converged"]
    assert 0.5 < out["concurrence"]["value"] < 0.9
    eig = np.linalg.eigvalsh(out["rho_matrix"])
    assert eig.min() > -1e-9


def test_bad_counts_rejected():
    with pytest.raises(ValueError):
        qdtb.reconstruct([1] * 15, 100)


def test_fit_rabi():
    x = np.linspace(0, 3, 31)
    y = 1000 * np.sin(np.pi * x / 2) ** 2
    fit = qdtb.fit_rabi(x, y, 2000.0)
    assert fit["x_pi"]["value"] == pytest.approx(1.0, rel=1e-6)
    assert fit["p_emit_pi"]["value"] == pytest.approx(0.5, rel=1e-6)


def test_cavity_energy_conservation():
    spec = qdtb.cavity_spectrum(np.linspace(900, 1000, 51))
    assert spec.shape == (51, 3)
    assert np.allclose(spec[:, 1] + spec[:, 2], 1.0, atol=1e-9)


def test_budget():
    ledger = qdtb.efficiency_budget(61000.0)
    assert ledger["eta_first_lens"] == pytest.approx(61000 / 390000, abs=1e-12)
