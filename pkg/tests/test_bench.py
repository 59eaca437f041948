import math

import numpy as np
import pytest

from privcap.bench import (
    ExperimentReport,
    hamming,
    overlap_exact,
    overlap_terms,
    passes,
    purity_exact,
    trial_values,
    verify_achievability,
    verify_asymptote,
    verify_avg_dephased_entropy,
    verify_bilinear_bound,
    verify_ceiling,
    verify_degradability,
    verify_dephasing_monotonicity,
    verify_feasible_floor,
    verify_frame_potential,
    verify_half_objective,
    verify_lemma2,
    verify_lemma3_purity,
    verify_twirl,
)
from privcap.channel import FiniteVChannel, dephasing_isometry, identity_isometry, strings
from privcap.ensembles import (
    RngSeed,
    clifford_group,
    explicit_ensemble,
    haar_ensemble,
    haar_state,
    haar_unitaries,
    random_hermitian,
    tensor_power_members,
)
from privcap.linalg import basis, op_inf_norm


def test_pass_rule():
    assert passes(1.0, 0.1, 1.2, "<=")
    assert passes(1.5, 0.1, 1.2, "<=")
    assert not passes(1.51, 0.1, 1.2, "<=")
    assert passes(0.9, 0.0, 1.0, ">=", tol_abs=0.1)
    assert not passes(0.8, 0.0, 1.0, ">=", tol_abs=0.1)
    assert passes(1.0, 0.0, 1.0 + 5e-11, "=")
    assert not passes(1.0, 0.0, 1.0 + 5e-10, "=")
    assert not passes(math.nan, 0.0, 1.0, "<=")
    with pytest.raises(ValueError):
        passes(1.0, 0.0, 1.0, "<")


def test_report_json_schema():
    r = ExperimentReport("x", {"d": 2}, 0.5, 0.0, 1.0, "<=", RngSeed(3, 1), 7)
    obj = r.to_json()
    assert list(obj) == ["name", "params", "estimate", "std_error", "bound", "comparison", "pass", "status",
                         "seed", "wall_ms"]
    assert obj["pass"] is True and obj["status"] == "pass" and obj["seed"] == [3, 1]


def test_hamming():
    assert hamming((0, 1, 2), (0, 2, 2)) == 1
    assert hamming((1, 1), (0, 0)) == 2


def test_overlap_worked_case():
    r = verify_lemma2(3, 1, (0,), (1,), [basis(3, 0), basis(3, 0)])
    assert abs(r.estimate - 0.25) < 1e-15 and r.bound == 0.5 and r.status == "pass"


def test_overlap_two_positions_random_shields():
    for k in range(20):
        phi_x, phi_y = haar_state(9, [k, 0]), haar_state(9, [k, 1])
        r = verify_lemma2(3, 2, (0, 2), (1, 0), [phi_x, phi_y])
        assert r.estimate <= 0.25 + 1e-10 and r.status == "pass"


def test_overlap_equal_strings():
    phi = haar_state(9, 4)
    r = verify_lemma2(3, 2, (1, 2), (1, 2), [phi, phi])
    assert abs(r.estimate - 1) < 1e-12 and r.bound == 1 and r.passed


def test_overlap_symmetric():
    for k in range(10):
        phi_x, phi_y = haar_state(9, [k, 2]), haar_state(9, [k, 3])
        a = overlap_exact((0, 1), (2, 1), phi_x, phi_y, 3)
        b = overlap_exact((2, 1), (0, 1), phi_y, phi_x, 3)
        assert abs(a - b) < 1e-12


def test_overlap_exact_matches_clifford_average():
    phi_x, phi_y = haar_state(9, 1), haar_state(9, 2)
    x, y = (0, 1), (2, 2)
    v, w = tensor_power_members(clifford_group(3), 2)
    avg = float(w @ overlap_terms(v, x, y, phi_x, phi_y, 3))
    assert abs(avg - overlap_exact(x, y, phi_x, phi_y, 3)) < 1e-12
    r = verify_lemma2(3, 2, x, y, [phi_x, phi_y], clifford_group(3))
    assert abs(r.estimate - avg) < 1e-15


def test_overlap_haar_consistent_with_exact():
    phi_x, phi_y = haar_state(3, 1), haar_state(3, 2)
    exact = overlap_exact((0,), (1,), phi_x, phi_y, 3)
    r = verify_lemma2(3, 1, (0,), (1,), [phi_x, phi_y], "haar", 20_000, RngSeed(1))
    assert abs(r.estimate - exact) <= 3 * r.std_error
    assert r.passed


def test_overlap_bound_trivial_for_qubits():
    r = verify_lemma2(2, 1, (0,), (1,), [basis(2, 0), basis(2, 1)])
    assert r.bound == 1 and r.status == "trivial-bound"


def test_overlap_bad_pattern():
    with pytest.raises(ValueError):
        verify_lemma2(3, 1, (0, 1), (1,), [basis(3, 0), basis(3, 0)])


def test_purity_worked_case():
    shields = np.tile(basis(3, 0), (3, 1))
    r = verify_lemma3_purity(3, 1, np.full(3, 1 / 3), shields)
    assert abs(r.estimate - 0.5) < 1e-12 and abs(r.bound - 2 / 3) < 1e-15 and r.passed


def test_purity_single_string():
    shields = np.stack([haar_state(9, [2, k]) for k in range(9)])
    p = np.zeros(9)
    p[4] = 1
    r = verify_lemma3_purity(3, 2, p, shields)
    assert abs(r.estimate - 1) < 1e-12 and r.bound == 4 and r.passed


def test_purity_exact_matches_clifford_average():
    rng = np.random.default_rng(3)
    p = rng.dirichlet(np.ones(4))
    shields = np.stack([haar_state(4, [3, k]) for k in range(4)])
    exact = purity_exact(2, 2, p, shields, strings(2, 2))
    r = verify_lemma3_purity(2, 2, p, shields, clifford_group(2))
    assert abs(r.estimate - exact) < 1e-12


def test_purity_haar_two_uses():
    rng = np.random.default_rng(8)
    p = rng.dirichlet(np.ones(9))
    shields = np.stack([haar_state(9, [8, k]) for k in range(9)])
    r = verify_lemma3_purity(3, 2, p, shields, "haar", 10_000, RngSeed(8))
    assert r.passed and r.std_error > 0
    exact = purity_exact(3, 2, p, shields, strings(3, 2))
    assert abs(r.estimate - exact) <= 4 * r.std_error


def test_purity_exact_limits():
    with pytest.raises(ValueError):
        verify_lemma3_purity(5, 1, np.full(5, 0.2), np.tile(basis(5, 0), (5, 1)))


@pytest.mark.parametrize("d,trials", [(2, 100_000), (8, 100_000), (2, 1000)])
def test_avg_dephased_entropy(d, trials):
    r = verify_avg_dephased_entropy(d, trials, RngSeed(d))
    assert r.passed
    assert r.std_error < 0.05


def test_avg_dephased_entropy_min_trials():
    with pytest.raises(ValueError):
        verify_avg_dephased_entropy(2, 999)


def test_thread_count_does_not_change_results():
    a = verify_avg_dephased_entropy(3, 5000, RngSeed(4), threads=1)
    b = verify_avg_dephased_entropy(3, 5000, RngSeed(4), threads=4)
    assert a.estimate == b.estimate and a.std_error == b.std_error
    vals1 = trial_values(lambda s, e: np.arange(s, e, dtype=float), 5000, 1)
    vals3 = trial_values(lambda s, e: np.arange(s, e, dtype=float), 5000, 3)
    assert np.array_equal(vals1, vals3) and np.array_equal(vals1, np.arange(5000.0))


@pytest.mark.parametrize("d", [2, 3])
def test_twirl_clifford(d):
    r = verify_twirl(d, "clifford")
    assert r.estimate <= 1e-10 and r.passed


def test_twirl_haar():
    r = verify_twirl(3, "haar", 100_000, RngSeed(2))
    assert r.passed and r.bound == 5 * 9 / math.sqrt(100_000)


def test_frame_potential_reports():
    assert verify_frame_potential(clifford_group(3)).passed
    assert verify_frame_potential(haar_ensemble(2, 2000, 3)).passed
    assert not verify_frame_potential(explicit_ensemble(haar_unitaries(2, 4, 0))).passed


def test_degradability_reports():
    assert verify_degradability(FiniteVChannel(explicit_ensemble(haar_unitaries(2, 4, 1)))).passed
    assert verify_degradability(identity_isometry(2)).passed
    assert verify_degradability(dephasing_isometry(2)).passed
    with pytest.raises(ValueError):
        verify_degradability(FiniteVChannel(haar_ensemble(2, 30, 0)))


def test_bilinear_examples():
    psi, phi = haar_state(5, 1), haar_state(5, 2)
    assert abs(np.vdot(psi, phi)) <= op_inf_norm(np.eye(5)) + 1e-12
    h = random_hermitian(5, 3)
    ev, vecs = np.linalg.eigh(h)
    top = vecs[:, np.argmax(np.abs(ev))]
    assert abs(abs(np.vdot(top, h @ top)) - op_inf_norm(h)) < 1e-12
    r = verify_bilinear_bound(9, 1000, RngSeed(5))
    assert r.passed


def test_channel_reports():
    ch = FiniteVChannel(clifford_group(2))
    assert verify_achievability(ch).passed
    assert verify_half_objective(FiniteVChannel(explicit_ensemble(haar_unitaries(2, 4, 0))).isometry(),
                                 20, 1).passed
    assert verify_dephasing_monotonicity(ch, 50, 2).passed
    floor = verify_feasible_floor(ch)
    assert floor.passed and floor.comparison == "<="
    haar = verify_feasible_floor(FiniteVChannel(haar_ensemble(3, 10_000, 4)))
    assert haar.passed and haar.comparison == "="
    assert verify_asymptote().passed


def test_ceiling_report_carries_certificate():
    r = verify_ceiling(FiniteVChannel(clifford_group(2)), restarts=2, seed=1, max_iter=200)
    cert = r.params["certificate"]
    assert cert["kind"] == "lower_certificate" and cert["value_bits"] == r.estimate
    assert r.passed


def test_dephasing_monotonicity_two_uses():
    r = verify_dephasing_monotonicity(FiniteVChannel(clifford_group(2)), 30, RngSeed(6), n=2)
    assert r.passed and r.params["n"] == 2
