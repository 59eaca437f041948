import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from privcap.capacity import (
    ASYMPTOTE,
    Ensemble,
    StandardFormInput,
    StandardFormObjective,
    achievability_ensemble,
    avg_dephased_entropy_closed_form,
    closed_form_lower_bound,
    coherent_information,
    half_objective,
    harmonic,
    holevo_chi,
    optimize_coherent_info,
    private_information,
    privacy_upper_bound,
    standard_form_input,
)
from privcap.channel import FiniteVChannel, flagged_isometry, identity_isometry
from privcap.ensembles import (
    clifford_group,
    explicit_ensemble,
    haar_ensemble,
    haar_state,
    haar_unitaries,
    random_density,
)
from privcap.linalg import basis, dephase, entropy_vn, maximally_mixed, partial_trace, proj, shannon, tensor


def test_closed_forms():
    assert abs(harmonic(4) - 25 / 12) < 1e-15
    assert abs(avg_dephased_entropy_closed_form(2) - 0.721348) < 1e-6
    assert abs(avg_dephased_entropy_closed_form(4) - 1.562920) < 1e-6
    # H_8 = 761/280 exactly
    assert abs(avg_dephased_entropy_closed_form(8) - math.log2(math.e) * (761 / 280 - 1)) < 1e-14
    assert abs(avg_dephased_entropy_closed_form(8) - 2.478344) < 1e-6
    assert abs(closed_form_lower_bound(2) - 0.278652) < 1e-6
    assert abs(closed_form_lower_bound(3) - 0.382717) < 1e-6
    assert abs(ASYMPTOTE - 0.609949) < 1e-6


def test_closed_form_trend():
    vals = [avg_dephased_entropy_closed_form(d) for d in range(2, 65)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    gaps = [closed_form_lower_bound(d) for d in range(2, 65)]
    assert all(b > a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < ASYMPTOTE
    assert abs(closed_form_lower_bound(1024) - ASYMPTOTE) < 1e-3


def test_privacy_upper_bound():
    assert abs(privacy_upper_bound(4, 1) - 1.5) < 1e-15
    assert abs(privacy_upper_bound(16, 1) - 2.5) < 1e-15
    assert abs(privacy_upper_bound(8, 0) - 1.5) < 1e-15
    with pytest.raises(ValueError):
        privacy_upper_bound(4, -0.1)


def test_coherent_info_feasible_point_haar():
    ch = FiniteVChannel(haar_ensemble(2, 10_000, 21))
    rho = tensor(maximally_mixed(2), proj(basis(2, 0)))
    env = ch.apply_complement(rho)
    per = 1 - np.array([entropy_vn(b) for b in env.blocks])
    se = per.std(ddof=1) / math.sqrt(len(per))
    val = coherent_information(ch, rho)
    assert abs(val - per.mean()) < 1e-12
    assert abs(val - closed_form_lower_bound(2)) <= 3 * se


@pytest.mark.parametrize("d", [2, 3])
def test_coherent_info_basis_input(d):
    ch = FiniteVChannel(clifford_group(d))
    rho = tensor(proj(basis(d, 1)), maximally_mixed(d))
    assert abs(coherent_information(ch, rho) + math.log2(d)) < 1e-12


def test_coherent_info_single_block_oracle():
    d = 2
    ch = FiniteVChannel(explicit_ensemble([np.eye(d)]))
    psi = (np.kron(basis(2, 0), basis(2, 0)) + np.kron(basis(2, 1), basis(2, 1))) / math.sqrt(2)
    rho = 0.7 * proj(psi) + 0.3 * random_density(4, 3)
    p = np.diag(np.exp(2j * np.pi / d * np.outer(np.arange(d), np.arange(d)).ravel()))
    out = p @ rho @ p.conj().T
    direct = entropy_vn(partial_trace(out, (2, 2), [0])) - entropy_vn(partial_trace(out, (2, 2), [1]))
    assert abs(coherent_information(ch, rho) - direct) < 1e-12


def test_coherent_info_isometry_path_agrees():
    ch = FiniteVChannel(explicit_ensemble(haar_unitaries(2, 3, 1)))
    rho = random_density(4, 5)
    assert abs(coherent_information(ch, rho) - coherent_information(ch.isometry(), rho)) < 1e-10


def test_holevo_examples():
    r = random_density(3, 1)
    assert abs(holevo_chi([0.5, 0.5], [r, r])) < 1e-12
    ortho = [proj(basis(3, i)) for i in range(3)]
    assert abs(holevo_chi(np.full(3, 1 / 3), ortho) - math.log2(3)) < 1e-12
    got = holevo_chi([0.5, 0.5], [np.eye(2) / 2, proj(basis(2, 0))])
    assert abs(got - (entropy_vn(np.diag([0.75, 0.25])) - 0.5)) < 1e-12
    assert abs(got - 0.3113) < 1e-4


@pytest.mark.parametrize("ens", [
    clifford_group(2), clifford_group(3),
    haar_ensemble(2, 50, 1), haar_ensemble(3, 50, 2), haar_ensemble(4, 50, 3),
    explicit_ensemble(haar_unitaries(4, 4, 4)),
])
def test_achievability(ens):
    ch = FiniteVChannel(ens)
    assert abs(private_information(ch, achievability_ensemble(ch.d)) - math.log2(ch.d)) < 1e-9


def test_private_information_single_member():
    ch = FiniteVChannel(clifford_group(2))
    e = Ensemble([1.0], (random_density(4, 1),))
    assert abs(private_information(ch, e)) < 1e-12


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 32), st.integers(2, 5))
def test_private_information_below_ceiling(seed, k):
    ch = FiniteVChannel(clifford_group(2))
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(k))
    states = tuple(random_density(4, [seed, i], 1 + i % 4) for i in range(k))
    assert private_information(ch, Ensemble(p, states)) <= privacy_upper_bound(4, 1) + 1e-6


def test_standard_form_examples():
    s = StandardFormInput(2, 1, [0.5, 0.5], np.tile(basis(2, 0), (2, 1)))
    assert np.abs(standard_form_input(s) - tensor(np.eye(2) / 2, proj(basis(2, 0)))).max() < 1e-15
    phi = haar_state(3, 2)
    shields = np.zeros((3, 3), dtype=complex)
    shields[:, 0] = 1
    shields[1] = phi
    s = StandardFormInput(3, 1, [0, 1, 0], shields)
    assert np.abs(s.density() - tensor(proj(basis(3, 1)), proj(phi))).max() < 1e-15


def test_standard_form_fixed_by_dephasing():
    rng = np.random.default_rng(4)
    p = rng.dirichlet(np.ones(4))
    shields = np.stack([haar_state(4, [4, k]) for k in range(4)])
    rho = StandardFormInput(2, 2, p, shields).density()
    assert np.abs(dephase(rho, (4, 4), 0) - rho).max() == 0


def test_bob_entropy_is_shannon():
    ch = FiniteVChannel(clifford_group(3))
    rng = np.random.default_rng(6)
    p = rng.dirichlet(np.ones(3))
    shields = np.stack([haar_state(3, [6, k]) for k in range(3)])
    out = ch.apply(StandardFormInput(3, 1, p, shields).density())
    assert abs(out.conditional_entropy() - shannon(p)) < 1e-12


def test_standard_form_validation():
    with pytest.raises(ValueError):
        StandardFormInput(2, 1, [0.6, 0.6], np.eye(2))
    with pytest.raises(ValueError):
        StandardFormInput(2, 1, [1.0], np.eye(2))


def test_standard_form_json_roundtrip():
    shields = np.stack([haar_state(2, [1, k]) for k in range(2)])
    s = StandardFormInput(2, 1, [1.0, 0.0], shields)
    obj = s.to_json()
    assert len(obj["shields"]) == 1
    back = StandardFormInput.from_json(obj)
    assert np.abs(back.density() - s.density()).max() < 1e-15


def test_objective_matches_generic_evaluation():
    ch = FiniteVChannel(explicit_ensemble(haar_unitaries(2, 5, 3)))
    obj = StandardFormObjective(ch, 1)
    theta = np.random.default_rng(0).normal(size=obj.n_params)
    s = obj.to_input(theta)
    assert abs(obj(theta) - coherent_information(ch, s.density())) < 1e-10


def test_optimizer_clifford_d2():
    ch = FiniteVChannel(clifford_group(2))
    res = optimize_coherent_info(ch, restarts=20, seed=0)
    assert 0 <= res.value <= 1 + 1e-6
    assert res.value >= closed_form_lower_bound(2) - 0.05
    assert abs(coherent_information(ch, res.input.density()) - res.value) < 1e-9
    assert len(res.restart_values) == 20
    assert res.value == max(res.restart_values)
    obj = res.to_json()
    assert obj["kind"] == "lower_certificate" and obj["value_bits"] == res.value
    assert res.bound.kind == "lower_certificate"


def test_optimizer_haar_floor():
    ch = FiniteVChannel(haar_ensemble(2, 64, 5))
    res = optimize_coherent_info(ch, restarts=5, seed=1)
    assert res.value >= 1 - avg_dephased_entropy_closed_form(2) - 0.05
    assert abs(coherent_information(ch, res.input.density()) - res.value) < 1e-9


def test_optimizer_degenerate_init():
    ch = FiniteVChannel(clifford_group(2))
    shields = np.tile(basis(2, 0), (2, 1))
    init = StandardFormInput(2, 1, [1.0, 0.0], shields)
    res = optimize_coherent_info(ch, restarts=1, seed=0, init=init)
    assert np.isfinite(res.value) and res.value >= -1e-12
    assert res.input.p[1] == 0


def test_optimizer_reproducible():
    ch = FiniteVChannel(clifford_group(2))
    a = optimize_coherent_info(ch, restarts=3, seed=9, max_iter=50)
    b = optimize_coherent_info(ch, restarts=3, seed=9, max_iter=50)
    assert a.value == b.value and np.array_equal(a.input.shields, b.input.shields)


def test_optimizer_two_uses():
    ch = FiniteVChannel(explicit_ensemble(haar_unitaries(2, 2, 3)))
    res = optimize_coherent_info(ch, restarts=2, seed=0, n=2, max_iter=100)
    assert res.value <= 2 + 1e-6
    assert abs(coherent_information(ch, res.input.density(), n=2) - res.value) < 1e-9


def test_optimizer_rejects_zero_restarts():
    with pytest.raises(ValueError):
        optimize_coherent_info(FiniteVChannel(clifford_group(2)), restarts=0)


def test_half_objective_examples():
    iso = identity_isometry(4)
    assert abs(half_objective(iso, proj(haar_state(4, 1)))) < 1e-12
    # S(rho) = S(N rho) = 2 and the complement output is a fixed pure state
    assert abs(half_objective(iso, np.eye(4) / 4) - 2.0) < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32), st.sampled_from([None, 1, 2]))
def test_half_objective_is_flagged_coherent_info(seed, rank):
    iso = FiniteVChannel(explicit_ensemble(haar_unitaries(2, 4, 0))).isometry()
    rho = random_density(4, seed, rank)
    assert abs(coherent_information(flagged_isometry(iso), rho) - half_objective(iso, rho)) <= 1e-9


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32), st.sampled_from([None, 1]))
def test_dephasing_a1_never_hurts(seed, rank):
    ch = FiniteVChannel(clifford_group(2))
    rho = random_density(4, seed, rank)
    assert coherent_information(ch, dephase(rho, (2, 2), 0)) >= coherent_information(ch, rho) - 1e-9
