import math

import numpy as np
import pytest

from spinherald.dynamics import (
    ANTI_TC,
    TC,
    LadderCavityState,
    LadderSpace,
    PhysicalParams,
    TruncationError,
    build_tc_liouvillian,
    default_n_max,
    effective_params,
    emission_time,
    evolve_to_steady_state,
    monte_carlo_trajectory,
    pulse_duration_estimate,
    run_trajectories,
)
from spinherald.spin_decomposition import decompose
from tests.oracles import tc_full_basis_photons

TWO_PI = 2 * math.pi


def start(gen, M=None):
    if M is None:
        M = 0 if gen.direction == TC else -gen.S
    return LadderCavityState.basis_state(gen.S, M, 0, gen.space.n_max)


# ---------------------------------------------------------------- parameters


def lab_params(**kw):
    base = dict(g=TWO_PI * 10e6, kappa=TWO_PI * 0.2e6, delta=1.0, omega_minus_rabi=0.01)
    base.update(kw)
    return PhysicalParams(**base)


def test_effective_coupling_example():
    eff = effective_params(lab_params())
    assert eff.lambda_plus == 0
    assert eff.lambda_minus / TWO_PI == pytest.approx(10e6 * 0.01 / (12 * math.sqrt(2)), rel=1e-12)
    assert eff.lambda_minus / TWO_PI == pytest.approx(5.89e3, rel=1e-3)


def test_dicke_point_and_frequency_shifts():
    eff = effective_params(lab_params(omega_plus_rabi=0.01, N=4, omega_c=3.0, omega_z=1.0))
    assert eff.lambda_plus == eff.lambda_minus
    p = lab_params(N=4, omega_c=3.0)
    assert effective_params(p).omega == pytest.approx(3.0 + 4 * p.g**2 / 3)
    assert effective_params(lab_params(omega_z=2.0)).omega0 == pytest.approx(2.0 + 1e-4 / 24)


def test_physical_params_validation():
    with pytest.raises(ValueError):
        lab_params(delta=0.0)
    with pytest.raises(ValueError):
        lab_params(kappa=-1.0)
    with pytest.raises(ValueError):
        lab_params(g=math.inf)


def test_pulse_duration_lab_example():
    eff = effective_params(lab_params())
    est = pulse_duration_estimate(100, eff.lambda_minus, eff.kappa)
    assert est.regime == "weak"
    assert 9e-6 <= est.duration <= 11e-6


def test_pulse_duration_branches():
    a = pulse_duration_estimate(4, 0.01, 1.0)
    b = pulse_duration_estimate(8, 0.01, 1.0)
    assert b.duration == pytest.approx(a.duration / 2)
    strong = pulse_duration_estimate(4, 0.5, 1.0)  # sqrt(S) lambda = kappa
    assert strong.regime == "strong" and strong.duration == 5.0
    edge = pulse_duration_estimate(4, 0.25, 1.0)  # sqrt(S) lambda = kappa / 2
    assert edge.regime == "weak"
    with pytest.raises(ValueError):
        pulse_duration_estimate(0, 0.1, 1.0)


# ---------------------------------------------------------------- generator


def test_ladder_space_layout():
    sp = LadderSpace(2, 3)
    assert sp.dim == 20
    assert sp.index(-2, 0) == 0 and sp.index(2, 3) == 19
    assert sp.M[sp.index(1, 2)] == 1 and sp.n[sp.index(1, 2)] == 2
    a, sz, spl, smi = sp.operators()
    assert abs((sz @ spl - spl @ sz) - spl).max() < 1e-12
    np.testing.assert_allclose((a.T @ a).diagonal(), sp.n, atol=1e-14)


@pytest.mark.parametrize("direction", [TC, ANTI_TC])
@pytest.mark.parametrize("S", [0, 1, 3, 6])
def test_generator_is_trace_preserving(S, direction):
    gen = build_tc_liouvillian(S, 0.3, 1.0, n_max=max(2 * S, 1), direction=direction)
    d = gen.space.dim
    assert gen.liouvillian.shape == (d * d, d * d)
    assert gen.trace_defect() < 1e-12


@pytest.mark.parametrize("direction", [TC, ANTI_TC])
def test_conserved_charge_commutes_with_hamiltonian(direction):
    gen = build_tc_liouvillian(4, 0.7, 1.0, n_max=8, direction=direction)
    q = np.diag(gen.charge.astype(float))
    H = gen.hamiltonian.toarray()
    assert np.abs(q @ H - H @ q).max() == 0
    sign = 1 if direction == TC else -1
    np.testing.assert_array_equal(gen.charge, gen.space.n + sign * gen.space.M)


def test_default_truncation():
    assert default_n_max(10, 0.05, 1.0, TC) == 10
    assert default_n_max(10, 0.05, 1.0, ANTI_TC) == 20
    assert default_n_max(100, 0.05, 1.0, TC) == math.ceil((1 / (10 * 0.05)) ** 2) + 8
    with pytest.raises(TruncationError):
        build_tc_liouvillian(2, 0.1, n_max=0)
    with pytest.raises(ValueError):
        build_tc_liouvillian(2, 0.1, direction="sideways")


# ---------------------------------------------------------------- master equation


def test_vacuum_is_stationary_without_spin():
    gen = build_tc_liouvillian(0, 0.2)
    res = evolve_to_steady_state(gen, start(gen), 20.0, checkpoints=11)
    assert res.emitted[-1] == 0
    assert np.all(res.fidelity == 1.0)


def test_cavity_decay_rate():
    # S = 0, one photon: <n>(t) = exp(-2 kappa t)
    gen = build_tc_liouvillian(0, 0.0, kappa=0.7, n_max=1)
    res = evolve_to_steady_state(gen, LadderCavityState.basis_state(0, 0, 1, 1), 3.0, checkpoints=31)
    np.testing.assert_allclose(res.photon_number, np.exp(-1.4 * res.times), rtol=1e-6)
    assert res.emitted[-1] == pytest.approx(1 - math.exp(-4.2), rel=1e-6)


@pytest.mark.parametrize("direction, photons", [(TC, 3), (ANTI_TC, 6)])
def test_herald_photon_count(direction, photons):
    lam = 0.05
    gen = build_tc_liouvillian(3, lam, 1.0, direction=direction)
    t_final = 10 * pulse_duration_estimate(3, lam, 1.0).duration
    res = evolve_to_steady_state(gen, start(gen), t_final)
    assert res.emitted[-1] == pytest.approx(photons, rel=0.01)
    assert res.fidelity[-1] >= 0.999
    assert res.trace_error < 1e-8
    assert res.final_state.fidelity(gen.target_state()) >= 0.999
    assert np.all(np.diff(res.emitted) >= -1e-10)


def test_emission_time_interpolates():
    gen = build_tc_liouvillian(0, 0.0, kappa=0.5, n_max=1)
    res = evolve_to_steady_state(gen, LadderCavityState.basis_state(0, 0, 1, 1), 10.0, checkpoints=2001)
    # 1 - exp(-t) = 1/2 at t = ln 2
    assert emission_time(res, 0.5) == pytest.approx(math.log(2), abs=1e-4)
    with pytest.raises(ValueError):
        emission_time(res, 2.0)


def test_truncation_leakage_is_flagged():
    gen = build_tc_liouvillian(5, 2.0, 1.0, n_max=1)
    with pytest.warns(RuntimeWarning, match="leakage"):
        res = evolve_to_steady_state(gen, start(gen), 5.0, checkpoints=21)
    assert res.leakage > 1e-6


def test_exact_charge_bound_needs_no_monitoring():
    import warnings

    gen = build_tc_liouvillian(3, 2.0, 1.0, n_max=3)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        res = evolve_to_steady_state(gen, start(gen), 10.0, checkpoints=21)
    assert res.leakage == 0.0


def test_initial_state_space_checked():
    gen = build_tc_liouvillian(2, 0.1, n_max=2)
    with pytest.raises(ValueError):
        evolve_to_steady_state(gen, LadderCavityState.basis_state(2, 0, 0, 3), 1.0)


def test_single_sector_matches_full_symmetric_basis():
    # |m=0>^N splits into |S,0> components that evolve independently
    N, lam, n_max = 4, 0.4, 4
    times = np.linspace(0, 12, 25)
    full = tc_full_basis_photons(N, lam, 1.0, n_max, times)
    d = decompose(N)
    total = np.zeros_like(times)
    for S in d.support:
        S = int(S)
        if S == 0:
            continue
        gen = build_tc_liouvillian(S, lam, 1.0, n_max=n_max)
        total += d.populations[S] * evolve_to_steady_state(gen, start(gen), times[-1], checkpoints=times).photon_number
    np.testing.assert_allclose(total, full, atol=1e-7)


# ---------------------------------------------------------------- trajectories


@pytest.mark.parametrize("S", [1, 5])
def test_tc_jump_count(S):
    lam = 0.05
    gen = build_tc_liouvillian(S, lam, 1.0)
    t_final = 30 * pulse_duration_estimate(S, lam, 1.0).duration
    recs = run_trajectories(gen, start(gen), t_final, 200 if S == 5 else 100, seed=7)
    assert all(r.jump_count == S for r in recs)
    assert all(r.completed for r in recs)
    for r in recs[:10]:
        assert r.final_state.fidelity(gen.target_state()) >= 1 - 1e-6
        assert list(r.jump_times) == sorted(r.jump_times)


def test_anti_tc_jump_count():
    gen = build_tc_liouvillian(2, 0.05, 1.0, direction=ANTI_TC)
    t_final = 30 * pulse_duration_estimate(2, 0.05, 1.0).duration
    recs = run_trajectories(gen, start(gen), t_final, 100, seed=3)
    assert all(r.jump_count == 4 for r in recs)
    assert all(r.final_state.fidelity(gen.target_state()) >= 1 - 1e-6 for r in recs)


def test_trajectories_are_reproducible():
    gen = build_tc_liouvillian(3, 0.3, 1.0)
    a = run_trajectories(gen, start(gen), 50.0, 5, seed=21)
    b = run_trajectories(gen, start(gen), 50.0, 5, seed=21)
    c = run_trajectories(gen, start(gen), 50.0, 5, seed=22)
    assert [r.jump_times for r in a] == [r.jump_times for r in b]
    assert [r.jump_times for r in a] != [r.jump_times for r in c]
    assert [r.seed for r in a] == list(range(5))


def test_short_run_reports_pending_emission():
    gen = build_tc_liouvillian(3, 0.05, 1.0)
    with pytest.warns(RuntimeWarning, match="pending"):
        rec = monte_carlo_trajectory(gen, start(gen), 1.0, seed=0)
    assert not rec.completed
    with pytest.raises(ValueError):
        monte_carlo_trajectory(gen, LadderCavityState(gen.space, start(gen).density()), 1.0, seed=0)


def test_trajectory_average_matches_master_equation():
    S, lam = 3, 0.3
    gen = build_tc_liouvillian(S, lam, 1.0)
    times = np.linspace(0, 40, 21)
    me = evolve_to_steady_state(gen, start(gen), times[-1], checkpoints=times)
    recs = run_trajectories(gen, start(gen), times[-1], 600, seed=5, checkpoints=times)
    n = np.array([r.photon_number for r in recs])
    mean = n.mean(axis=0)
    se = n.std(axis=0, ddof=1) / math.sqrt(len(recs))
    # once every trajectory has relaxed the sample spread is exactly zero; the
    # zero-event bound (at most ~3/K of runs still excited) replaces 3 SE there
    tol = np.where(se > 0, 3 * se, 3 * gen.space.n_max / len(recs))
    assert np.all(np.abs(mean - me.photon_number) <= tol)


def test_pulse_time_scales_inversely_with_S():
    # t(1 - 1/e of S photons) * S lambda^2 / kappa stays within a factor 2 across S
    lam = 0.05
    scaled = []
    for S in (2, 4, 8, 16):
        gen = build_tc_liouvillian(S, lam, 1.0)
        t_pulse = pulse_duration_estimate(S, lam, 1.0).duration
        res = evolve_to_steady_state(gen, start(gen), 3 * t_pulse, checkpoints=3001)
        scaled.append(emission_time(res, S * (1 - math.exp(-1))) / t_pulse)
    assert max(scaled) / min(scaled) <= 2.0
