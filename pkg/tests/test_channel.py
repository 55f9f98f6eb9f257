"""Fading draws, training simulation, and MMSE estimation statistics."""

import numpy as np
import pytest

from hcransim import (
    ScenarioConfig,
    TrainingConfig,
    build_conflict_graph,
    compute_beta,
    draw_small_scale,
    estimate_channels,
    generate_topology,
    perfect_channel_state,
    prelog_factor,
    psa_schedule,
    sum_mse,
)
from hcransim.util import child_seed

from oracles import delta_oracle


def make_instance(seed=0, tau=3, num_ue=6, num_rrh=15):
    topo = generate_topology(
        ScenarioConfig(num_rrh=num_rrh, num_ue=num_ue, coverage_radius=130.0, rng_seed=seed)
    )
    graph = build_conflict_graph(topo)
    metrics = compute_beta(topo, graph)
    training = TrainingConfig(tau=tau)
    assignment = psa_schedule(topo, metrics, graph, tau)
    return topo, training, assignment


def test_training_config_validation():
    with pytest.raises(ValueError):
        TrainingConfig(p_rue=0.0)
    with pytest.raises(ValueError):
        TrainingConfig(tau=0)
    with pytest.raises(ValueError):
        TrainingConfig(tau=50, coherence=50)


def test_prelog_factor():
    assert prelog_factor(5, 50) == pytest.approx(0.9, rel=1e-15)
    assert prelog_factor(1, 2) == pytest.approx(0.5, rel=1e-15)
    with pytest.raises(ValueError):
        prelog_factor(0, 50)
    with pytest.raises(ValueError):
        prelog_factor(50, 50)


def test_draw_small_scale_statistics():
    topo = generate_topology(ScenarioConfig(num_rrh=4, num_ue=3, rng_seed=1))
    # per-link empirical variance over many redraws matches the link gain
    acc_r = np.zeros((topo.num_rrh, topo.num_ue))
    acc_b = np.zeros(topo.num_ue)
    reps = 400
    for s in range(reps):
        ch = draw_small_scale(topo, child_seed(9, s))
        acc_r += np.mean(np.abs(ch.rrh) ** 2, axis=2)
        acc_b += np.mean(np.abs(ch.mbs) ** 2, axis=1)
    n_eff = reps * topo.config.rrh_antennas
    assert np.allclose(acc_r / reps, topo.alpha_rrh, rtol=6.0 / np.sqrt(n_eff))
    assert np.allclose(acc_b / reps, topo.alpha_mbs, rtol=6.0 / np.sqrt(reps * 10))


def test_draw_small_scale_deterministic():
    topo = generate_topology(ScenarioConfig(num_rrh=4, num_ue=3, rng_seed=1))
    a = draw_small_scale(topo, child_seed(0, 0, 2))
    b = draw_small_scale(topo, child_seed(0, 0, 2))
    assert np.array_equal(a.rrh, b.rrh)
    assert np.array_equal(a.mbs, b.mbs)


def test_estimates_cover_exactly_the_trained_links():
    topo, training, assignment = make_instance()
    channels = draw_small_scale(topo, child_seed(0, 0, 2))
    state = estimate_channels(topo, assignment, training, channels, child_seed(0, 0, 3))
    expected_rrh = {(k, i) for i in topo.rue_set for k in topo.serving_rrhs[i]}
    assert set(state.est_rrh) == expected_rrh
    assert set(state.errvar_rrh) == expected_rrh
    assert set(state.est_mbs) == set(topo.bue_set)
    for (k, i), est in state.est_rrh.items():
        assert est.shape == (topo.config.rrh_antennas,)
    for j, est in state.est_mbs.items():
        assert est.shape == (topo.config.mbs_antennas,)


def test_error_variances_match_per_link_formula():
    topo, training, assignment = make_instance(seed=2)
    channels = draw_small_scale(topo, child_seed(0, 0, 2))
    state = estimate_channels(topo, assignment, training, channels, child_seed(0, 0, 3))
    pilots = assignment.pilots
    for (k, i), errvar in state.errvar_rrh.items():
        co_r = [x for x in topo.rue_set if pilots[x] == pilots[i]]
        co_b = [x for x in topo.bue_set if pilots[x] == pilots[i]]
        expected = delta_oracle(
            topo.alpha_rrh[k, i],
            training.p_rue,
            [topo.alpha_rrh[k, x] for x in co_r],
            [topo.alpha_rrh[k, x] for x in co_b],
            training.p_rue,
            training.p_bue,
            training.noise_power,
        )
        assert errvar == pytest.approx(expected, rel=1e-12)
        assert 0.0 < errvar < topo.alpha_rrh[k, i]
    for j, errvar in state.errvar_mbs.items():
        co_r = [x for x in topo.rue_set if pilots[x] == pilots[j]]
        expected = delta_oracle(
            topo.alpha_mbs[j],
            training.p_bue,
            [topo.alpha_mbs[x] for x in co_r],
            [topo.alpha_mbs[j]],
            training.p_rue,
            training.p_bue,
            training.noise_power,
        )
        assert errvar == pytest.approx(expected, rel=1e-12)


def test_error_variances_sum_to_the_schedulers_objective():
    # the per-link error variances times the antenna counts reproduce the
    # scheduler's sum-MSE objective exactly
    for seed in range(4):
        topo, training, assignment = make_instance(seed=seed)
        channels = draw_small_scale(topo, child_seed(0, 0, 2))
        state = estimate_channels(topo, assignment, training, channels, child_seed(0, 0, 3))
        total = topo.config.rrh_antennas * sum(state.errvar_rrh.values())
        total += topo.config.mbs_antennas * sum(state.errvar_mbs.values())
        expected = sum_mse(topo, assignment, training.p_rue, training.p_bue, training.noise_power)
        assert total == pytest.approx(expected, rel=1e-12)


def test_estimation_is_statistically_consistent():
    """The estimator's second-order claims hold empirically.

    Per estimated link: Var(estimate) = alpha - errvar, Var(truth - estimate)
    = errvar, and the error is uncorrelated with the estimate.
    """
    topo, training, assignment = make_instance(seed=4, num_ue=4, num_rrh=8)
    (k, i) = next(iter(
        (k, i) for i in topo.rue_set for k in topo.serving_rrhs[i]
    ))
    reps = 4000
    est_sq, err_sq, cross = 0.0, 0.0, 0.0 + 0.0j
    for s in range(reps):
        channels = draw_small_scale(topo, child_seed(1, s, 0))
        state = estimate_channels(topo, assignment, training, channels, child_seed(1, s, 1))
        est = state.est_rrh[(k, i)]
        err = channels.rrh[k, i] - est
        est_sq += float(np.mean(np.abs(est) ** 2))
        err_sq += float(np.mean(np.abs(err) ** 2))
        cross += complex(np.mean(est.conj() * err))
    alpha = topo.alpha_rrh[k, i]
    errvar = state.errvar_rrh[(k, i)]
    n_eff = reps * topo.config.rrh_antennas
    tol = 6.0 / np.sqrt(n_eff)
    assert est_sq / reps == pytest.approx(alpha - errvar, rel=tol)
    assert err_sq / reps == pytest.approx(errvar, rel=tol)
    assert abs(cross / reps) < 6.0 * alpha / np.sqrt(n_eff)


def test_estimator_is_linear_in_every_copilot_channel():
    """Shifting any co-pilot user's true channel shifts the estimate by
    coefficient * shift, where the coefficient is sqrt(p_own)*alpha/denom
    times that user's pilot amplitude — noise cancels under a fixed seed."""
    topo, training, assignment = make_instance(seed=0)
    pilots = assignment.pilots
    base = draw_small_scale(topo, child_seed(0, 0, 2))
    state0 = estimate_channels(topo, assignment, training, base, child_seed(0, 0, 3))
    # an estimated link whose pilot is actually reused
    (k, i) = next(
        (k, i)
        for (k, i) in sorted(state0.est_rrh)
        if sum(1 for x in range(topo.num_ue) if pilots[x] == pilots[i]) >= 2
    )
    co_r = [x for x in topo.rue_set if pilots[x] == pilots[i]]
    co_b = [x for x in topo.bue_set if pilots[x] == pilots[i]]
    denom = (
        training.p_rue * sum(topo.alpha_rrh[k, x] for x in co_r)
        + training.p_bue * sum(topo.alpha_rrh[k, x] for x in co_b)
        + training.noise_power
    )
    coeff = np.sqrt(training.p_rue) * topo.alpha_rrh[k, i] / denom
    shift = np.array([0.7 - 0.2j] * topo.config.rrh_antennas)
    for x in co_r + co_b:
        bumped = draw_small_scale(topo, child_seed(0, 0, 2))
        bumped.rrh[k, x] += shift
        state1 = estimate_channels(topo, assignment, training, bumped, child_seed(0, 0, 3))
        amp = np.sqrt(training.p_rue if x in topo.rue_set else training.p_bue)
        got = state1.est_rrh[(k, i)] - state0.est_rrh[(k, i)]
        assert np.allclose(got, coeff * amp * shift, rtol=1e-11, atol=1e-15)


def test_estimation_seed_contract():
    topo, training, assignment = make_instance(seed=0)
    channels = draw_small_scale(topo, child_seed(0, 0, 2))
    a = estimate_channels(topo, assignment, training, channels, child_seed(0, 0, 3))
    b = estimate_channels(topo, assignment, training, channels, child_seed(0, 0, 3))
    c = estimate_channels(topo, assignment, training, channels, child_seed(0, 0, 4))
    for key in a.est_rrh:
        assert np.array_equal(a.est_rrh[key], b.est_rrh[key])
    some_key = next(iter(a.est_rrh))
    assert not np.array_equal(a.est_rrh[some_key], c.est_rrh[some_key])


def test_perfect_channel_state():
    topo = generate_topology(ScenarioConfig(num_rrh=6, num_ue=4, rng_seed=3))
    channels = draw_small_scale(topo, child_seed(0, 0, 2))
    state = perfect_channel_state(topo, channels)
    assert set(state.est_mbs) == set(range(topo.num_ue))
    assert len(state.est_rrh) == topo.num_rrh * topo.num_ue
    for (k, m), est in state.est_rrh.items():
        assert np.array_equal(est, channels.rrh[k, m])
        assert state.errvar_rrh[(k, m)] == 0.0
    for m, est in state.est_mbs.items():
        assert np.array_equal(est, channels.mbs[m])
        assert state.errvar_mbs[m] == 0.0
