"""Shared instance builders for the test suite."""

from __future__ import annotations

import dataclasses

import numpy as np

from hcransim import (
    QcqpProblem,
    ScenarioConfig,
    Topology,
    TrainingConfig,
    build_conflict_graph,
    build_covariances,
    compute_beta,
    draw_small_scale,
    estimate_channels,
    generate_topology,
    psa_schedule,
)
from hcransim.util import child_rng, child_seed, crandn, seed_to_int


def hand_topology(serving_rrhs, num_rrh, alpha_rrh, alpha_mbs, n_ant=2, b_ant=3):
    """A topology with hand-picked cluster maps and gains.

    Positions are synthesized to satisfy the geometric invariants: every
    served UE sits at the centroid of its serving RRHs (with the coverage
    radius widened to reach them all), MBS-only users sit away from all RRHs.
    """
    num_ue = len(serving_rrhs)
    rrh_positions = np.array([[250.0 + 50.0 * k, 0.0] for k in range(num_rrh)], dtype=float)
    ue_positions = np.zeros((num_ue, 2))
    coverage = 10.0
    for i, cluster in enumerate(serving_rrhs):
        if cluster:
            ue_positions[i] = rrh_positions[cluster].mean(axis=0) + (0.0, 1.0 + 0.1 * i)
            reach = max(np.linalg.norm(rrh_positions[k] - ue_positions[i]) for k in cluster)
            coverage = max(coverage, reach + 1.0)
        else:
            ue_positions[i] = (-200.0, 37.0 * i)
    cfg = ScenarioConfig(
        num_rrh=num_rrh,
        num_ue=num_ue,
        rrh_antennas=n_ant,
        mbs_antennas=b_ant,
        max_ue_per_rrh=num_ue,
        coverage_radius=coverage,
    )
    served = [
        sorted(i for i in range(num_ue) if k in serving_rrhs[i]) for k in range(num_rrh)
    ]
    topo = Topology(
        config=cfg,
        mbs_position=np.zeros(2),
        rrh_positions=rrh_positions,
        ue_positions=ue_positions,
        serving_rrhs=[sorted(c) for c in serving_rrhs],
        served_rues=served,
        rue_set=[i for i in range(num_ue) if serving_rrhs[i]],
        bue_set=[i for i in range(num_ue) if not serving_rrhs[i]],
        alpha_rrh=np.asarray(alpha_rrh, dtype=float),
        alpha_mbs=np.asarray(alpha_mbs, dtype=float),
    )
    topo.validate()
    return topo


def small_scenario(seed, num_rrh=20, num_ue=8, coverage_radius=120.0, **kwargs):
    return ScenarioConfig(
        num_rrh=num_rrh,
        num_ue=num_ue,
        coverage_radius=coverage_radius,
        rng_seed=seed,
        **kwargs,
    )


def pipeline_instance(r=0, master_seed=0, tau=4, scenario=None, training=None):
    """One scheduled + estimated instance: the common test setup.

    Returns (topology, assignment, state, links, effective training config).
    """
    scenario = scenario or small_scenario(seed_to_int(child_seed(master_seed, r, 0)))
    if scenario.rng_seed == 0:
        scenario = dataclasses.replace(
            scenario, rng_seed=seed_to_int(child_seed(master_seed, r, 0))
        )
    training = training or TrainingConfig(tau=tau)
    topology = generate_topology(scenario)
    graph = build_conflict_graph(topology)
    metrics = compute_beta(topology, graph)
    assignment = psa_schedule(
        topology, metrics, graph, training.tau, rng=child_rng(master_seed, r, 1)
    )
    channels = draw_small_scale(topology, child_seed(master_seed, r, 2))
    state = estimate_channels(
        topology, assignment, training, channels, child_seed(master_seed, r, 3)
    )
    links = build_covariances(topology, state)
    training_eff = dataclasses.replace(training, tau=assignment.tau)
    return topology, assignment, state, links, training_eff


def make_synthetic_qcqp(rng, conditioning=60.0, zero_cap_chance=0.0):
    """Random coupled QCQP with the beamformer step's block structure.

    Returns (problem, quads, lins, groups, caps): a QcqpProblem plus the same
    instance in the projected-gradient oracle's vocabulary. Quadratic terms
    are A^H A + eps*I with eps chosen so the condition number stays near
    ``conditioning``; budgets are random fractions of the unconstrained
    solution's power so that some constraints bind and others stay slack.
    """
    num_rrh = int(rng.integers(2, 5))
    n = int(rng.integers(2, 4))
    num_rue = int(rng.integers(2, 5))
    num_bue = int(rng.integers(0, 3))
    b_ant = int(rng.integers(2, 5))

    clusters = {}
    for i in range(num_rue):
        size = int(rng.integers(1, min(2, num_rrh) + 1))
        clusters[i] = sorted(rng.choice(num_rrh, size=size, replace=False).tolist())

    def random_quad(dim):
        a = crandn(rng, dim + 2, dim)
        q = a.conj().T @ a
        top = float(np.linalg.eigvalsh(q)[-1])
        return q + (top / conditioning) * np.eye(dim)

    quads, lins = {}, {}
    for i in range(num_rue):
        d = n * len(clusters[i])
        quads[i] = random_quad(d)
        lins[i] = crandn(rng, d)
    bue_ids = list(range(num_rue, num_rue + num_bue))
    for j in bue_ids:
        quads[j] = random_quad(b_ant)
        lins[j] = crandn(rng, b_ant)

    unconstrained = {m: np.linalg.solve(quads[m], lins[m]) for m in quads}

    groups, caps = {}, {}
    rrh_caps = np.ones(num_rrh)
    for k in range(num_rrh):
        members = []
        power = 0.0
        for i in range(num_rue):
            if k in clusters[i]:
                pos = clusters[i].index(k)
                idx = np.arange(pos * n, (pos + 1) * n)
                members.append((i, idx))
                power += float(np.sum(np.abs(unconstrained[i][idx]) ** 2))
        if members:
            cap = power * float(rng.uniform(0.25, 1.5))
            if rng.uniform() < zero_cap_chance:
                cap = 0.0
            rrh_caps[k] = cap
            groups[f"rrh{k}"] = members
            caps[f"rrh{k}"] = cap
    if bue_ids:
        power = sum(float(np.sum(np.abs(unconstrained[j]) ** 2)) for j in bue_ids)
        mbs_budget = power * float(rng.uniform(0.25, 1.5))
        groups["mbs"] = [(j, np.arange(b_ant)) for j in bue_ids]
        caps["mbs"] = mbs_budget
    else:
        mbs_budget = 1.0

    problem = QcqpProblem(
        quad_rue={i: quads[i] for i in range(num_rue)},
        lin_rue={i: lins[i] for i in range(num_rue)},
        quad_bue={j: quads[j] for j in bue_ids},
        lin_bue={j: lins[j] for j in bue_ids},
        block_rrhs=clusters,
        block_size=n,
        rrh_budget=rrh_caps,
        mbs_budget=float(mbs_budget),
    )
    return problem, quads, lins, groups, caps
