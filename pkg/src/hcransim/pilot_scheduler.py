"""Pilot-reuse scheduling for the uplink training phase.

Users served by a common RRH must hold orthogonal pilots; the remaining reuse
freedom is spent minimizing the sum channel-estimation MSE. Three schedulers
are provided:

* ``psa_schedule`` — Dsatur initialization followed by greedy reassignment of
  the most-contaminated users, driven by a log-domain contamination metric;
* ``dsatur_random_schedule`` — Dsatur color classes mapped randomly onto the
  first t pilots (baseline; never uses more than t pilots);
* ``es_schedule`` — exhaustive search over feasible assignments (oracle).

Pilot indices are 1-based. MBS-served users always hold pilots 1..|bue_set|,
one each; RRH-served users may share any pilot, including a BUE's.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import Topology


@dataclass
class ConflictGraph:
    """Adjacency over RRH-served users: an edge when two users share an RRH."""

    rue_ids: list[int]
    adjacency: np.ndarray  # (R, R) 0/1, symmetric, zero diagonal

    def neighbors(self, r: int) -> np.ndarray:
        return np.nonzero(self.adjacency[r])[0]


@dataclass
class ContaminationMetrics:
    """Pairwise contamination levels beta[r, m] (RUE row r, any-UE column m)."""

    rue_ids: list[int]
    beta: np.ndarray  # (R, M) nonnegative

    def row(self, ue_id: int) -> int:
        return self.rue_ids.index(ue_id)


@dataclass
class PilotAssignment:
    tau: int
    pilots: np.ndarray                     # (M,) pilot index per UE, 1..tau
    rues_on_pilot: dict[int, list[int]]    # pilot -> RUE ids (sorted)
    bues_on_pilot: dict[int, list[int]]    # pilot -> BUE ids (at most one)


def make_assignment(topology: Topology, tau: int, pilots) -> PilotAssignment:
    pilots = np.asarray(pilots, dtype=int)
    rue_ids = set(topology.rue_set)
    rues: dict[int, list[int]] = {}
    bues: dict[int, list[int]] = {}
    for m in range(topology.num_ue):
        bucket = rues if m in rue_ids else bues
        bucket.setdefault(int(pilots[m]), []).append(m)
    return PilotAssignment(tau=int(tau), pilots=pilots, rues_on_pilot=rues, bues_on_pilot=bues)


def validate_assignment(topology: Topology, assignment: PilotAssignment) -> None:
    pilots = assignment.pilots
    if pilots.shape != (topology.num_ue,):
        raise ValueError("pilot vector length must equal the UE count")
    if np.any(pilots < 1) or np.any(pilots > assignment.tau):
        raise ValueError("pilot indices must lie in 1..tau")
    if assignment.tau > topology.num_ue:
        raise ValueError("tau cannot exceed the UE count")
    for p, bues in assignment.bues_on_pilot.items():
        if len(bues) > 1:
            raise ValueError(f"pilot {p} is shared by several MBS-served users")
    graph = build_conflict_graph(topology)
    for r, i in enumerate(graph.rue_ids):
        for r2 in graph.neighbors(r):
            i2 = graph.rue_ids[r2]
            if pilots[i] == pilots[i2]:
                raise ValueError(f"users {i} and {i2} share an RRH but also pilot {pilots[i]}")
    # reuse sets must be exactly the preimages of the pilot vector
    rebuilt = make_assignment(topology, assignment.tau, pilots)
    if rebuilt.rues_on_pilot != {p: sorted(v) for p, v in assignment.rues_on_pilot.items()}:
        raise ValueError("rues_on_pilot is not the preimage of the pilot vector")
    if rebuilt.bues_on_pilot != {p: sorted(v) for p, v in assignment.bues_on_pilot.items()}:
        raise ValueError("bues_on_pilot is not the preimage of the pilot vector")


def build_conflict_graph(topology: Topology) -> ConflictGraph:
    rue_ids = list(topology.rue_set)
    n = len(rue_ids)
    adjacency = np.zeros((n, n), dtype=np.int8)
    serving = [set(topology.serving_rrhs[i]) for i in rue_ids]
    for r in range(n):
        for r2 in range(r + 1, n):
            if serving[r] & serving[r2]:
                adjacency[r, r2] = adjacency[r2, r] = 1
    return ConflictGraph(rue_ids=rue_ids, adjacency=adjacency)


def dsatur_color(graph: ConflictGraph) -> tuple[int, np.ndarray]:
    """Greedy saturation coloring; deterministic.

    Next vertex: highest saturation (distinct neighbor colors), then highest
    degree, then lowest index; it receives the smallest feasible color.
    Returns (color count t, per-vertex colors 0..t-1).
    """
    a = graph.adjacency
    n = a.shape[0]
    colors = np.full(n, -1, dtype=int)
    if n == 0:
        return 0, colors
    degree = a.sum(axis=1)
    for _ in range(n):
        best_v, best_key = -1, None
        for v in range(n):
            if colors[v] >= 0:
                continue
            neigh = np.nonzero(a[v])[0]
            sat = len({colors[u] for u in neigh if colors[u] >= 0})
            key = (sat, degree[v], -v)
            if best_key is None or key > best_key:
                best_v, best_key = v, key
        used = {colors[u] for u in np.nonzero(a[best_v])[0] if colors[u] >= 0}
        c = 0
        while c in used:
            c += 1
        colors[best_v] = c
    return int(colors.max()) + 1, colors


def compute_beta(topology: Topology, graph: ConflictGraph | None = None) -> ContaminationMetrics:
    """Log-domain contamination level between every RUE and every other UE.

    For an unconnected RUE pair the two mutual leakage ratios are summed inside
    the log; connected pairs (orthogonal by constraint) and the self entry are
    zero. For an RUE/BUE pair the MBS-side leakage ratio replaces the second
    term.
    """
    if graph is None:
        graph = build_conflict_graph(topology)
    rue_ids = graph.rue_ids
    alpha_r, alpha_b = topology.alpha_rrh, topology.alpha_mbs
    own = {i: alpha_r[topology.serving_rrhs[i], i].sum() for i in rue_ids}
    beta = np.zeros((len(rue_ids), topology.num_ue))
    for r, i in enumerate(rue_ids):
        cluster = topology.serving_rrhs[i]
        for r2, i2 in enumerate(rue_ids):
            if i2 == i or graph.adjacency[r, r2]:
                continue
            leak_to_i = alpha_r[cluster, i2].sum() / own[i]
            leak_from_i = alpha_r[topology.serving_rrhs[i2], i].sum() / own[i2]
            beta[r, i2] = math.log(1.0 + leak_to_i + leak_from_i)
        for j in topology.bue_set:
            leak_to_i = alpha_r[cluster, j].sum() / own[i]
            leak_to_j = alpha_b[i] / alpha_b[j]
            beta[r, j] = math.log(1.0 + leak_to_i + leak_to_j)
    return ContaminationMetrics(rue_ids=rue_ids, beta=beta)


def _group_by_pilot(topology: Topology, pilots: np.ndarray):
    groups: dict[int, tuple[list[int], list[int]]] = {}
    rue_ids = set(topology.rue_set)
    for m in range(topology.num_ue):
        rues, bues = groups.setdefault(int(pilots[m]), ([], []))
        (rues if m in rue_ids else bues).append(m)
    return groups


def _sum_mse_value(topology, pilots, p_rue, p_bue, noise_power, n_ant, b_ant) -> float:
    alpha_r, alpha_b = topology.alpha_rrh, topology.alpha_mbs
    total = 0.0
    for _, (rues, bues) in _group_by_pilot(topology, pilots).items():
        rue_load = p_rue * alpha_r[:, rues].sum(axis=1) if rues else np.zeros(topology.num_rrh)
        bue_load = p_bue * alpha_r[:, bues].sum(axis=1) if bues else np.zeros(topology.num_rrh)
        for i in rues:
            for k in topology.serving_rrhs[i]:
                denom = rue_load[k] + bue_load[k] + noise_power
                total += n_ant * alpha_r[k, i] * (denom - p_rue * alpha_r[k, i]) / denom
        mbs_rue_load = p_rue * alpha_b[rues].sum() if rues else 0.0
        for j in bues:
            denom = mbs_rue_load + p_bue * alpha_b[j] + noise_power
            total += b_ant * alpha_b[j] * (mbs_rue_load + noise_power) / denom
    return total


def sum_mse(
    topology: Topology,
    assignment: PilotAssignment,
    p_rue: float,
    p_bue: float,
    noise_power: float,
    rrh_antennas: int | None = None,
    mbs_antennas: int | None = None,
) -> float:
    """Sum over all estimated links of the per-antenna error variance times
    the antenna count. Raises on an assignment violating the reuse constraints.
    """
    validate_assignment(topology, assignment)
    n_ant = topology.config.rrh_antennas if rrh_antennas is None else rrh_antennas
    b_ant = topology.config.mbs_antennas if mbs_antennas is None else mbs_antennas
    return _sum_mse_value(topology, assignment.pilots, p_rue, p_bue, noise_power, n_ant, b_ant)


def _clamped_tau(topology: Topology, tau: int, t: int) -> int:
    if tau < 1:
        raise ValueError("tau must be a positive integer")
    if tau > topology.num_ue:
        raise ValueError("tau cannot exceed the UE count")
    return max(tau, t, len(topology.bue_set))


def _base_pilots(topology: Topology, colors: np.ndarray, perm: np.ndarray, rue_ids) -> np.ndarray:
    """BUEs on pilots 1..|bue_set| in id order; RUE color classes on perm."""
    pilots = np.zeros(topology.num_ue, dtype=int)
    for idx, j in enumerate(topology.bue_set):
        pilots[j] = idx + 1
    for r, i in enumerate(rue_ids):
        pilots[i] = int(perm[colors[r]]) + 1
    return pilots


def dsatur_random_schedule(
    topology: Topology, tau: int, rng: np.random.Generator, graph: ConflictGraph | None = None
) -> PilotAssignment:
    """Baseline: color classes get a random permutation of pilots 1..t.

    The color count t never grows with tau, which is why this baseline's
    sum-MSE stays flat when more pilots are available.
    """
    if graph is None:
        graph = build_conflict_graph(topology)
    t, colors = dsatur_color(graph)
    tau_eff = _clamped_tau(topology, tau, t)
    perm = rng.permutation(t) if t else np.zeros(0, dtype=int)
    pilots = _base_pilots(topology, colors, perm, graph.rue_ids)
    return make_assignment(topology, tau_eff, pilots)


def psa_schedule(
    topology: Topology,
    metrics: ContaminationMetrics,
    graph: ConflictGraph,
    tau: int,
    rng: np.random.Generator | None = None,
) -> PilotAssignment:
    """Greedy contamination-driven refinement of a Dsatur initialization.

    Initialization: BUE j holds pilot j; Dsatur classes are mapped onto pilots
    1..t (randomly permuted when ``rng`` is given, identity otherwise). Then
    every RUE is revisited exactly once, worst-contaminated first, and moved to
    the pilot (excluding those held by its conflict-graph neighbors) with the
    least contamination. Ties: lowest UE id / lowest pilot index.
    """
    rue_ids = graph.rue_ids
    t, colors = dsatur_color(graph)
    tau_eff = _clamped_tau(topology, tau, t)
    perm = rng.permutation(t) if (rng is not None and t) else np.arange(t)
    pilots = _base_pilots(topology, colors, perm, rue_ids)

    beta = metrics.beta
    bue_on_pilot = {idx + 1: j for idx, j in enumerate(topology.bue_set)}
    on_pilot: dict[int, set[int]] = {p: set() for p in range(1, tau_eff + 1)}
    for r, i in enumerate(rue_ids):
        on_pilot[pilots[i]].add(r)

    def contamination(r: int, pilot: int) -> float:
        val = sum(beta[r, rue_ids[r2]] for r2 in on_pilot[pilot] if r2 != r)
        if pilot in bue_on_pilot:
            val += beta[r, bue_on_pilot[pilot]]
        return val

    pending = set(range(len(rue_ids)))
    for _ in range(len(rue_ids)):
        worst_r, worst_val = -1, -np.inf
        for r in sorted(pending):
            val = contamination(r, pilots[rue_ids[r]])
            if val > worst_val:
                worst_r, worst_val = r, val
        taken = {pilots[rue_ids[r2]] for r2 in graph.neighbors(worst_r)}
        best_p, best_val = 0, np.inf
        for p in range(1, tau_eff + 1):
            if p in taken:
                continue
            val = contamination(worst_r, p)
            if val < best_val:
                best_p, best_val = p, val
        i = rue_ids[worst_r]
        on_pilot[pilots[i]].discard(worst_r)
        on_pilot[best_p].add(worst_r)
        pilots[i] = best_p
        pending.remove(worst_r)

    return make_assignment(topology, tau_eff, pilots)


def es_schedule(
    topology: Topology,
    tau: int,
    p_rue: float,
    p_bue: float,
    noise_power: float,
    limit: int = 10_000_000,
) -> PilotAssignment:
    """Exhaustive minimizer of the sum MSE over feasible assignments.

    BUE pilots are fixed to 1..|bue_set|; RUE pilots are enumerated depth-first
    in UE-id order with conflict pruning, so the first strict minimum found is
    the lexicographically smallest minimizer. Guarded by tau_eff**M <= limit.
    """
    graph = build_conflict_graph(topology)
    t, _ = dsatur_color(graph)
    tau_eff = _clamped_tau(topology, tau, t)
    if tau_eff ** topology.num_ue > limit:
        raise ValueError(
            f"search space {tau_eff}^{topology.num_ue} exceeds the enumeration guard {limit}"
        )
    n_ant = topology.config.rrh_antennas
    b_ant = topology.config.mbs_antennas

    rue_ids = graph.rue_ids
    pilots = np.zeros(topology.num_ue, dtype=int)
    for idx, j in enumerate(topology.bue_set):
        pilots[j] = idx + 1
    best = {"value": np.inf, "pilots": None}

    def dfs(pos: int) -> None:
        if pos == len(rue_ids):
            value = _sum_mse_value(topology, pilots, p_rue, p_bue, noise_power, n_ant, b_ant)
            if value < best["value"]:
                best["value"] = value
                best["pilots"] = pilots.copy()
            return
        i = rue_ids[pos]
        neighbor_pilots = {
            pilots[rue_ids[r2]] for r2 in graph.neighbors(pos) if r2 < pos
        }
        for p in range(1, tau_eff + 1):
            if p in neighbor_pilots:
                continue
            pilots[i] = p
            dfs(pos + 1)
        pilots[i] = 0

    dfs(0)
    return make_assignment(topology, tau_eff, best["pilots"] if best["pilots"] is not None else pilots)
