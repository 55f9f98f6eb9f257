"""Small-scale fading, uplink training, and MMSE channel estimation.

Training is simulated through the pilot-projected sufficient statistic: with
orthonormal pilots, projecting the received block onto pilot p leaves the
superposition of the co-pilot users' channels plus one CN(0, noise*I) vector,
so the full training matrix is never materialized. Estimates carry a
per-antenna error variance; the true channel equals estimate + error with the
error independent of the estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pilot_scheduler import PilotAssignment, validate_assignment
from .scenario import Topology
from .util import crandn, dbm_to_watt


@dataclass
class TrainingConfig:
    p_rue: float = dbm_to_watt(17.0)        # uplink pilot power of RRH-served users, W
    p_bue: float = dbm_to_watt(20.0)        # uplink pilot power of MBS-served users, W
    noise_power: float = dbm_to_watt(-100.0)  # receiver noise, W
    tau: int = 5                             # pilot length, symbols
    coherence: int = 50                      # coherence block length T, symbols

    def __post_init__(self) -> None:
        if min(self.p_rue, self.p_bue, self.noise_power) <= 0:
            raise ValueError("powers must be positive")
        if not 0 < self.tau < self.coherence:
            raise ValueError("need 0 < tau < coherence")


def prelog_factor(tau: int, coherence: int) -> float:
    """Fraction of the coherence block left for data: (T - tau)/T."""
    if not 0 < tau < coherence:
        raise ValueError("need 0 < tau < coherence")
    return (coherence - tau) / coherence


@dataclass
class TrueChannels:
    rrh: np.ndarray  # (K, M, N) complex, RRH k -> UE m
    mbs: np.ndarray  # (M, B) complex, MBS -> UE m


@dataclass
class ChannelState:
    """True channels plus whatever estimates the training produced.

    A link is *known* iff it has an entry in est_rrh/est_mbs; downstream code
    treats known links as estimate + CN(0, errvar*I) error and unknown links
    as CN(0, alpha*I).
    """

    true: TrueChannels
    est_rrh: dict[tuple[int, int], np.ndarray]  # (rrh k, ue m) -> (N,)
    est_mbs: dict[int, np.ndarray]              # ue m -> (B,)
    errvar_rrh: dict[tuple[int, int], float]
    errvar_mbs: dict[int, float]


def draw_small_scale(topology: Topology, seed) -> TrueChannels:
    """Independent CN(0, alpha*I) fading on every link."""
    rng = np.random.default_rng(seed)
    n_ant = topology.config.rrh_antennas
    b_ant = topology.config.mbs_antennas
    rrh = crandn(rng, topology.num_rrh, topology.num_ue, n_ant)
    rrh *= np.sqrt(topology.alpha_rrh)[:, :, None]
    mbs = crandn(rng, topology.num_ue, b_ant)
    mbs *= np.sqrt(topology.alpha_mbs)[:, None]
    return TrueChannels(rrh=rrh, mbs=mbs)


def estimate_channels(
    topology: Topology,
    assignment: PilotAssignment,
    training: TrainingConfig,
    channels: TrueChannels,
    seed,
) -> ChannelState:
    """MMSE estimation from one simulated training phase.

    Draw order (reproducibility contract): RRH projected noise (K, tau, N),
    then MBS projected noise (tau, B). RRH k estimates the users it serves;
    the MBS estimates its own users.
    """
    validate_assignment(topology, assignment)
    rng = np.random.default_rng(seed)
    p_r, p_b, n0 = training.p_rue, training.p_bue, training.noise_power
    tau = assignment.tau
    alpha_r, alpha_b = topology.alpha_rrh, topology.alpha_mbs
    n_ant = topology.config.rrh_antennas
    b_ant = topology.config.mbs_antennas

    noise_rrh = np.sqrt(n0) * crandn(rng, topology.num_rrh, tau, n_ant)
    noise_mbs = np.sqrt(n0) * crandn(rng, tau, b_ant)

    est_rrh: dict[tuple[int, int], np.ndarray] = {}
    est_mbs: dict[int, np.ndarray] = {}
    errvar_rrh: dict[tuple[int, int], float] = {}
    errvar_mbs: dict[int, float] = {}

    for p in range(1, tau + 1):
        rues = assignment.rues_on_pilot.get(p, [])
        bues = assignment.bues_on_pilot.get(p, [])
        if not rues and not bues:
            continue
        for i in rues:
            for k in topology.serving_rrhs[i]:
                observed = (
                    np.sqrt(p_r) * channels.rrh[k, rues].sum(axis=0)
                    + (np.sqrt(p_b) * channels.rrh[k, bues].sum(axis=0) if bues else 0.0)
                    + noise_rrh[k, p - 1]
                )
                denom = p_r * alpha_r[k, rues].sum() + p_b * alpha_r[k, bues].sum() + n0
                est_rrh[(k, i)] = np.sqrt(p_r) * alpha_r[k, i] / denom * observed
                errvar_rrh[(k, i)] = alpha_r[k, i] * (denom - p_r * alpha_r[k, i]) / denom
        if bues:
            observed_b = (
                (np.sqrt(p_r) * channels.mbs[rues].sum(axis=0) if rues else 0.0)
                + np.sqrt(p_b) * channels.mbs[bues].sum(axis=0)
                + noise_mbs[p - 1]
            )
            denom_b = p_r * alpha_b[rues].sum() + p_b * alpha_b[bues].sum() + n0
            for j in bues:
                est_mbs[j] = np.sqrt(p_b) * alpha_b[j] / denom_b * observed_b
                errvar_mbs[j] = alpha_b[j] * (denom_b - p_b * alpha_b[j]) / denom_b

    return ChannelState(
        true=channels,
        est_rrh=est_rrh,
        est_mbs=est_mbs,
        errvar_rrh=errvar_rrh,
        errvar_mbs=errvar_mbs,
    )


def perfect_channel_state(topology: Topology, channels: TrueChannels) -> ChannelState:
    """Reference variant: every link 'estimated' exactly (zero error variance).

    Feeding this into the rate/beamforming pipeline yields the perfect-CSI
    upper-reference curves.
    """
    est_rrh = {
        (k, m): channels.rrh[k, m].copy()
        for k in range(topology.num_rrh)
        for m in range(topology.num_ue)
    }
    est_mbs = {m: channels.mbs[m].copy() for m in range(topology.num_ue)}
    return ChannelState(
        true=channels,
        est_rrh=est_rrh,
        est_mbs=est_mbs,
        errvar_rrh={key: 0.0 for key in est_rrh},
        errvar_mbs={m: 0.0 for m in est_mbs},
    )
