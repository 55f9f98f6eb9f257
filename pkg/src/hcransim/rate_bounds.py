"""Aggregated link statistics, spectral-efficiency lower bounds, and
Monte-Carlo achievable rates.

Each RRH-served user i sees an aggregated channel from its serving cluster
(the per-RRH vectors stacked in sorted RRH order). Conditioned on the training
output, every link is either *known* (estimate + zero-mean error of per-antenna
variance errvar) or *unknown* (zero-mean with per-antenna variance alpha). The
lower bound replaces each interference term by its expectation under that
model, with cross-link expectations taken block-diagonally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelState
from .scenario import Topology


@dataclass
class AggregatedLinks:
    """Per-UE aggregated estimates and second-order interference statistics."""

    rue_ids: list[int]
    bue_ids: list[int]
    block_rrhs: dict[int, list[int]]                    # RUE -> sorted serving RRHs
    block_size: int                                     # antennas per RRH block
    mbs_antennas: int
    g_hat: dict[int, np.ndarray]                        # RUE -> stacked estimate
    own_err_diag: dict[int, np.ndarray]                 # RUE -> per-coordinate error variance
    cross_rue_cov: dict[tuple[int, int], np.ndarray]    # (src RUE, dst RUE) -> cov of cluster(src)->dst
    mbs_to_rue_cov: dict[int, np.ndarray]               # RUE -> cov of the MBS->RUE link (B, B)
    bue_est: dict[int, np.ndarray]                      # BUE -> MBS-link estimate (B,)
    bue_err: dict[int, float]                           # BUE -> error variance
    cross_bue_cov: dict[tuple[int, int], np.ndarray]    # (RUE, BUE) -> cov of cluster(RUE)->BUE
    bue_cov: dict[int, np.ndarray]                      # BUE -> full second moment of its MBS link

    def dim(self, rue_id: int) -> int:
        return self.block_size * len(self.block_rrhs[rue_id])


def build_covariances(topology: Topology, state: ChannelState) -> AggregatedLinks:
    n_ant = topology.config.rrh_antennas
    b_ant = topology.config.mbs_antennas
    rue_ids = list(topology.rue_set)
    bue_ids = list(topology.bue_set)
    block_rrhs = {i: list(topology.serving_rrhs[i]) for i in rue_ids}
    alpha_r, alpha_b = topology.alpha_rrh, topology.alpha_mbs

    def rrh_block_cov(k: int, m: int) -> np.ndarray:
        if (k, m) in state.est_rrh:
            est = state.est_rrh[(k, m)]
            return np.outer(est, est.conj()) + state.errvar_rrh[(k, m)] * np.eye(n_ant)
        return alpha_r[k, m] * np.eye(n_ant, dtype=complex)

    def stacked_cov(src: int, dst: int) -> np.ndarray:
        blocks = [rrh_block_cov(k, dst) for k in block_rrhs[src]]
        out = np.zeros((n_ant * len(blocks),) * 2, dtype=complex)
        for b, blk in enumerate(blocks):
            out[b * n_ant:(b + 1) * n_ant, b * n_ant:(b + 1) * n_ant] = blk
        return out

    g_hat = {
        i: np.concatenate([state.est_rrh[(k, i)] for k in block_rrhs[i]]) for i in rue_ids
    }
    own_err_diag = {
        i: np.repeat([state.errvar_rrh[(k, i)] for k in block_rrhs[i]], n_ant) for i in rue_ids
    }
    cross_rue_cov = {
        (src, dst): stacked_cov(src, dst) for src in rue_ids for dst in rue_ids if src != dst
    }
    cross_bue_cov = {(i, j): stacked_cov(i, j) for i in rue_ids for j in bue_ids}

    mbs_to_rue_cov = {}
    for i in rue_ids:
        if i in state.est_mbs:
            est = state.est_mbs[i]
            mbs_to_rue_cov[i] = np.outer(est, est.conj()) + state.errvar_mbs[i] * np.eye(b_ant)
        else:
            mbs_to_rue_cov[i] = alpha_b[i] * np.eye(b_ant, dtype=complex)

    bue_est = {j: state.est_mbs[j] for j in bue_ids}
    bue_err = {j: state.errvar_mbs[j] for j in bue_ids}
    bue_cov = {
        j: np.outer(bue_est[j], bue_est[j].conj()) + bue_err[j] * np.eye(b_ant) for j in bue_ids
    }

    return AggregatedLinks(
        rue_ids=rue_ids,
        bue_ids=bue_ids,
        block_rrhs=block_rrhs,
        block_size=n_ant,
        mbs_antennas=b_ant,
        g_hat=g_hat,
        own_err_diag=own_err_diag,
        cross_rue_cov=cross_rue_cov,
        mbs_to_rue_cov=mbs_to_rue_cov,
        bue_est=bue_est,
        bue_err=bue_err,
        cross_bue_cov=cross_bue_cov,
        bue_cov=bue_cov,
    )


def _quad(matrix: np.ndarray, vec: np.ndarray) -> float:
    return float(np.real(np.vdot(vec, matrix @ vec)))


def interference_plus_noise(links: AggregatedLinks, beams, noise_power: float):
    """Expected interference-plus-noise power per UE under the link model.

    Returns (per-RUE dict, per-BUE dict). Shared by the lower bound, the
    equalizer update, and the QCQP assembly identity.
    """
    j_rue: dict[int, float] = {}
    for i in links.rue_ids:
        total = float(np.sum(links.own_err_diag[i] * np.abs(beams.rue[i]) ** 2))
        for src in links.rue_ids:
            if src != i:
                total += _quad(links.cross_rue_cov[(src, i)], beams.rue[src])
        for j in links.bue_ids:
            total += _quad(links.mbs_to_rue_cov[i], beams.bue[j])
        j_rue[i] = total + noise_power
    j_bue: dict[int, float] = {}
    for j in links.bue_ids:
        total = links.bue_err[j] * float(np.sum(np.abs(beams.bue[j]) ** 2))
        for i in links.rue_ids:
            total += _quad(links.cross_bue_cov[(i, j)], beams.rue[i])
        for other in links.bue_ids:
            if other != j:
                total += _quad(links.bue_cov[j], beams.bue[other])
        j_bue[j] = total + noise_power
    return j_rue, j_bue


def lower_bound_rates(links: AggregatedLinks, beams, noise_power: float, prelog: float):
    """Per-UE spectral-efficiency lower bounds (bits/s/Hz)."""
    j_rue, j_bue = interference_plus_noise(links, beams, noise_power)
    rates: dict[int, float] = {}
    for i in links.rue_ids:
        signal = abs(np.vdot(links.g_hat[i], beams.rue[i])) ** 2
        rates[i] = prelog * math.log2(1.0 + signal / j_rue[i])
    for j in links.bue_ids:
        signal = abs(np.vdot(links.bue_est[j], beams.bue[j])) ** 2
        rates[j] = prelog * math.log2(1.0 + signal / j_bue[j])
    return rates


def monte_carlo_rates(
    topology: Topology,
    state: ChannelState,
    beams,
    noise_power: float,
    prelog: float,
    trials: int = 2000,
    seed=0,
):
    """Achievable-rate estimates by redrawing the unknowns.

    Per trial, every known link is estimate + CN(0, errvar*I) and every unknown
    link is CN(0, alpha*I); estimates stay fixed. Each UE's effective SINR uses
    a consistent draw of its own channels across all interference terms.
    Returns (rates, stderr) keyed by UE id, both scaled by the prelog.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    n_ant = topology.config.rrh_antennas
    b_ant = topology.config.mbs_antennas
    alpha_r, alpha_b = topology.alpha_rrh, topology.alpha_mbs
    rue_ids = list(topology.rue_set)
    bue_ids = list(topology.bue_set)
    active_rrhs = sorted({k for i in rue_ids for k in topology.serving_rrhs[i]})

    def ue_links(m: int):
        """Per-trial channels of UE m from every active RRH and the MBS.

        Returns (rrh_links: dict k -> (trials, N), rrh_errors: dict k -> error
        part for known links, mbs_link (trials, B), mbs_error).
        """
        rrh_links, rrh_errors = {}, {}
        for k in active_rrhs:
            draw = rng.standard_normal((trials, n_ant)) + 1j * rng.standard_normal((trials, n_ant))
            draw /= np.sqrt(2.0)
            if (k, m) in state.est_rrh:
                err = np.sqrt(state.errvar_rrh[(k, m)]) * draw
                rrh_errors[k] = err
                rrh_links[k] = state.est_rrh[(k, m)][None, :] + err
            else:
                rrh_links[k] = np.sqrt(alpha_r[k, m]) * draw
        draw_b = rng.standard_normal((trials, b_ant)) + 1j * rng.standard_normal((trials, b_ant))
        draw_b /= np.sqrt(2.0)
        if m in state.est_mbs:
            mbs_error = np.sqrt(state.errvar_mbs[m]) * draw_b
            mbs_link = state.est_mbs[m][None, :] + mbs_error
        else:
            mbs_error = None
            mbs_link = np.sqrt(alpha_b[m]) * draw_b
        return rrh_links, rrh_errors, mbs_link, mbs_error

    def stack(parts: dict, cluster) -> np.ndarray:
        return np.concatenate([parts[k] for k in cluster], axis=1)

    rates: dict[int, float] = {}
    stderr: dict[int, float] = {}

    for i in rue_ids:
        rrh_links, rrh_errors, mbs_link, _ = ue_links(i)
        cluster = topology.serving_rrhs[i]
        signal = abs(np.vdot(_stacked_estimate(state, cluster, i), beams.rue[i])) ** 2
        denom = np.full(trials, noise_power)
        own_err = stack({k: rrh_errors.get(k, rrh_links[k]) for k in cluster}, cluster)
        denom += np.abs(own_err.conj() @ beams.rue[i]) ** 2
        for src in rue_ids:
            if src == i:
                continue
            g = stack(rrh_links, topology.serving_rrhs[src])
            denom += np.abs(g.conj() @ beams.rue[src]) ** 2
        for j in bue_ids:
            denom += np.abs(mbs_link.conj() @ beams.bue[j]) ** 2
        per_trial = np.log2(1.0 + signal / denom)
        rates[i] = prelog * float(per_trial.mean())
        stderr[i] = prelog * _stderr(per_trial)

    for j in bue_ids:
        rrh_links, _, mbs_link, mbs_error = ue_links(j)
        signal = abs(np.vdot(state.est_mbs[j], beams.bue[j])) ** 2
        denom = np.full(trials, noise_power)
        denom += np.abs(mbs_error.conj() @ beams.bue[j]) ** 2
        for i in rue_ids:
            g = stack(rrh_links, topology.serving_rrhs[i])
            denom += np.abs(g.conj() @ beams.rue[i]) ** 2
        for other in bue_ids:
            if other != j:
                denom += np.abs(mbs_link.conj() @ beams.bue[other]) ** 2
        per_trial = np.log2(1.0 + signal / denom)
        rates[j] = prelog * float(per_trial.mean())
        stderr[j] = prelog * _stderr(per_trial)

    return rates, stderr


def _stacked_estimate(state: ChannelState, cluster, i: int) -> np.ndarray:
    return np.concatenate([state.est_rrh[(k, i)] for k in cluster])


def _stderr(samples: np.ndarray) -> float:
    if samples.size < 2:
        return 0.0
    return float(samples.std(ddof=1) / np.sqrt(samples.size))


@dataclass
class RateReport:
    lb_rue: dict[int, float]
    lb_bue: dict[int, float]
    mc_rue: dict[int, float]
    mc_bue: dict[int, float]
    mc_stderr_rue: dict[int, float]
    mc_stderr_bue: dict[int, float]
    prelog: float

    def rows(self):
        """CSV rows (ue_id, type, lower_bound, mc_rate, mc_stderr)."""
        out = []
        for i in sorted(self.lb_rue):
            out.append((i, "rue", self.lb_rue[i], self.mc_rue[i], self.mc_stderr_rue[i]))
        for j in sorted(self.lb_bue):
            out.append((j, "bue", self.lb_bue[j], self.mc_bue[j], self.mc_stderr_bue[j]))
        return out


def make_rate_report(topology, links, beams, noise_power, prelog, state, trials, seed) -> RateReport:
    lb = lower_bound_rates(links, beams, noise_power, prelog)
    mc, se = monte_carlo_rates(topology, state, beams, noise_power, prelog, trials, seed)
    return RateReport(
        lb_rue={i: lb[i] for i in topology.rue_set},
        lb_bue={j: lb[j] for j in topology.bue_set},
        mc_rue={i: mc[i] for i in topology.rue_set},
        mc_bue={j: mc[j] for j in topology.bue_set},
        mc_stderr_rue={i: se[i] for i in topology.rue_set},
        mc_stderr_bue={j: se[j] for j in topology.bue_set},
        prelog=prelog,
    )
