"""Robust downlink beamformer design.

The sum of per-UE lower-bound rates is maximized by block coordinate descent
on a weighted-MSE surrogate: with receive equalizers f and auxiliary variables
u (weights exp(u - 1)), the beamformer step is a convex QCQP

    min over w   sum_m  w_m^H F_m w_m - 2 Re(b_m^H w_m)

subject to per-RRH and MBS sum-power constraints. RRH constraints couple the
RUE beams through shared blocks and are handled by dual decomposition (exact
coordinate ascent on the multipliers plus a damped Newton polish); the MBS
constraint couples the BUE beams through a single scalar multiplier found by
bisection. The f and u updates are closed-form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import TrainingConfig, prelog_factor
from .rate_bounds import AggregatedLinks, interference_plus_noise
from .scenario import Topology


class ConvergenceError(RuntimeError):
    """Raised when an iterative solve exhausts its iteration budget."""


@dataclass
class PowerBudget:
    """Transmit power caps in watts: one per RRH (scalar = shared) and one MBS."""

    rrh: float | np.ndarray
    mbs: float

    def rrh_array(self, num_rrh: int) -> np.ndarray:
        arr = np.asarray(self.rrh, dtype=float)
        if arr.ndim == 0:
            arr = np.full(num_rrh, float(arr))
        if arr.shape != (num_rrh,):
            raise ValueError(f"need {num_rrh} RRH budgets, got shape {arr.shape}")
        if np.any(arr < 0) or self.mbs < 0:
            raise ValueError("power budgets must be nonnegative")
        return arr


@dataclass
class BeamformerSet:
    """Transmit beams: stacked cluster beams per RUE, MBS beams per BUE."""

    rue: dict[int, np.ndarray]
    bue: dict[int, np.ndarray]
    block_rrhs: dict[int, list[int]]
    block_size: int

    def block(self, rue_id: int, rrh_id: int) -> np.ndarray:
        pos = self.block_rrhs[rue_id].index(rrh_id)
        n = self.block_size
        return self.rue[rue_id][pos * n:(pos + 1) * n]

    def rrh_power(self, rrh_id: int) -> float:
        total = 0.0
        for i, cluster in self.block_rrhs.items():
            if rrh_id in cluster:
                total += float(np.sum(np.abs(self.block(i, rrh_id)) ** 2))
        return total

    def mbs_power(self) -> float:
        return float(sum(np.sum(np.abs(w) ** 2) for w in self.bue.values()))

    def copy(self) -> "BeamformerSet":
        return BeamformerSet(
            rue={i: w.copy() for i, w in self.rue.items()},
            bue={j: w.copy() for j, w in self.bue.items()},
            block_rrhs={i: list(c) for i, c in self.block_rrhs.items()},
            block_size=self.block_size,
        )


def zero_beams(links: AggregatedLinks) -> BeamformerSet:
    return BeamformerSet(
        rue={i: np.zeros(links.dim(i), dtype=complex) for i in links.rue_ids},
        bue={j: np.zeros(links.mbs_antennas, dtype=complex) for j in links.bue_ids},
        block_rrhs={i: list(links.block_rrhs[i]) for i in links.rue_ids},
        block_size=links.block_size,
    )


def _diff_norm(new: dict, old: dict, ids) -> float:
    return sum(float(np.sum(np.abs(new[m] - old[m]) ** 2)) for m in ids)


def total_beam_diff(new: BeamformerSet, old: BeamformerSet) -> float:
    """Sum of squared beam changes over all UEs."""
    return _diff_norm(new.rue, old.rue, list(new.rue)) + _diff_norm(
        new.bue, old.bue, list(new.bue)
    )


@dataclass
class QcqpProblem:
    quad_rue: dict[int, np.ndarray]
    lin_rue: dict[int, np.ndarray]
    quad_bue: dict[int, np.ndarray]
    lin_bue: dict[int, np.ndarray]
    block_rrhs: dict[int, list[int]]
    block_size: int
    rrh_budget: np.ndarray
    mbs_budget: float


def mse_and_equalizer(g_eff: np.ndarray, w: np.ndarray, j_power: float):
    """Optimal scalar equalizer and the resulting MSE for one UE.

    g_eff is the usable (estimated) channel, w its beam, j_power the expected
    interference-plus-noise power. Returns (mse, f).
    """
    if j_power <= 0:
        raise ValueError("interference-plus-noise power must be positive")
    a = complex(np.vdot(g_eff, w))
    f = a / (abs(a) ** 2 + j_power)
    mse = abs(np.conj(f) * a - 1.0) ** 2 + abs(f) ** 2 * j_power
    return float(mse), f


def update_u(mse: float) -> float:
    """Closed-form auxiliary-variable update; the weight is exp(u - 1)."""
    if mse <= 0:
        raise ValueError("mse must be positive")
    return 1.0 - math.log(mse)


def _weights(f: dict, u: dict) -> dict:
    return {m: math.exp(u[m] - 1.0) * abs(f[m]) ** 2 for m in u}


def _assemble_rue_side(links: AggregatedLinks, f: dict, u: dict):
    """Quadratic/linear terms for every RUE beam (needs all UEs' f and u)."""
    w8 = _weights(f, u)
    quad, lin = {}, {}
    for i in links.rue_ids:
        g = links.g_hat[i]
        mat = w8[i] * (np.outer(g, g.conj()) + np.diag(links.own_err_diag[i]).astype(complex))
        for dst in links.rue_ids:
            if dst != i:
                mat = mat + w8[dst] * links.cross_rue_cov[(i, dst)]
        for j in links.bue_ids:
            mat = mat + w8[j] * links.cross_bue_cov[(i, j)]
        quad[i] = mat
        lin[i] = math.exp(u[i] - 1.0) * f[i] * g
    return quad, lin


def _assemble_bue_side(links: AggregatedLinks, f: dict, u: dict):
    """Quadratic/linear terms for every BUE beam."""
    w8 = _weights(f, u)
    quad, lin = {}, {}
    for j in links.bue_ids:
        h = links.bue_est[j]
        mat = w8[j] * (
            np.outer(h, h.conj()) + links.bue_err[j] * np.eye(links.mbs_antennas)
        )
        for i in links.rue_ids:
            mat = mat + w8[i] * links.mbs_to_rue_cov[i]
        for other in links.bue_ids:
            if other != j:
                mat = mat + w8[other] * links.bue_cov[other]
        quad[j] = mat
        lin[j] = math.exp(u[j] - 1.0) * f[j] * h
    return quad, lin


def assemble_qcqp(
    links: AggregatedLinks,
    f: dict,
    u: dict,
    budgets: PowerBudget,
    topology: Topology,
) -> QcqpProblem:
    """Beamformer-step QCQP at the current equalizers and weights.

    The dropped additive constant is sum_m exp(u_m - 1) * (1 + |f_m|^2 * N0);
    adding it back to the optimum recovers the weighted-MSE objective.
    """
    quad_rue, lin_rue = _assemble_rue_side(links, f, u)
    quad_bue, lin_bue = _assemble_bue_side(links, f, u)
    return QcqpProblem(
        quad_rue=quad_rue,
        lin_rue=lin_rue,
        quad_bue=quad_bue,
        lin_bue=lin_bue,
        block_rrhs={i: list(links.block_rrhs[i]) for i in links.rue_ids},
        block_size=links.block_size,
        rrh_budget=budgets.rrh_array(topology.num_rrh),
        mbs_budget=float(budgets.mbs),
    )


def _side_objective(quad: dict, lin: dict, beams: dict, ids) -> float:
    total = 0.0
    for m in ids:
        w = beams[m]
        total += float(np.real(np.vdot(w, quad[m] @ w)))
        total -= 2.0 * float(np.real(np.vdot(lin[m], w)))
    return total


def qcqp_objective(problem: QcqpProblem, beams: BeamformerSet) -> float:
    rue = _side_objective(problem.quad_rue, problem.lin_rue, beams.rue, problem.quad_rue)
    bue = _side_objective(problem.quad_bue, problem.lin_bue, beams.bue, problem.quad_bue)
    return rue + bue


def _solve_reg(mat: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(mat, rhs)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(mat, rhs, rcond=None)[0]


def _solve_rrh_side(
    quad: dict,
    lin: dict,
    block_rrhs: dict,
    block_size: int,
    budget: np.ndarray,
    feas_tol: float,
    gap_tol: float,
    max_iters: int,
    mu0: dict | None = None,
):
    """Dual decomposition over the per-RRH power constraints.

    For fixed multipliers mu the Lagrangian separates per RUE with minimizer
    (F_i + diag(mu over blocks))^{-1} b_i. The concave dual is maximized in
    two interleaved phases:

    * cyclic exact coordinate ascent — RRH k's transmitted power is strictly
      decreasing in mu_k, so each coordinate update is a safeguarded bisection
      for the complementary-slackness root (mu_k = 0 when the cap already
      holds), with ||(F + D)^{-1} b|| <= ||b|| / mu_k as a closed-form upper
      bracket. Scale-free per constraint, globally convergent.
    * damped Newton polish on the active set — overlapping serving clusters
      couple the multipliers strongly enough that coordinate ascent's linear
      tail can crawl; the power-balance Jacobian is closed-form, so a few
      projected Newton steps finish the job quadratically. Steps are accepted
      only if they shrink the worst violation, otherwise sweeping resumes.

    mu0 warm-starts the multipliers (dict keyed by RRH id). Coordinates owned
    by zero-budget RRHs are pinned to zero up front. max_iters caps the total
    number of multiplier updates. Returns (beams dict, mu dict, dual value,
    info dict).
    """
    rue_ids = list(quad.keys())
    n = block_size
    info = {"dual_iterations": 0}

    keep, red_quad, red_lin, red_blocks, nonzero = {}, {}, {}, {}, {}
    for i in rue_ids:
        mask = np.repeat([budget[k] > 0 for k in block_rrhs[i]], n)
        keep[i] = mask
        red_quad[i] = quad[i][np.ix_(mask, mask)]
        red_lin[i] = lin[i][mask]
        red_blocks[i] = [k for k in block_rrhs[i] if budget[k] > 0]
        nonzero[i] = bool(np.any(red_lin[i]))
    active = sorted({k for i in rue_ids for k in red_blocks[i]})
    kpos = {k: idx for idx, k in enumerate(active)}
    cap = budget[active] if active else np.zeros(0)
    shift_idx = {
        i: np.repeat(np.asarray([kpos[k] for k in red_blocks[i]], dtype=int), n)
        for i in rue_ids
    }
    diag_idx = {i: np.arange(red_quad[i].shape[0]) for i in rue_ids}
    users_of = {k: [] for k in active}
    for i in rue_ids:
        for pos, k in enumerate(red_blocks[i]):
            users_of[k].append((i, pos * n))
    norms_at = {
        k: sum(float(np.sum(np.abs(red_lin[i]) ** 2)) for i, _ in users_of[k])
        for k in active
    }

    def expand(i: int, reduced: np.ndarray) -> np.ndarray:
        full = np.zeros(quad[i].shape[0], dtype=complex)
        full[keep[i]] = reduced
        return full

    def solve_ue(i: int, mu: np.ndarray) -> np.ndarray:
        if not nonzero[i]:
            return np.zeros(red_lin[i].shape[0], dtype=complex)
        mat = red_quad[i].copy()
        mat[diag_idx[i], diag_idx[i]] += mu[shift_idx[i]]
        return _solve_reg(mat, red_lin[i])

    mu = np.zeros(len(active))
    if mu0:
        for k, val in mu0.items():
            if k in kpos and val > 0.0:
                mu[kpos[k]] = float(val)
    w_cache = {i: solve_ue(i, mu) for i in rue_ids}

    def power_at(k: int) -> float:
        return sum(
            float(np.sum(np.abs(w_cache[i][off:off + n]) ** 2)) for i, off in users_of[k]
        )

    def dual_value() -> float:
        val = -float(mu @ cap)
        for i in rue_ids:
            val -= float(np.real(np.vdot(red_lin[i], w_cache[i])))
        return val

    def finish():
        beams = {i: expand(i, w_cache[i]) for i in rue_ids}
        mu_out = {k: float(mu[kpos[k]]) for k in active}
        return beams, mu_out, dual_value(), info

    if not active:
        return finish()

    def residuals():
        powers = np.array([power_at(k) for k in active])
        viol = float(np.max((powers - cap) / np.maximum(cap, 1e-300)))
        gap = float(np.sum(mu * np.abs(cap - powers)))
        return powers, viol, gap

    def is_converged(viol: float, gap: float) -> bool:
        return viol <= feas_tol and gap <= gap_tol * max(1.0, abs(dual_value()))

    def k_power(k: int, idx: int, x: float) -> float:
        trial = mu.copy()
        trial[idx] = x
        total = 0.0
        for i, off in users_of[k]:
            w = solve_ue(i, trial)
            total += float(np.sum(np.abs(w[off:off + n]) ** 2))
        return total

    def coordinate_sweep(cs_budget: float) -> int:
        count = 0
        for k in active:
            idx = kpos[k]
            if power_at(k) <= cap[idx] and mu[idx] == 0.0:
                continue
            count += 1
            if k_power(k, idx, 0.0) <= cap[idx]:
                mu[idx] = 0.0
            else:
                hi_max = math.sqrt(norms_at[k] / cap[idx])
                lo, hi = 0.0, hi_max
                if mu[idx] > 0.0:
                    # Local bracket around the warm value, widened as needed.
                    left = 0.5 * mu[idx]
                    if k_power(k, idx, left) <= cap[idx]:
                        hi = left
                    else:
                        lo = left
                        right = min(2.0 * mu[idx], hi_max)
                        while right < hi_max and k_power(k, idx, right) > cap[idx]:
                            lo = right
                            right = min(2.0 * right, hi_max)
                        hi = right
                root = hi
                for _ in range(200):
                    mid = 0.5 * (lo + hi)
                    p_mid = k_power(k, idx, mid)
                    if p_mid > cap[idx]:
                        lo = mid
                    else:
                        hi = mid
                    slack = min(0.5 * feas_tol * cap[idx], cs_budget / max(mid, 1e-300))
                    if abs(p_mid - cap[idx]) <= slack:
                        root = mid
                        break
                    root = hi
                    if hi - lo <= 1e-15 * hi:
                        break
                mu[idx] = root
            for i, _ in users_of[k]:
                w_cache[i] = solve_ue(i, mu)
        return max(count, 1)

    def newton_rounds(max_rounds: int) -> int:
        """Projected damped Newton on the power-balance equations."""
        count = 0
        for _ in range(max_rounds):
            powers, viol, gap = residuals()
            if is_converged(viol, gap):
                break
            act = [k for k in active if mu[kpos[k]] > 0.0 or powers[kpos[k]] > cap[kpos[k]]]
            if not act:
                break
            apos = {k: x for x, k in enumerate(act)}
            resid = np.array([powers[kpos[k]] - cap[kpos[k]] for k in act])
            jac = np.zeros((len(act), len(act)))
            for i in rue_ids:
                if not nonzero[i]:
                    continue
                cols = [(pos * n, k) for pos, k in enumerate(red_blocks[i]) if k in apos]
                if not cols:
                    continue
                mat = red_quad[i].copy()
                mat[diag_idx[i], diag_idx[i]] += mu[shift_idx[i]]
                rhs = np.zeros((red_lin[i].shape[0], len(cols)), dtype=complex)
                for c, (off, _) in enumerate(cols):
                    rhs[off:off + n, c] = w_cache[i][off:off + n]
                try:
                    sens = np.linalg.solve(mat, rhs)
                except np.linalg.LinAlgError:
                    return count
                for c_l, (off_l, k_l) in enumerate(cols):
                    for c_k, (off_k, k_k) in enumerate(cols):
                        block = w_cache[i][off_k:off_k + n].conj() @ sens[off_k:off_k + n, c_l]
                        jac[apos[k_k], apos[k_l]] -= 2.0 * float(np.real(block))
            try:
                step = np.linalg.solve(jac, -resid)
            except np.linalg.LinAlgError:
                break
            worst = float(np.max(np.abs(resid) / np.maximum(cap[[kpos[k] for k in act]], 1e-300)))
            accepted = False
            alpha = 1.0
            for _ in range(6):
                trial = mu.copy()
                for k in act:
                    trial[kpos[k]] = max(0.0, mu[kpos[k]] + alpha * step[apos[k]])
                trial_w = {i: solve_ue(i, trial) for i in rue_ids}
                t_powers = np.array(
                    [
                        sum(
                            float(np.sum(np.abs(trial_w[i][off:off + n]) ** 2))
                            for i, off in users_of[k]
                        )
                        for k in active
                    ]
                )
                t_worst = float(
                    np.max(
                        np.abs(t_powers[[kpos[k] for k in act]] - cap[[kpos[k] for k in act]])
                        / np.maximum(cap[[kpos[k] for k in act]], 1e-300)
                    )
                )
                t_over = float(np.max((t_powers - cap) / np.maximum(cap, 1e-300)))
                if t_worst < 0.5 * worst and t_over <= max(viol, feas_tol):
                    mu[:] = trial
                    w_cache.update(trial_w)
                    count += len(act)
                    accepted = True
                    break
                alpha *= 0.5
            if not accepted:
                break
        return count

    updates = 0
    while updates < max_iters:
        powers, viol, gap = residuals()
        if is_converged(viol, gap):
            return finish()
        cs_budget = gap_tol * max(1.0, abs(dual_value())) / (2 * len(active))
        updates += coordinate_sweep(cs_budget)
        updates += newton_rounds(8)
        info["dual_iterations"] = updates
    powers, viol, gap = residuals()
    if viol <= feas_tol:
        return finish()
    raise ConvergenceError(
        f"RRH dual ascent stalled: violation {viol:.3e} after {updates} multiplier updates"
    )


def _solve_mbs_side(
    quad: dict,
    lin: dict,
    budget: float,
    feas_tol: float,
    gap_tol: float = 1e-8,
    nu0: float | None = None,
):
    """Single-constraint subproblem solved by bisection on the MBS multiplier."""
    bue_ids = list(quad.keys())
    b_ant = lin[bue_ids[0]].shape[0] if bue_ids else 0

    def beams_at(nu: float):
        out = {}
        for j in bue_ids:
            if not np.any(lin[j]) or budget == 0.0:
                out[j] = np.zeros(b_ant, dtype=complex)
                continue
            mat = quad[j].copy()
            mat[np.diag_indices_from(mat)] += nu
            out[j] = _solve_reg(mat, lin[j])
        return out

    def power_of(beams: dict) -> float:
        return sum(float(np.sum(np.abs(w) ** 2)) for w in beams.values())

    def dual_value(nu: float, beams: dict) -> float:
        return -sum(float(np.real(np.vdot(lin[j], beams[j]))) for j in bue_ids) - nu * budget

    beams = beams_at(0.0)
    if not bue_ids or budget == 0.0:
        return beams, 0.0, dual_value(0.0, beams)
    if power_of(beams) <= budget * (1.0 + feas_tol):
        return beams, 0.0, dual_value(0.0, beams)

    # ||(F + nu I)^{-1} b|| <= ||b|| / nu, so this multiplier is feasible.
    hi_max = math.sqrt(sum(float(np.sum(np.abs(v) ** 2)) for v in lin.values()) / budget)
    lo, hi = 0.0, hi_max
    if nu0 and nu0 > 0.0:
        left = 0.5 * nu0
        if power_of(beams_at(left)) <= budget:
            hi = left
        else:
            lo = left
            right = min(2.0 * nu0, hi_max)
            while right < hi_max and power_of(beams_at(right)) > budget:
                lo = right
                right = min(2.0 * right, hi_max)
            hi = right
    root = hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        total = power_of(beams_at(mid))
        if total > budget:
            lo = mid
        else:
            hi = mid
        slack = min(0.5 * feas_tol * budget, 0.5 * gap_tol / max(mid, 1e-300))
        if abs(total - budget) <= slack:
            root = mid
            break
        root = hi
        if hi - lo <= 1e-15 * hi:
            break
    beams = beams_at(root)
    return beams, root, dual_value(root, beams)


def solve_qcqp(
    problem: QcqpProblem,
    feas_tol: float = 1e-6,
    gap_tol: float = 1e-8,
    max_dual_iters: int = 5000,
    return_info: bool = False,
    mu0: dict | None = None,
    nu0: float | None = None,
):
    """Global minimizer of the beamformer-step QCQP.

    Strong duality holds (convex problem, Slater point w = 0), so the RRH-side
    multipliers from dual ascent and the MBS-side multiplier from bisection
    certify the solution. feas_tol bounds the relative constraint violation;
    gap_tol bounds the complementary-slackness residual relative to the
    objective scale. mu0/nu0 warm-start the multipliers.
    """
    rue_beams, mu, rrh_value, info = _solve_rrh_side(
        problem.quad_rue,
        problem.lin_rue,
        problem.block_rrhs,
        problem.block_size,
        problem.rrh_budget,
        feas_tol,
        gap_tol,
        max_dual_iters,
        mu0=mu0,
    )
    bue_beams, nu, mbs_value = _solve_mbs_side(
        problem.quad_bue, problem.lin_bue, problem.mbs_budget, feas_tol, gap_tol, nu0=nu0
    )
    beams = BeamformerSet(
        rue=rue_beams,
        bue=bue_beams,
        block_rrhs={i: list(c) for i, c in problem.block_rrhs.items()},
        block_size=problem.block_size,
    )
    if not return_info:
        return beams
    info = dict(info)
    info["rrh_dual"] = mu
    info["mbs_dual"] = nu
    info["dual_value"] = rrh_value + mbs_value
    info["primal_value"] = qcqp_objective(problem, beams)
    return beams, info


def _accept_side(quad: dict, lin: dict, ids, candidate: dict, old: dict) -> dict:
    """Keep the previous side beams if the solver's answer lost ground.

    The solver works to tolerance; this guards the descent property of the
    outer alternation. The comparison is per side, which is valid because the
    QCQP objective and constraints separate across the two transmitter sides.
    """
    if _side_objective(quad, lin, candidate, ids) > _side_objective(quad, lin, old, ids):
        return old
    return candidate


@dataclass
class RtdState:
    """Trajectory of one alternating design run."""

    f: dict[int, complex]
    u: dict[int, float]
    mse: dict[int, float]
    objective_trace: list[float] = field(default_factory=list)
    sum_se_trace: list[float] = field(default_factory=list)
    beam_history: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def _trace_point(u: dict, mse: dict, prelog: float, ids):
    obj = sum(math.exp(u[m] - 1.0) * mse[m] - u[m] for m in ids)
    sum_se = -prelog * sum(math.log2(mse[m]) for m in ids)
    return obj, sum_se


def _merge_beams(links: AggregatedLinks, rue_beams: dict, bue_beams: dict) -> BeamformerSet:
    return BeamformerSet(
        rue=rue_beams,
        bue=bue_beams,
        block_rrhs={i: list(links.block_rrhs[i]) for i in links.rue_ids},
        block_size=links.block_size,
    )


def _rue_stats(links: AggregatedLinks, full: BeamformerSet, noise_power: float):
    j_rue, _ = interference_plus_noise(links, full, noise_power)
    f, u, mse = {}, {}, {}
    for i in links.rue_ids:
        mse[i], f[i] = mse_and_equalizer(links.g_hat[i], full.rue[i], j_rue[i])
        u[i] = update_u(mse[i])
    return f, u, mse


def _bue_stats(links: AggregatedLinks, full: BeamformerSet, noise_power: float):
    _, j_bue = interference_plus_noise(links, full, noise_power)
    f, u, mse = {}, {}, {}
    for j in links.bue_ids:
        mse[j], f[j] = mse_and_equalizer(links.bue_est[j], full.bue[j], j_bue[j])
        u[j] = update_u(mse[j])
    return f, u, mse


def rtd_solve(
    topology: Topology,
    links: AggregatedLinks,
    training: TrainingConfig,
    budgets: PowerBudget,
    rho: float = 1e-3,
    max_iters: int = 100,
    mode: str = "centralized",
    feas_tol: float = 1e-6,
    gap_tol: float = 1e-8,
    keep_beam_history: bool = False,
):
    """Alternating robust transmit design.

    Starts from zero beams with unit equalizers and auxiliaries, then cycles
    beamformer step / equalizer step / auxiliary step until the summed squared
    beam change falls to rho. The objective trace records the surrogate
    sum_m (exp(u_m - 1) * mse_m - u_m) after each full cycle, which equals
    sum_m log(mse_m) at the refreshed stats; the SE trace is the matching sum
    of per-UE rate lower bounds. keep_beam_history additionally stores a copy
    of the beams after every cycle.

    mode "centralized" runs one loop; "distributed" splits the work between an
    RRH-side and an MBS-side worker that exchange (f, u, beams) value-copy
    messages. Both orderings perform the same arithmetic, so the iterates
    coincide. Returns (BeamformerSet, RtdState).
    """
    if mode == "centralized":
        return _rtd_centralized(
            topology, links, training, budgets, rho, max_iters, feas_tol, gap_tol,
            keep_beam_history,
        )
    if mode == "distributed":
        return _rtd_distributed(
            topology, links, training, budgets, rho, max_iters, feas_tol, gap_tol,
            keep_beam_history,
        )
    raise ValueError(f"unknown mode {mode!r}")


def _rtd_centralized(
    topology, links, training, budgets, rho, max_iters, feas_tol, gap_tol, keep_beam_history
):
    prelog = prelog_factor(training.tau, training.coherence)
    all_ids = links.rue_ids + links.bue_ids
    beams = zero_beams(links)
    f = {m: 1.0 + 0.0j for m in all_ids}
    u = {m: 1.0 for m in all_ids}
    state = RtdState(f=f, u=u, mse={})
    mu0, nu0 = None, None
    for it in range(1, max_iters + 1):
        problem = assemble_qcqp(links, f, u, budgets, topology)
        candidate, qinfo = solve_qcqp(
            problem, feas_tol, gap_tol, return_info=True, mu0=mu0, nu0=nu0
        )
        mu0, nu0 = qinfo["rrh_dual"], qinfo["mbs_dual"]
        rue_new = _accept_side(
            problem.quad_rue, problem.lin_rue, links.rue_ids, candidate.rue, beams.rue
        )
        bue_new = _accept_side(
            problem.quad_bue, problem.lin_bue, links.bue_ids, candidate.bue, beams.bue
        )
        delta = _diff_norm(rue_new, beams.rue, links.rue_ids) + _diff_norm(
            bue_new, beams.bue, links.bue_ids
        )
        beams = _merge_beams(links, rue_new, bue_new)
        f_r, u_r, mse_r = _rue_stats(links, beams, training.noise_power)
        f_b, u_b, mse_b = _bue_stats(links, beams, training.noise_power)
        f = {**f_r, **f_b}
        u = {**u_r, **u_b}
        mse = {**mse_r, **mse_b}
        obj, sum_se = _trace_point(u, mse, prelog, all_ids)
        state.f, state.u, state.mse = f, u, mse
        state.objective_trace.append(obj)
        state.sum_se_trace.append(sum_se)
        if keep_beam_history:
            state.beam_history.append(beams.copy())
        state.iterations = it
        if delta <= rho:
            state.converged = True
            break
    return beams, state


class _RrhSideWorker:
    """Baseband-pool side: owns the RUE beams and stats, sees only messages."""

    def __init__(self, topology, links, budgets, noise_power, feas_tol, gap_tol):
        self.links = links
        self.noise_power = noise_power
        self.feas_tol = feas_tol
        self.gap_tol = gap_tol
        self.rrh_budget = budgets.rrh_array(topology.num_rrh)
        self.beams = {i: np.zeros(links.dim(i), dtype=complex) for i in links.rue_ids}
        self.f = {i: 1.0 + 0.0j for i in links.rue_ids}
        self.u = {i: 1.0 for i in links.rue_ids}
        self.mu0 = None

    def stats_message(self):
        return dict(self.f), dict(self.u)

    def beam_message(self):
        return {i: w.copy() for i, w in self.beams.items()}

    def beam_update(self, peer_f: dict, peer_u: dict) -> float:
        """Solve this side's QCQP; returns the squared beam change."""
        f = {**self.f, **peer_f}
        u = {**self.u, **peer_u}
        quad, lin = _assemble_rue_side(self.links, f, u)
        candidate, self.mu0, _, _ = _solve_rrh_side(
            quad,
            lin,
            {i: list(self.links.block_rrhs[i]) for i in self.links.rue_ids},
            self.links.block_size,
            self.rrh_budget,
            self.feas_tol,
            self.gap_tol,
            5000,
            mu0=self.mu0,
        )
        accepted = _accept_side(quad, lin, self.links.rue_ids, candidate, self.beams)
        delta = _diff_norm(accepted, self.beams, self.links.rue_ids)
        self.beams = accepted
        return delta

    def stats_refresh(self, peer_beams: dict):
        full = _merge_beams(self.links, self.beams, peer_beams)
        self.f, self.u, mse = _rue_stats(self.links, full, self.noise_power)
        return mse


class _MbsSideWorker:
    """Macro side: owns the BUE beams and stats."""

    def __init__(self, links, budgets, noise_power, feas_tol, gap_tol):
        self.links = links
        self.noise_power = noise_power
        self.feas_tol = feas_tol
        self.gap_tol = gap_tol
        self.mbs_budget = float(budgets.mbs)
        self.beams = {
            j: np.zeros(links.mbs_antennas, dtype=complex) for j in links.bue_ids
        }
        self.f = {j: 1.0 + 0.0j for j in links.bue_ids}
        self.u = {j: 1.0 for j in links.bue_ids}
        self.nu0 = None

    def stats_message(self):
        return dict(self.f), dict(self.u)

    def beam_message(self):
        return {j: w.copy() for j, w in self.beams.items()}

    def beam_update(self, peer_f: dict, peer_u: dict) -> float:
        f = {**self.f, **peer_f}
        u = {**self.u, **peer_u}
        quad, lin = _assemble_bue_side(self.links, f, u)
        candidate, self.nu0, _ = _solve_mbs_side(
            quad, lin, self.mbs_budget, self.feas_tol, self.gap_tol, nu0=self.nu0
        )
        accepted = _accept_side(quad, lin, self.links.bue_ids, candidate, self.beams)
        delta = _diff_norm(accepted, self.beams, self.links.bue_ids)
        self.beams = accepted
        return delta

    def stats_refresh(self, peer_beams: dict):
        full = _merge_beams(self.links, peer_beams, self.beams)
        self.f, self.u, mse = _bue_stats(self.links, full, self.noise_power)
        return mse


def _rtd_distributed(
    topology, links, training, budgets, rho, max_iters, feas_tol, gap_tol, keep_beam_history
):
    prelog = prelog_factor(training.tau, training.coherence)
    all_ids = links.rue_ids + links.bue_ids
    rrh = _RrhSideWorker(topology, links, budgets, training.noise_power, feas_tol, gap_tol)
    mbs = _MbsSideWorker(links, budgets, training.noise_power, feas_tol, gap_tol)
    state = RtdState(
        f={m: 1.0 + 0.0j for m in all_ids}, u={m: 1.0 for m in all_ids}, mse={}
    )
    for it in range(1, max_iters + 1):
        # Exchange last cycle's stats, then update both sides' beams.
        mbs_f, mbs_u = mbs.stats_message()
        rrh_f, rrh_u = rrh.stats_message()
        delta = rrh.beam_update(mbs_f, mbs_u) + mbs.beam_update(rrh_f, rrh_u)
        # Exchange the fresh beams, then refresh local equalizers/auxiliaries.
        mse = rrh.stats_refresh(mbs.beam_message())
        mse.update(mbs.stats_refresh(rrh.beam_message()))
        rrh_f, rrh_u = rrh.stats_message()
        mbs_f, mbs_u = mbs.stats_message()
        u = {**rrh_u, **mbs_u}
        obj, sum_se = _trace_point(u, mse, prelog, all_ids)
        state.f = {**rrh_f, **mbs_f}
        state.u = u
        state.mse = mse
        state.objective_trace.append(obj)
        state.sum_se_trace.append(sum_se)
        if keep_beam_history:
            state.beam_history.append(
                _merge_beams(links, rrh.beam_message(), mbs.beam_message())
            )
        state.iterations = it
        if delta <= rho:
            state.converged = True
            break
    beams = _merge_beams(links, rrh.beam_message(), mbs.beam_message())
    return beams, state
