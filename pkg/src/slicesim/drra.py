"""Block-coordinate resource optimizer with convex relaxations and rounding.

Each slot is solved by cycling three subproblems until the risk-averse
utility stops moving:

  1. RB ownership: relax the binary per-RB assignment to fractions in
     [0, 1] with a per-RB unit cap, maximize by projected gradient ascent.
  2. Power: allocate the gNB budget over (user, RB) pairs; the objective
     is concave in power, same solver over the budget set.
  3. Puncture weights: continuous per-RB puncture fractions in [0, 1],
     maximized subject to a minimum URLLC service rate derived from the
     Markov bound on the outage probability, handled with a quadratic
     penalty whose weight doubles until the violation is negligible.

The fractional ownership is then thresholded and repaired to a binary
assignment, integer mini-slot counts come from flooring M * w, and the
ratio of rounded to relaxed utility is reported as the integrality gap.

The fading expectation inside the utility is a sample average: the
realized slot gains act as Rayleigh scale parameters and S exponential
power draws around them form the sample set.  All solves on one slot share
that sample set, which comes from a dedicated substream so optimizer
internals never perturb the environment sequence.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kern
from .config import ScenarioConfig
from .env import RngStream
from .model import (Allocation, SlotState, channel_dispersion, inverse_q,
                    markov_required_rate)

LN2 = np.log(2.0)


@dataclass
class SolveReport:
    """Per-slot solver diagnostics.

    objective_trace holds the utility after each outer cycle and is
    non-decreasing up to solver slack; the integrality gap rho compares
    the rounded assignment against the relaxed one and stays <= 1 up to
    rounding in well-converged solves.
    """
    objective_trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    rho: float = 1.0
    delta: float = 0.0
    feasible_urllc: bool = True
    wall_time: float = 0.0

    def to_json_line(self) -> str:
        return json.dumps({
            "objective_trace": [float(v) for v in self.objective_trace],
            "iterations": self.iterations,
            "converged": self.converged,
            "rho": float(self.rho),
            "delta": float(self.delta),
            "feasible_urllc": self.feasible_urllc,
            "wall_time": float(self.wall_time),
        })

    @classmethod
    def from_json_line(cls, line: str) -> "SolveReport":
        return cls(**json.loads(line))


def saa_fading(slot: SlotState, cfg: ScenarioConfig,
               rng: RngStream | None = None) -> np.ndarray:
    """Draw the (S, K, B) fading sample set around the realized eMBB gains."""
    if rng is None:
        rng = RngStream(cfg.seed)
    gen = rng.slot_substream("saa", slot.slot_index)
    draws = gen.exponential(1.0, size=(cfg.saa_samples,) + slot.embb_gain.shape)
    return slot.embb_gain[None, :, :] * draws


def _project_rb(x: np.ndarray) -> np.ndarray:
    """Clip to [0, 1], then rescale any RB column whose ownership exceeds 1."""
    if kern.HAVE_NUMBA:
        return kern.project_rb(x)
    x = np.clip(x, 0.0, 1.0)
    col = x.sum(axis=0)
    over = col > 1.0
    if np.any(over):
        x = x.copy()
        x[:, over] /= col[over]
    return x


def _project_power(p: np.ndarray, p_max: float) -> np.ndarray:
    """Clip negatives, then rescale onto the total power budget."""
    if kern.HAVE_NUMBA:
        return kern.project_power(p, p_max)
    p = np.maximum(p, 0.0)
    total = p.sum()
    if total > p_max and total > 0:
        p = p * (p_max / total)
    return p


def _project_box(w: np.ndarray) -> np.ndarray:
    if kern.HAVE_NUMBA:
        return kern.project_box(w)
    return np.clip(w, 0.0, 1.0)


def _ascend(x0, value_fn, grad_fn, project, max_iter: int, kkt_tol: float,
            armijo_c: float = 1e-4, shrink: float = 0.5, f_tol: float = 1e-9):
    """Projected gradient ascent, spectral trial step, Armijo backtracking.

    Returns (x, value, residual, iterations).  The residual is the
    infinity norm of the unit-step projected displacement, zero at a
    stationary point of the projected problem; the loop also exits once
    two consecutive accepted steps improve the objective by less than
    f_tol relative, or when no improving step exists at any scale.
    """
    x = project(np.asarray(x0, dtype=float))
    f = value_fn(x)
    g = grad_fn(x)
    gmax = float(np.abs(g).max())
    step = 1.0 / (gmax + 1e-12) if gmax > 0 else 1.0
    residual = np.inf
    stalled = 0
    it = 0
    x_prev = g_prev = None
    for it in range(1, max_iter + 1):
        if x_prev is not None:
            # Barzilai-Borwein trial step, safeguarded by the line search
            dx = x - x_prev
            dg = g - g_prev
            curve = -float(np.vdot(dx, dg))
            if curve > 1e-16:
                step = min(max(float(np.vdot(dx, dx)) / curve, 1e-12), 1e8)
        moved = False
        for _ in range(40):
            x_new = project(x + step * g)
            delta = x_new - x
            gain = float(np.vdot(g, delta))
            if gain <= 0:
                # direction exhausted at this scale; shrink and retry
                step *= shrink
                if step < 1e-16:
                    break
                continue
            f_new = value_fn(x_new)
            if f_new >= f + armijo_c * gain:
                moved = True
                break
            step *= shrink
            if step < 1e-16:
                break
        if not moved:
            residual = 0.0
            break
        improvement = f_new - f
        x_prev, g_prev = x, g
        x, f = x_new, f_new
        g = grad_fn(x)
        stalled = stalled + 1 if improvement <= f_tol * max(1.0, abs(f)) else 0
        if stalled >= 1 or it == max_iter:
            # only price the stationarity residual once progress slows
            residual = float(np.abs(project(x + g) - x).max())
            if residual <= kkt_tol or stalled >= 2:
                break
    return x, f, residual, it


class _SlotProblem:
    """Shared per-slot quantities: SAA fading, rate coefficients, utility."""

    def __init__(self, slot: SlotState, cfg: ScenarioConfig,
                 saa_gain: np.ndarray):
        self.slot = slot
        self.cfg = cfg
        self.gain_over_noise = saa_gain / cfg.noise_power_w       # (S, K, B)
        self.c_mbps = (cfg.rb_bandwidth_hz * cfg.slot_duration_s
                       * cfg.utility_rate_unit())
        self.mu = cfg.risk_param
        self.M = cfg.minislots_per_slot

        # URLLC side: per-(n, b) rate coefficient for a unit punctured share,
        # and the finite-blocklength penalty each term pays, both bits/slot.
        p_u = cfg.urllc_rb_power_w()
        snr_u = p_u * slot.urllc_gain / cfg.noise_power_w
        self.urllc_coef = (cfg.rb_bandwidth_hz * cfg.slot_duration_s
                           / cfg.num_urllc_users * np.log2(1.0 + snr_u))
        disp = channel_dispersion(p_u, slot.urllc_gain, cfg.noise_power_w)
        self.urllc_penalty = np.sqrt(disp / cfg.cb_symbols) * inverse_q(
            cfg.decoding_error)
        self.required_rate = markov_required_rate(
            cfg.urllc_packet_bits, cfg.arrival_rate, cfg.outage_target)

    # -- utility -------------------------------------------------------

    def _utility(self, rates_sk: np.ndarray) -> float:
        """risk_averse_utility without the argument ceremony (hot path)."""
        e = self.mu * rates_sk.ravel()
        peak = e.max()
        lse = peak + np.log(np.exp(e - peak).sum())
        return (lse - np.log(e.size)) / self.mu

    def _weights(self, rates_sk: np.ndarray) -> np.ndarray:
        """Softmin sample/user weights: the gradient of the utility in rates."""
        e = self.mu * rates_sk
        e = e - e.max()
        w = np.exp(e)
        return w / w.sum()

    def rates_z(self, x, p, z) -> np.ndarray:
        lg = np.log1p(p[None] * self.gain_over_noise) / LN2
        keep = 1.0 - z / self.M
        return np.einsum("kb,skb->sk", x * keep * self.c_mbps, lg)

    def rates_w(self, x, p, w) -> np.ndarray:
        lg = np.log1p(p[None] * self.gain_over_noise) / LN2
        return np.einsum("kb,skb->sk", x * (1.0 - w) * self.c_mbps, lg)

    def utility_z(self, x, p, z) -> float:
        return float(self._utility(self.rates_z(x, p, z)))

    def utility_w(self, x, p, w) -> float:
        return float(self._utility(self.rates_w(x, p, w)))

    # -- URLLC service under continuous puncture weights ----------------

    def urllc_service(self, share_b: np.ndarray) -> float:
        """Served URLLC rate (bits/slot) for a per-RB punctured share."""
        terms = self.urllc_coef * share_b[None, :] - self.urllc_penalty
        return float(np.maximum(terms, 0.0).sum())

    def urllc_service_linear(self, share_b: np.ndarray) -> float:
        """Served rate with the per-term clamp dropped.

        This is a lower bound on :meth:`urllc_service` (clamping only
        raises terms), and it is linear in the share, so the solver
        enforces the service constraint through it: the subproblem stays
        convex and any weight meeting the linear bound also meets the
        clamped one.  The gap is the summed dispersion penalty of the
        still-clamped terms, a few bits per slot.
        """
        return float(self.urllc_coef.sum(axis=0) @ share_b
                     - self.urllc_penalty.sum())

    # -- subproblem solves ----------------------------------------------

    def rb_objective(self, p, z):
        """(value, grad) callables of the ownership subproblem at fixed p, z."""
        lg = np.log1p(p[None] * self.gain_over_noise) / LN2
        m = (1.0 - z / self.M) * self.c_mbps * lg                  # (S, K, B)
        if kern.HAVE_NUMBA:
            return (lambda x: kern.rb_value(x, m, self.mu),
                    lambda x: kern.rb_grad(x, m, self.mu))

        def value(x):
            return self._utility(np.einsum("kb,skb->sk", x, m))

        def grad(x):
            omega = self._weights(np.einsum("kb,skb->sk", x, m))
            return np.einsum("sk,skb->kb", omega, m)

        return value, grad

    def solve_rb(self, p, z, x0=None):
        cfg = self.cfg
        value, grad = self.rb_objective(p, z)
        if x0 is None:
            x0 = np.full_like(p, 1.0 / cfg.num_embb_users)
        x, val, res, it = _ascend(x0, value, grad, _project_rb,
                                  cfg.max_inner_iterations, cfg.kkt_tolerance)
        return x, val, res <= cfg.kkt_tolerance

    def power_objective(self, x, z):
        """(value, grad) callables of the power subproblem at fixed x, z."""
        xc = x * (1.0 - z / self.M) * self.c_mbps                  # (K, B)
        gon = self.gain_over_noise
        if kern.HAVE_NUMBA:
            return (lambda p: kern.power_value(p, gon, xc, self.mu),
                    lambda p: kern.power_grad(p, gon, xc, self.mu))

        def value(p):
            lg = np.log1p(p[None] * gon) / LN2
            return self._utility(np.einsum("kb,skb->sk", xc, lg))

        def grad(p):
            lg = np.log1p(p[None] * gon) / LN2
            omega = self._weights(np.einsum("kb,skb->sk", xc, lg))
            slope = gon / (1.0 + p[None] * gon)
            return np.einsum("sk,skb->kb", omega, slope) * xc / LN2

        return value, grad

    def solve_power(self, x, z, p0=None):
        cfg = self.cfg
        value, grad = self.power_objective(x, z)
        if p0 is None:
            p0 = np.full_like(x, cfg.max_power_w / x.size)
        project = lambda p: _project_power(p, cfg.max_power_w)
        p, val, res, it = _ascend(p0, value, grad, project,
                                  cfg.max_inner_iterations, cfg.kkt_tolerance)
        return p, val, res <= cfg.kkt_tolerance

    def solve_weights(self, x, p, w0=None, violation_tol: float = 1e-6,
                      max_doublings: int = 20, dual_state: dict | None = None):
        """Puncture-weight solve under the minimum URLLC service constraint.

        The weight is one fraction per RB (returned broadcast to the K x B
        layout), maximized by projected gradient under an augmented
        quadratic penalty on the service shortfall.  The multiplier is
        refreshed each stage and the penalty weight doubles whenever the
        violation stalls, up to ``max_doublings`` times; callers that
        re-solve on the same slot can pass ``dual_state`` (a dict, mutated
        in place) to warm-start the multiplier and avoid the
        relax-retighten transient of a cold start.

        Returns (w, feasible).  When even full puncturing of every owned RB
        cannot reach the required rate, returns w = 1 on allocated RBs and
        feasible=False: the reliability shortfall is a reported state the
        learner is expected to absorb, not a solver failure.
        """
        cfg = self.cfg
        req = self.required_rate
        lg = np.log1p(p[None] * self.gain_over_noise) / LN2
        q_user = x * self.c_mbps * lg                               # (S, K, B)
        base = q_user.sum(axis=2)                                   # (S, K)
        colsum = x.sum(axis=0)                                      # (B,)
        # service slope per unit weight, linear-bound form
        svc = self.urllc_coef.sum(axis=0) * colsum                  # (B,)
        pen_total = float(self.urllc_penalty.sum())

        def rates(wb):
            return base - np.einsum("b,skb->sk", wb, q_user)

        def violation(wb):
            if req <= 0:
                return 0.0
            return max(0.0, (req - (svc @ wb - pen_total)) / req)

        if req > 0 and violation(np.ones(colsum.size)) > 0:
            return np.ones_like(x) * (x > 0), False

        if w0 is None:
            wb = np.zeros(colsum.size)
        else:
            wb = np.asarray(w0, dtype=float)
            wb = wb.max(axis=0) if wb.ndim == 2 else wb.copy()
        dual = dual_state if dual_state is not None else {}
        lam = dual.get("lam", 0.0)
        rho_init = 10.0 * max(1.0, abs(self._utility(rates(wb))))
        rho_max = 1e5 * rho_init
        rho_pen = min(dual.get("rho", rho_init), rho_max)
        prev_v = np.inf
        stages = 0
        for stages in range(1, max_doublings + 2):
            value, grad = self.weight_objective(q_user, base, svc, pen_total,
                                                lam, rho_pen)
            wb, _, _, _ = _ascend(wb, value, grad, _project_box,
                                  cfg.max_inner_iterations, cfg.kkt_tolerance)
            v = violation(wb)
            if v <= violation_tol:
                break
            lam = lam + 2.0 * rho_pen * v
            if v > 0.25 * prev_v:
                rho_pen = min(2.0 * rho_pen, rho_max)
            prev_v = v
        # relax the carried penalty when one stage sufficed, so a warm
        # caller's weight never ratchets upward without bound
        dual["lam"] = lam
        dual["rho"] = max(rho_init, rho_pen / (2.0 if stages == 1 else 1.0))
        w = np.broadcast_to(wb, x.shape).copy()
        return w, violation(wb) <= violation_tol

    def weight_objective(self, q_user, base, svc, pen_total, lam, rho_pen):
        """(value, grad) of the augmented puncture-weight objective.

        ``svc`` is the linear served-rate slope per RB weight and
        ``pen_total`` the constant dispersion offset, so the constraint
        side is affine and kink-free.
        """
        req = self.required_rate
        if kern.HAVE_NUMBA:
            args = (q_user, base, svc, pen_total, req, lam, rho_pen, self.mu)
            return (lambda wv: kern.weight_value(wv, *args),
                    lambda wv: kern.weight_grad(wv, *args))

        def rates(wb):
            return base - np.einsum("b,skb->sk", wb, q_user)

        def violation(wb):
            if req <= 0:
                return 0.0
            return max(0.0, (req - (svc @ wb - pen_total)) / req)

        def value(wv):
            v = violation(wv)
            return self._utility(rates(wv)) - lam * v - rho_pen * v * v

        def grad(wv):
            omega = self._weights(rates(wv))
            g = -np.einsum("sk,skb->b", omega, q_user)
            v = violation(wv)
            if v > 0:
                g = g + ((lam + 2.0 * rho_pen * v) / req) * svc
            return g

        return value, grad


def solve_rb_allocation(slot: SlotState, p: np.ndarray, z: np.ndarray,
                        cfg: ScenarioConfig, saa_gain: np.ndarray | None = None,
                        rng: RngStream | None = None):
    """Relaxed RB ownership maximizing the utility at fixed power and puncturing."""
    if saa_gain is None:
        saa_gain = saa_fading(slot, cfg, rng)
    prob = _SlotProblem(slot, cfg, saa_gain)
    x, _, converged = prob.solve_rb(np.asarray(p, float), np.asarray(z, float))
    return x, converged


def solve_power_allocation(slot: SlotState, x: np.ndarray, z: np.ndarray,
                           cfg: ScenarioConfig, saa_gain: np.ndarray | None = None,
                           rng: RngStream | None = None):
    """Power over the budget set at fixed ownership and puncturing."""
    if saa_gain is None:
        saa_gain = saa_fading(slot, cfg, rng)
    prob = _SlotProblem(slot, cfg, saa_gain)
    p, _, converged = prob.solve_power(np.asarray(x, float), np.asarray(z, float))
    return p, converged


def solve_urllc_weights(slot: SlotState, x: np.ndarray, p: np.ndarray,
                        cfg: ScenarioConfig, mean_arrivals: float | None = None,
                        saa_gain: np.ndarray | None = None,
                        rng: RngStream | None = None):
    """Puncture weights meeting the Markov service bound, plus feasibility flag."""
    if saa_gain is None:
        saa_gain = saa_fading(slot, cfg, rng)
    prob = _SlotProblem(slot, cfg, saa_gain)
    if mean_arrivals is not None:
        prob.required_rate = markov_required_rate(
            cfg.urllc_packet_bits, mean_arrivals, cfg.outage_target)
    return prob.solve_weights(np.asarray(x, float), np.asarray(p, float))


def weights_to_minislots(w: np.ndarray, M: int) -> np.ndarray:
    """Integer mini-slot counts floor(M * w), elementwise in {0..M}."""
    w = np.asarray(w, dtype=float)
    if np.any(w < 0) or np.any(w > 1):
        raise ValueError("weights outside [0, 1]")
    return np.clip(np.floor(M * w).astype(int), 0, M)


def round_rb_allocation(x_relaxed: np.ndarray, cfg: ScenarioConfig,
                        utility=None):
    """Threshold the fractional ownership and repair per-RB conflicts.

    Entries >= eta win; RBs with zero or multiple winners go to the user
    with the largest fraction (ties to the lowest index), so the final
    assignment always satisfies the one-owner-per-RB cap (delta = 0).
    When a ``utility`` callback is supplied, also returns the integrality
    gap rho = (utility(binary) + alpha * delta) / utility(relaxed).
    """
    x_relaxed = np.asarray(x_relaxed, dtype=float)
    x = (x_relaxed >= cfg.rounding_threshold).astype(float)
    winners = x.sum(axis=0)
    for b in np.nonzero(winners != 1)[0]:
        x[:, b] = 0.0
        x[np.argmax(x_relaxed[:, b]), b] = 1.0
    delta = float(max(0.0, (x.sum(axis=0) - 1.0).max()))
    rho = None
    if utility is not None:
        g_relax = utility(x_relaxed)
        g_round = utility(x) + cfg.penalty_weight * delta
        rho = g_round / g_relax if g_relax != 0 else 1.0
    return x, delta, rho


def run_drra(slot: SlotState, cfg: ScenarioConfig,
             rng: RngStream | None = None,
             saa_gain: np.ndarray | None = None,
             warm: dict | None = None):
    """Full per-slot solve: cycle the three subproblems, then round.

    Starts from uniform fractional ownership, an even power split and no
    puncturing; stops when the relative utility change falls below
    cfg.epsilon or the outer iteration cap is hit (the last iterate is
    returned either way, with converged=False).

    ``warm`` is an optional dict, mutated in place, that carries the
    previous slot's iterates and constraint multiplier into this solve.
    Slot-to-slot geometry persists even though fading does not, so the
    warm start typically saves a few outer cycles; results remain fully
    determined by the slot sequence.
    """
    t0 = time.perf_counter()
    if saa_gain is None:
        saa_gain = saa_fading(slot, cfg, rng)
    prob = _SlotProblem(slot, cfg, saa_gain)
    K, B = cfg.num_embb_users, cfg.num_rbs

    warm = warm if warm is not None else {}
    x = warm.get("x", np.full((K, B), 1.0 / K))
    p = warm.get("p", np.full((K, B), cfg.max_power_w / (K * B)))
    w = warm.get("w", np.zeros((K, B)))
    dual_state = warm.setdefault("dual", {})
    report = SolveReport()
    feasible = True
    M = cfg.minislots_per_slot

    # the loop stays on the continuous weights (the mini-slot floor is
    # applied once at exit) so each block ascends one shared objective
    # and the trace is monotone up to solver slack
    prev = prob.utility_w(x, p, w)
    for i in range(1, cfg.max_outer_iterations + 1):
        x, _, _ = prob.solve_rb(p, M * w, x0=x)
        p, _, _ = prob.solve_power(x, M * w, p0=p)
        w, feasible = prob.solve_weights(x, p, w0=w, dual_state=dual_state)
        current = prob.utility_w(x, p, w)
        report.objective_trace.append(current)
        report.iterations = i
        if prev != 0 and abs((prev - current) / prev) <= cfg.epsilon:
            report.converged = True
            break
        prev = current
    warm.update(x=x, p=p, w=w)

    z_int = weights_to_minislots(w, M)
    x_bin, delta, rho = round_rb_allocation(
        x, cfg, utility=lambda xv: prob.utility_z(xv, p, z_int))
    report.delta = delta
    report.rho = float(rho)
    report.feasible_urllc = bool(feasible)
    report.wall_time = time.perf_counter() - t0

    z_final = np.where(x_bin > 0, z_int, 0)
    alloc = Allocation(x=x_bin, p=p, w=w, z=z_final)
    return alloc, report
