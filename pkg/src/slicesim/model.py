"""Domain types and pure rate/utility formulas for the shared radio grid.

eMBB users hold resource blocks for a whole slot; URLLC packets preempt
(puncture) mini-slots out of those blocks.  The eMBB side uses the Shannon
rate scaled by the surviving mini-slot fraction; the URLLC side uses the
finite-blocklength normal approximation

    rate ~ C - sqrt(D / c) * Q^{-1}(vartheta),   D = 1 - (1 + SNR)^{-2},

with each per-(user, RB) term clamped at zero since a negative achievable
rate is non-physical.

Everything here is pure and re-entrant; arrays are never mutated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .config import ScenarioConfig

LOG2 = np.log(2.0)


@dataclass
class SlotState:
    """Realized channel gains and URLLC arrivals for one slot."""
    embb_gain: np.ndarray    # (K, B) linear power gains
    urllc_gain: np.ndarray   # (N, B) linear power gains
    arrivals: int            # URLLC packets that landed in this slot
    slot_index: int = 0

    def __post_init__(self):
        self.embb_gain = np.asarray(self.embb_gain, dtype=float)
        self.urllc_gain = np.asarray(self.urllc_gain, dtype=float)
        if np.any(self.embb_gain < 0) or np.any(self.urllc_gain < 0):
            raise ValueError("channel gains must be nonnegative")
        if self.arrivals < 0:
            raise ValueError("arrivals must be nonnegative")


@dataclass
class Allocation:
    """Decision variables: RB ownership, power, puncture weights and mini-slots.

    ``x`` may hold the relaxed fractional ownership in [0, 1] during
    optimization; the rounded binary allocation at the end.
    """
    x: np.ndarray            # (K, B) in [0, 1]
    p: np.ndarray            # (K, B) watts, sums to <= P_max
    w: np.ndarray            # (K, B) puncture weights in [0, 1]
    z: np.ndarray            # (K, B) punctured mini-slots in {0..M}

    @classmethod
    def zeros(cls, num_users: int, num_rbs: int) -> "Allocation":
        shape = (num_users, num_rbs)
        return cls(x=np.zeros(shape), p=np.zeros(shape),
                   w=np.zeros(shape), z=np.zeros(shape, dtype=int))

    def copy(self) -> "Allocation":
        return Allocation(self.x.copy(), self.p.copy(), self.w.copy(), self.z.copy())

    def check(self, cfg: ScenarioConfig, binary: bool = True,
              atol: float = 1e-9) -> None:
        """Assert the allocation constraints (power cap, per-RB ownership, z range)."""
        if binary:
            if not np.all((self.x == 0) | (self.x == 1)):
                raise ValueError("x is not binary")
        if np.any(self.x < -atol) or np.any(self.x > 1 + atol):
            raise ValueError("x outside [0, 1]")
        if np.any(self.x.sum(axis=0) > 1 + atol):
            raise ValueError("an RB is over-assigned")
        if np.any(self.p < -atol):
            raise ValueError("negative power")
        if self.p.sum() > cfg.max_power_w * (1 + 1e-9) + atol:
            raise ValueError("power budget exceeded")
        if np.any(self.z < 0) or np.any(self.z > cfg.minislots_per_slot):
            raise ValueError("z outside {0..M}")


def embb_rb_rate(f_b: float, z: float, M: int, p: float, h: float,
                 sigma2: float, slot_duration: float = 1e-3) -> float:
    """Rate of one eMBB resource block in bits/slot.

    The (1 - z/M) factor removes the punctured mini-slot fraction from the
    Shannon rate f_b * log2(1 + p h / sigma2), and the slot duration turns
    bits/s into bits per slot.
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    if z < 0 or z > M:
        raise ValueError(f"z={z} outside [0, {M}]")
    if p < 0 or h < 0:
        raise ValueError("power and gain must be nonnegative")
    return f_b * slot_duration * (1.0 - z / M) * np.log2(1.0 + p * h / sigma2)


def embb_rate_matrix(alloc: Allocation, slot: SlotState, cfg: ScenarioConfig,
                     puncture: str = "z") -> np.ndarray:
    """Per-(user, RB) eMBB rates in bits/slot, before ownership weighting.

    puncture='z' uses the integer mini-slot counts, 'w' the continuous
    weights, 'none' ignores puncturing.
    """
    snr = alloc.p * slot.embb_gain / cfg.noise_power_w
    base = cfg.rb_bandwidth_hz * cfg.slot_duration_s * np.log2(1.0 + snr)
    if puncture == "z":
        return base * (1.0 - alloc.z / cfg.minislots_per_slot)
    if puncture == "w":
        return base * (1.0 - alloc.w)
    if puncture == "none":
        return base
    raise ValueError(f"unknown puncture mode {puncture!r}")


def embb_user_rates(alloc: Allocation, slot: SlotState, cfg: ScenarioConfig,
                    puncture: str = "z") -> np.ndarray:
    """Ownership-weighted per-user rates, bits/slot. Zero for users with no RBs."""
    return (alloc.x * embb_rate_matrix(alloc, slot, cfg, puncture)).sum(axis=1)


def embb_user_rate(alloc: Allocation, slot: SlotState, cfg: ScenarioConfig,
                   user: int) -> float:
    return float(embb_user_rates(alloc, slot, cfg)[user])


def rate_no_puncturing(alloc: Allocation, slot: SlotState, cfg: ScenarioConfig,
                       user: int | None = None):
    """User rates with puncturing ignored (z forced to zero)."""
    rates = embb_user_rates(alloc, slot, cfg, puncture="none")
    return rates if user is None else float(rates[user])


def channel_dispersion(p_u, h_u, sigma2: float):
    """Stochastic channel variability 1 - (1 + SNR)^-2, in [0, 1)."""
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    snr = np.asarray(p_u, dtype=float) * np.asarray(h_u, dtype=float) / sigma2
    if np.any(snr < 0):
        raise ValueError("negative SNR")
    out = 1.0 - 1.0 / (1.0 + snr) ** 2
    return float(out) if out.ndim == 0 else out


def inverse_q(epsilon: float) -> float:
    """Inverse Gaussian Q-function: the q with Q(q) = epsilon."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    return float(norm.isf(epsilon))


def urllc_sum_rate(alloc: Allocation, slot: SlotState, cfg: ScenarioConfig,
                   use_weights: bool = False) -> float:
    """Total URLLC rate over all users, bits/slot.

    The punctured share of each RB (z/M, or w directly when
    ``use_weights``) is split evenly across the N URLLC users.  Each
    (user, RB) term pays the finite-blocklength dispersion penalty and is
    clamped at zero.
    """
    if cfg.cb_symbols <= 0:
        raise ValueError("cb_symbols must be positive")
    if use_weights:
        share = (alloc.x * alloc.w).sum(axis=0)                # (B,)
    else:
        share = (alloc.x * alloc.z).sum(axis=0) / cfg.minislots_per_slot
    p_u = cfg.urllc_rb_power_w()
    snr = p_u * slot.urllc_gain / cfg.noise_power_w            # (N, B)
    shannon = (cfg.rb_bandwidth_hz * cfg.slot_duration_s / cfg.num_urllc_users
               * share[None, :] * np.log2(1.0 + snr))
    penalty = np.sqrt(channel_dispersion(p_u, slot.urllc_gain, cfg.noise_power_w)
                      / cfg.cb_symbols) * inverse_q(cfg.decoding_error)
    return float(np.maximum(shannon - penalty, 0.0).sum())


def exp_utility(rate_samples, mu: float) -> float:
    """Risk-sensitive certainty equivalent (1/mu) log mean(exp(mu * R_s)).

    Evaluated through log-sum-exp so strongly negative mu never overflows.
    For mu < 0 this is at most the sample mean (equality iff all samples
    agree) and expands to mean + (mu/2) var for small |mu|.
    """
    if mu == 0:
        raise ValueError("mu must be nonzero")
    samples = np.asarray(rate_samples, dtype=float).ravel()
    if samples.size == 0:
        raise ValueError("need at least one sample")
    e = mu * samples
    peak = e.max()
    lse = peak + np.log(np.exp(e - peak).sum())
    return float((lse - np.log(samples.size)) / mu)


def risk_averse_utility(user_rate_samples, mu: float) -> float:
    """Scheduler objective: soft worst case over users and fading draws.

    ``user_rate_samples`` is an (S, K) matrix of per-user rates across the
    sample-average fading draws (any shape is flattened).  For mu -> 0- the
    value approaches the grand mean (per-user average rate, the sum-rate
    ordering); for strongly negative mu it approaches the minimum entry,
    so scarce resources flow toward the worst-off user.  Concave in the
    rates, which each subproblem relies on.
    """
    return exp_utility(np.asarray(user_rate_samples, dtype=float).ravel(), mu)


def mean_variance_objective(rate_history, beta: float) -> float:
    """Sum over users of (mean - beta * variance) of the per-user rate history.

    Reporting-only companion to the exponential utility.  ``rate_history``
    is (T, K); variance uses the population form (divisor n) so tiny
    histories stay deterministic.
    """
    hist = np.atleast_2d(np.asarray(rate_history, dtype=float))
    if hist.size == 0:
        raise ValueError("empty history")
    return float((hist.mean(axis=0) - beta * hist.var(axis=0)).sum())


def markov_required_rate(zeta: float, mean_arrivals: float, theta: float) -> float:
    """Service rate that bounds the outage probability by theta.

    Markov's inequality on Pr[served <= zeta L] gives zeta E[L] / served,
    so served >= zeta E[L] / theta suffices.
    """
    if theta <= 0:
        raise ValueError("theta must be positive")
    return zeta * mean_arrivals / theta
