"""Reference puncturing schedulers.

All baselines reuse the optimizer's RB ownership and power; they only
decide where the demanded punctured mini-slots land.  Demand is derived
from the realized URLLC load through the mean per-mini-slot URLLC
capacity, so every scheduler faces the same traffic.

The equal-split scheduler is a stand-in for a matching-game scheduler
from the literature that is out of scope here; results labelled
"equal" should be read with that in mind.
"""

from __future__ import annotations

import math

import numpy as np

from .config import ScenarioConfig
from .model import Allocation, SlotState, embb_rate_matrix

MCS_LEVELS = 15
MCS_MAX_EFFICIENCY = 7.5  # bits/s/Hz ceiling for the quantizer


def _owned_rbs(alloc: Allocation):
    """(owner, rb) pairs for every assigned RB, in RB order."""
    owners = alloc.x.argmax(axis=0)
    owned = alloc.x.sum(axis=0) > 0
    return [(int(owners[b]), b) for b in np.nonzero(owned)[0]]


def demand_from_load(arrivals: int, cfg: ScenarioConfig,
                     slot: SlotState) -> int:
    """Convert an arrival count into a mini-slot demand.

    Uses the mean over RBs of the per-mini-slot URLLC capacity (summed
    over users, dispersion penalty ignored) as the bits-per-mini-slot
    exchange rate; capped at the grid size B * M.
    """
    if arrivals <= 0:
        return 0
    p_u = cfg.urllc_rb_power_w()
    snr = p_u * slot.urllc_gain / cfg.noise_power_w
    per_minislot = (cfg.rb_bandwidth_hz * cfg.slot_duration_s
                    / (cfg.minislots_per_slot * cfg.num_urllc_users)
                    * np.log2(1.0 + snr)).sum(axis=0).mean()
    if per_minislot <= 0:
        return cfg.num_rbs * cfg.minislots_per_slot
    need = math.ceil(cfg.urllc_packet_bits * arrivals / per_minislot)
    return min(need, cfg.num_rbs * cfg.minislots_per_slot)


def sum_rate_scheduler(alloc: Allocation, slot: SlotState,
                       demand: int, cfg: ScenarioConfig) -> np.ndarray:
    """Place each mini-slot where the instantaneous rate loss is smallest."""
    z = np.zeros_like(alloc.z)
    pairs = _owned_rbs(alloc)
    if demand <= 0 or not pairs:
        return z
    loss = embb_rate_matrix(alloc, slot, cfg, puncture="none") / cfg.minislots_per_slot
    order = sorted(pairs, key=lambda kb: loss[kb])
    remaining = demand
    for k, b in order:
        take = min(cfg.minislots_per_slot, remaining)
        z[k, b] = take
        remaining -= take
        if remaining <= 0:
            break
    return z


def sum_log_scheduler(alloc: Allocation, slot: SlotState,
                      demand: int, cfg: ScenarioConfig) -> np.ndarray:
    """Proportional-fair placement: minimize the drop in sum log rate.

    Rates are floored at one bit/slot inside the log so already-starved
    users do not produce -inf.
    """
    z = np.zeros_like(alloc.z)
    pairs = _owned_rbs(alloc)
    if demand <= 0 or not pairs:
        return z
    per_ms = embb_rate_matrix(alloc, slot, cfg, puncture="none") / cfg.minislots_per_slot
    user_rate = (alloc.x * embb_rate_matrix(alloc, slot, cfg, puncture="none")).sum(axis=1)
    for _ in range(min(demand, len(pairs) * cfg.minislots_per_slot)):
        best, best_cost = None, None
        for k, b in pairs:
            if z[k, b] >= cfg.minislots_per_slot:
                continue
            drop = per_ms[k, b]
            cost = (np.log(max(user_rate[k], 1.0))
                    - np.log(max(user_rate[k] - drop, 1.0)))
            if best_cost is None or cost < best_cost:
                best, best_cost = (k, b), cost
        if best is None:
            break
        k, b = best
        z[k, b] += 1
        user_rate[k] -= per_ms[k, b]
    return z


def lmcs_scheduler(alloc: Allocation, slot: SlotState,
                   demand: int, cfg: ScenarioConfig) -> np.ndarray:
    """Puncture users in ascending order of their modulation-coding proxy.

    The proxy quantizes each user's mean spectral efficiency over owned
    RBs into MCS_LEVELS bins; lowest bins get punctured first, mirroring
    schedulers that drop the most robust (lowest-MCS) transmissions.
    """
    z = np.zeros_like(alloc.z)
    pairs = _owned_rbs(alloc)
    if demand <= 0 or not pairs:
        return z
    snr = alloc.p * slot.embb_gain / cfg.noise_power_w
    eff = np.log2(1.0 + snr)
    users = sorted({k for k, _ in pairs})
    mcs = {}
    for k in users:
        owned_eff = [eff[k, b] for kk, b in pairs if kk == k]
        mean_eff = float(np.mean(owned_eff))
        mcs[k] = min(MCS_LEVELS - 1,
                     int(mean_eff / MCS_MAX_EFFICIENCY * MCS_LEVELS))
    remaining = demand
    for k in sorted(users, key=lambda k: (mcs[k], k)):
        for kk, b in pairs:
            if kk != k or remaining <= 0:
                continue
            take = min(cfg.minislots_per_slot, remaining)
            z[k, b] = take
            remaining -= take
        if remaining <= 0:
            break
    return z


def equal_split_scheduler(alloc: Allocation, slot: SlotState,
                          demand: int, cfg: ScenarioConfig) -> np.ndarray:
    """Round-robin the demanded mini-slots over the owned RBs."""
    z = np.zeros_like(alloc.z)
    pairs = _owned_rbs(alloc)
    if demand <= 0 or not pairs:
        return z
    remaining = min(demand, len(pairs) * cfg.minislots_per_slot)
    while remaining > 0:
        progressed = False
        for k, b in pairs:
            if remaining <= 0:
                break
            if z[k, b] < cfg.minislots_per_slot:
                z[k, b] += 1
                remaining -= 1
                progressed = True
        if not progressed:
            break
    return z


SCHEDULERS = {
    "sum-rate": sum_rate_scheduler,
    "sum-log": sum_log_scheduler,
    "lmcs": lmcs_scheduler,
    "equal": equal_split_scheduler,
}
