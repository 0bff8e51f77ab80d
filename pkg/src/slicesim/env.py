"""Seeded generation of channel realizations, user geometry and URLLC traffic.

Randomness is organised as named substreams derived from the scenario seed,
with per-slot child streams keyed by (substream id, slot index).  Two runs
with the same seed therefore produce bit-identical slot sequences, drawing
from the policy substream never perturbs fading or traffic, and slot t can
be regenerated without replaying slots 0..t-1.  This is what makes paired
comparisons across schedulers possible.

Fading is block Rayleigh: gains stay constant within a slot and are drawn
i.i.d. across slots (exponential power fading around the distance-based
path loss).  Arrivals are Poisson with a per-slot mean of ``arrival_rate``
(the per-mini-slot rate is arrival_rate / M; the slot total of independent
mini-slot Poissons is again Poisson, so we draw it in one shot).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ScenarioConfig
from .model import SlotState

_STREAM_IDS = {"geometry": 0, "fading": 1, "traffic": 2, "policy": 3, "saa": 4}


class RngStream:
    """Named, slot-addressable random substreams for one scenario run."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._persistent: dict[str, np.random.Generator] = {}

    def substream(self, name: str) -> np.random.Generator:
        """Persistent generator for ``name`` (same object on repeat calls)."""
        if name not in self._persistent:
            key = _STREAM_IDS[name]
            seq = np.random.SeedSequence(entropy=self.seed, spawn_key=(key,))
            self._persistent[name] = np.random.default_rng(seq)
        return self._persistent[name]

    def slot_substream(self, name: str, t: int) -> np.random.Generator:
        """Fresh generator for substream ``name`` at slot ``t`` (random access)."""
        key = _STREAM_IDS[name]
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=(key, int(t)))
        return np.random.default_rng(seq)


@dataclass
class UserGeometry:
    """Distances from the gNB, metres, one entry per user."""
    embb_distance_m: np.ndarray   # (K,)
    urllc_distance_m: np.ndarray  # (N,)

    def __post_init__(self):
        self.embb_distance_m = np.asarray(self.embb_distance_m, dtype=float)
        self.urllc_distance_m = np.asarray(self.urllc_distance_m, dtype=float)
        if np.any(self.embb_distance_m <= 0) or np.any(self.urllc_distance_m <= 0):
            raise ValueError("distances must be positive")


def pathloss(distance_m, ref_db: float = 38.0, exponent: float = 3.5):
    """Log-distance path loss as a linear power gain.

    PL(dB) = ref_db + 10 * exponent * log10(d / 1 m); returns 10^(-PL/10).
    """
    d = np.asarray(distance_m, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    pl_db = ref_db + 10.0 * exponent * np.log10(d)
    out = 10.0 ** (-pl_db / 10.0)
    return float(out) if out.ndim == 0 else out


def sample_geometry(cfg: ScenarioConfig, rng: RngStream) -> UserGeometry:
    """Drop users uniformly over the annulus [min_distance, cell_radius]."""
    gen = rng.substream("geometry")
    lo2, hi2 = cfg.min_distance_m ** 2, cfg.cell_radius_m ** 2

    def draw(n: int) -> np.ndarray:
        return np.sqrt(lo2 + gen.random(n) * (hi2 - lo2))

    return UserGeometry(embb_distance_m=draw(cfg.num_embb_users),
                        urllc_distance_m=draw(cfg.num_urllc_users))


def load_geometry(path: str, cfg: ScenarioConfig) -> UserGeometry:
    """Read fixed placements from a text table of `user_id distance_m` rows.

    User ids look like ``embb_0`` / ``urllc_2``; blank lines and lines
    starting with '#' are skipped.
    """
    embb = np.full(cfg.num_embb_users, np.nan)
    urllc = np.full(cfg.num_urllc_users, np.nan)
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                user_id, dist = line.split()
                kind, idx = user_id.rsplit("_", 1)
                idx = int(idx)
                if kind == "embb":
                    embb[idx] = float(dist)
                elif kind == "urllc":
                    urllc[idx] = float(dist)
                else:
                    raise ValueError(kind)
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: bad geometry row {line!r}") from exc
    if np.any(np.isnan(embb)) or np.any(np.isnan(urllc)):
        raise ValueError(f"{path}: geometry table does not cover every user")
    return UserGeometry(embb_distance_m=embb, urllc_distance_m=urllc)


def sample_slot(cfg: ScenarioConfig, geometry: UserGeometry, rng: RngStream,
                t: int) -> SlotState:
    """Draw the channel and traffic realization of slot ``t``."""
    fading = rng.slot_substream("fading", t)
    scale_e = pathloss(geometry.embb_distance_m, cfg.pathloss_ref_db,
                       cfg.pathloss_exponent)
    scale_u = pathloss(geometry.urllc_distance_m, cfg.pathloss_ref_db,
                       cfg.pathloss_exponent)
    h_e = scale_e[:, None] * fading.exponential(1.0, size=(cfg.num_embb_users,
                                                           cfg.num_rbs))
    h_u = scale_u[:, None] * fading.exponential(1.0, size=(cfg.num_urllc_users,
                                                           cfg.num_rbs))
    traffic = rng.slot_substream("traffic", t)
    arrivals = 0 if cfg.arrival_rate == 0 else int(traffic.poisson(cfg.arrival_rate))
    return SlotState(embb_gain=h_e, urllc_gain=h_u, arrivals=arrivals, slot_index=t)
