"""Scenario configuration: physical layer, traffic, optimizer and learner knobs.

All rates inside the simulator are stored in bits per slot (bits/s scaled by
the slot duration), so URLLC demand in bits is directly comparable with
served rate.  The risk parameter ``mu`` applies to rates expressed in Mbps
(see :func:`ScenarioConfig.rate_unit`), which keeps the useful range of
``mu`` around -10 .. -0.1.

Config files are plain INI text (key = value, grouped in sections).  Any
section name is accepted; keys map onto :class:`ScenarioConfig` fields by
name, so an empty file yields the all-defaults scenario.  See the README
for the grammar and an annotated example.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import math
import os
from dataclasses import dataclass


class ConfigError(ValueError):
    """Raised when a scenario config violates an invariant.

    The message carries the offending field name so the CLI can point at
    the exact line of a config file.
    """


def _dbm_to_watt(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


def default_noise_power_w(rb_bandwidth_hz: float = 180e3,
                          noise_figure_db: float = 9.0) -> float:
    """Thermal noise per RB: -174 dBm/Hz plus receiver noise figure."""
    dbm = -174.0 + noise_figure_db + 10.0 * math.log10(rb_bandwidth_hz)
    return _dbm_to_watt(dbm)


@dataclass
class ScenarioConfig:
    # users / grid
    num_embb_users: int = 5                    # K
    num_urllc_users: int = 3                   # N
    num_rbs: int = 100                         # B; 20 MHz / 180 kHz -> 100 usable
    minislots_per_slot: int = 7                # M
    symbols_per_slot: int = 14
    cb_symbols: int = 2                        # symbols per mini-slot

    # radio
    rb_bandwidth_hz: float = 180e3             # 12 subcarriers x 15 kHz
    slot_duration_s: float = 1e-3
    max_power_w: float = _dbm_to_watt(43.0)    # gNB power budget
    noise_power_w: float = default_noise_power_w()
    cell_radius_m: float = 300.0               # one source quotes 200 m; we keep 300, configurable
    min_distance_m: float = 35.0
    pathloss_ref_db: float = 38.0              # loss at 1 m
    pathloss_exponent: float = 3.5

    # URLLC traffic and reliability
    urllc_packet_bits: int = 256               # 32-byte packets
    arrival_rate: float = 2.0                  # lambda_u, packets per slot (total over mini-slots)
    outage_target: float = 0.04                # Theta_max
    decoding_error: float = 1e-5               # vartheta, finite-blocklength PER target

    # optimizer
    risk_param: float = -5.0                   # mu < 0, dimensionless
    utility_rate_scale_mbps: float = 25.0      # rate normalizer inside utilities
    rounding_threshold: float = 0.5            # eta
    penalty_weight: float = -1.0               # alpha < 0, integrality-gap report only
    variance_weight: float = 0.1               # beta, mean-variance reporting only
    saa_samples: int = 32                      # S, fading draws per slot inside the optimizer
    epsilon: float = 1e-3                      # relative stopping tolerance of the outer loop
    max_outer_iterations: int = 200
    max_inner_iterations: int = 500
    kkt_tolerance: float = 1e-6

    # learner
    discount: float = 0.9                      # gamma
    actor_lr: float = 1e-5                     # rho_a
    critic_lr: float = 1e-3                    # rho_c
    minibatch_size: int = 32
    replay_capacity: int = 10_000
    outage_window: int = 200                   # T_w slots for the empirical outage estimate
    warmstart_slots: int = 500                 # T_hat

    seed: int = 0

    def rate_unit(self) -> float:
        """Conversion factor from bits/slot to Mbps."""
        return 1.0 / (self.slot_duration_s * 1e6)

    def utility_rate_unit(self) -> float:
        """Conversion from bits/slot to the normalized rates the exponential
        utility consumes.

        The risk parameter is dimensionless, so its useful range depends on
        the magnitude of the rates it multiplies; normalizing by a reference
        rate (default 25 Mbps) keeps mu in the -10 .. -0.1 band spanning
        risk-neutral through strongly risk-averse behaviour across scenario
        sizes.
        """
        return self.rate_unit() / self.utility_rate_scale_mbps

    def urllc_rb_power_w(self) -> float:
        """Per-RB URLLC transmit power: full budget split evenly over RBs."""
        return self.max_power_w / self.num_rbs

    def validate(self) -> "ScenarioConfig":
        def require(cond: bool, field: str, msg: str) -> None:
            if not cond:
                raise ConfigError(f"{field}: {msg}")

        require(self.num_embb_users >= 1, "num_embb_users", "must be >= 1")
        require(self.num_urllc_users >= 1, "num_urllc_users", "must be >= 1")
        require(self.num_rbs >= 1, "num_rbs", "must be >= 1")
        require(self.minislots_per_slot >= 1, "minislots_per_slot", "must be >= 1")
        require(self.minislots_per_slot * self.cb_symbols == self.symbols_per_slot,
                "minislots_per_slot",
                f"mini-slots ({self.minislots_per_slot}) x symbols per mini-slot "
                f"({self.cb_symbols}) must equal symbols per slot ({self.symbols_per_slot})")
        require(self.cb_symbols >= 1, "cb_symbols", "must be >= 1")
        require(self.rb_bandwidth_hz > 0, "rb_bandwidth_hz", "must be > 0")
        require(self.slot_duration_s > 0, "slot_duration_s", "must be > 0")
        require(self.max_power_w > 0, "max_power_w", "must be > 0")
        require(self.noise_power_w > 0, "noise_power_w", "must be > 0")
        require(self.cell_radius_m > self.min_distance_m > 0,
                "cell_radius_m", "need 0 < min_distance_m < cell_radius_m")
        require(self.urllc_packet_bits > 0, "urllc_packet_bits", "must be > 0")
        require(self.arrival_rate >= 0, "arrival_rate", "must be >= 0")
        require(0.0 < self.outage_target < 1.0, "outage_target", "must lie in (0, 1)")
        require(0.0 < self.decoding_error < 1.0, "decoding_error", "must lie in (0, 1)")
        require(self.risk_param < 0, "risk_param", "must be negative (risk-averse)")
        require(self.utility_rate_scale_mbps > 0, "utility_rate_scale_mbps",
                "must be > 0")
        require(0.0 <= self.rounding_threshold <= 1.0, "rounding_threshold",
                "must lie in [0, 1]")
        require(self.penalty_weight < 0, "penalty_weight", "must be negative")
        require(self.saa_samples >= 1, "saa_samples", "must be >= 1")
        require(0.0 <= self.discount < 1.0, "discount", "must lie in [0, 1)")
        require(self.actor_lr > 0, "actor_lr", "must be > 0")
        require(self.critic_lr > 0, "critic_lr", "must be > 0")
        require(self.minibatch_size >= 1, "minibatch_size", "must be >= 1")
        require(self.replay_capacity >= 1, "replay_capacity", "must be >= 1")
        require(self.outage_window >= 1, "outage_window", "must be >= 1")
        require(self.warmstart_slots >= 0, "warmstart_slots", "must be >= 0")
        require(self.epsilon > 0, "epsilon", "must be > 0")
        require(self.max_outer_iterations >= 1, "max_outer_iterations", "must be >= 1")
        require(self.max_inner_iterations >= 1, "max_inner_iterations", "must be >= 1")
        return self

    def replace(self, **kwargs) -> "ScenarioConfig":
        return dataclasses.replace(self, **kwargs).validate()

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ScenarioConfig)}
_INT_FIELDS = {f.name for f in dataclasses.fields(ScenarioConfig) if f.type == "int"}


def _coerce(field: str, raw: str):
    raw = raw.strip()
    if field not in _FIELD_TYPES:
        raise ConfigError(f"{field}: unknown field")
    try:
        if field in _INT_FIELDS:
            return int(raw)
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{field}: cannot parse {raw!r}") from exc


def config_from_mapping(mapping: dict) -> ScenarioConfig:
    """Build a config from {field: value}, applying defaults for omitted keys."""
    coerced = {}
    for key, value in mapping.items():
        if isinstance(value, str):
            coerced[key] = _coerce(key, value)
        else:
            if key not in _FIELD_TYPES:
                raise ConfigError(f"{key}: unknown field")
            coerced[key] = int(value) if key in _INT_FIELDS else float(value)
    return ScenarioConfig(**coerced).validate()


def load_config(path: str) -> ScenarioConfig:
    """Parse an INI scenario file; sections are organisational only."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read and not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    flat: dict = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            if key in flat:
                raise ConfigError(f"{key}: defined more than once")
            flat[key] = value
    return config_from_mapping(flat)


def dump_config(cfg: ScenarioConfig, path: str) -> None:
    """Write a config snapshot in the same INI grammar load_config reads."""
    parser = configparser.ConfigParser()
    parser["scenario"] = {k: repr(v) for k, v in cfg.to_dict().items()}
    with open(path, "w") as fh:
        parser.write(fh)


def config_hash(cfg: ScenarioConfig) -> str:
    """Stable hash of the full parameter set, for run manifests."""
    canon = ";".join(f"{k}={cfg.to_dict()[k]!r}" for k in sorted(cfg.to_dict()))
    return hashlib.sha256(canon.encode()).hexdigest()
