"""Per-slot metric capture and the aggregate statistics behind the figures.

One MetricsLog per run; records are append-only and aggregation is pure.
CSV columns of slots.csv, in order:

    t, rate_user_0..rate_user_{K-1}, sum_rate, urllc_rate,
    arrivals, outage, reward, phi

with all rates in bits/slot formatted as %.10g so identical runs produce
byte-identical files.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


@dataclass
class SlotRecord:
    t: int
    user_rates: np.ndarray   # (K,) bits/slot, executed allocation
    urllc_rate: float        # bits/slot
    arrivals: int
    outage: int
    reward: float
    phi: float

    @property
    def sum_rate(self) -> float:
        return float(np.sum(self.user_rates))


@dataclass
class MetricsLog:
    num_users: int
    records: list = field(default_factory=list)

    def add(self, record: SlotRecord) -> None:
        if record.user_rates.shape != (self.num_users,):
            raise ValueError("record user count does not match the log")
        if record.outage not in (0, 1):
            raise ValueError("outage indicator must be 0 or 1")
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    # -- column views ----------------------------------------------------

    def user_rate_matrix(self) -> np.ndarray:
        if not self.records:
            return np.zeros((0, self.num_users))
        return np.stack([r.user_rates for r in self.records])

    def sum_rates(self) -> np.ndarray:
        return np.array([r.sum_rate for r in self.records])

    def urllc_rates(self) -> np.ndarray:
        return np.array([r.urllc_rate for r in self.records])

    def outages(self) -> np.ndarray:
        return np.array([r.outage for r in self.records], dtype=int)

    def rewards(self) -> np.ndarray:
        return np.array([r.reward for r in self.records])

    def phis(self) -> np.ndarray:
        return np.array([r.phi for r in self.records])

    # -- CSV ---------------------------------------------------------------

    def header(self) -> list:
        return (["t"] + [f"rate_user_{k}" for k in range(self.num_users)]
                + ["sum_rate", "urllc_rate", "arrivals", "outage",
                   "reward", "phi"])

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.header())
            for r in self.records:
                row = ([r.t] + [f"{v:.10g}" for v in r.user_rates]
                       + [f"{r.sum_rate:.10g}", f"{r.urllc_rate:.10g}",
                          r.arrivals, r.outage,
                          f"{r.reward:.10g}", f"{r.phi:.10g}"])
                writer.writerow(row)

    @classmethod
    def from_csv(cls, path: str) -> "MetricsLog":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            num_users = sum(1 for c in header if c.startswith("rate_user_"))
            log = cls(num_users=num_users)
            for row in reader:
                log.add(SlotRecord(
                    t=int(row[0]),
                    user_rates=np.array([float(v) for v in
                                         row[1:1 + num_users]]),
                    urllc_rate=float(row[2 + num_users]),
                    arrivals=int(row[3 + num_users]),
                    outage=int(row[4 + num_users]),
                    reward=float(row[5 + num_users]),
                    phi=float(row[6 + num_users])))
        return log


# -- aggregate statistics ---------------------------------------------------

def jain_index(rates) -> float:
    """Fairness (sum r)^2 / (K sum r^2) in [1/K, 1]; 1 for the all-zero vector."""
    r = np.asarray(rates, dtype=float)
    if r.size == 0:
        raise ValueError("empty rate vector")
    total_sq = r.sum() ** 2
    denom = r.size * (r ** 2).sum()
    if denom == 0:
        return 1.0
    return float(total_sq / denom)


def embb_reliability(rate_matrix, r_min: float) -> float:
    """Fraction of (slot, user) samples at or above the target rate."""
    rates = np.atleast_2d(np.asarray(rate_matrix, dtype=float))
    if rates.size == 0:
        raise ValueError("empty rate history")
    return float((rates >= r_min).mean())


def outage_series(indicators, window: int) -> np.ndarray:
    """Sliding mean of the outage bits over the trailing ``window`` slots.

    Early entries average over however many slots exist so far.
    """
    x = np.asarray(indicators, dtype=float)
    if window < 1:
        raise ValueError("window must be >= 1")
    cums = np.concatenate([[0.0], np.cumsum(x)])
    t = np.arange(1, x.size + 1)
    lo = np.maximum(t - window, 0)
    return (cums[t] - cums[lo]) / (t - lo)


def ccdf(samples):
    """Empirical complementary CDF as (value, P[X >= value]) pairs.

    Values are the sorted unique samples; the tail probability at the
    minimum is 1 and the sequence is non-increasing.
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("empty sample set")
    values, counts = np.unique(x, return_counts=True)
    tail = 1.0 - np.concatenate([[0], np.cumsum(counts)[:-1]]) / x.size
    return list(zip(values.tolist(), tail.tolist()))


def pdf_histogram(samples):
    """Density histogram with Freedman-Diaconis bin widths."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("empty sample set")
    density, edges = np.histogram(x, bins="fd", density=True)
    return density, edges


# -- plots -------------------------------------------------------------------

def _plt():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def plot_outage_convergence(outage_windows: dict, theta_max: float,
                            path: str) -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, series in outage_windows.items():
        ax.plot(series, label=label)
    ax.axhline(theta_max, linestyle="--", color="k", label="target")
    ax.set_xlabel("slot")
    ax.set_ylabel("windowed outage")
    ax.legend()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_ccdf(sample_sets: dict, path: str, xlabel: str = "value") -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, samples in sample_sets.items():
        pairs = ccdf(samples)
        xs = [v for v, _ in pairs]
        ys = [p for _, p in pairs]
        ax.step(xs, ys, where="post", label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("CCDF")
    ax.set_yscale("log")
    ax.legend()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_fairness(jain_by_label: dict, path: str) -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4))
    labels = list(jain_by_label)
    ax.bar(labels, [jain_by_label[l] for l in labels])
    ax.set_ylabel("Jain index")
    ax.set_ylim(0, 1.05)
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_reliability(reliability_by_label: dict, r_min_mbps, path: str) -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, values in reliability_by_label.items():
        ax.plot(r_min_mbps, values, marker="o", label=label)
    ax.set_xlabel("target rate (Mbps)")
    ax.set_ylabel("reliability")
    ax.set_ylim(0, 1.05)
    ax.legend()
    fig.savefig(path, format="svg")
    plt.close(fig)
