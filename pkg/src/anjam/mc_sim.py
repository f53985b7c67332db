"""Block-level Monte Carlo of the accumulate-and-jam protocol and its HD benchmark.

Per block the simulator draws every channel gain, picks the mode from the
jammer's current PES level and the S->D channel, updates the level with the
discretized harvest, and scores the secrecy events.  All random draws for a
block are taken whether or not the mode uses them, so the sample path of one
quantity never depends on another's mode decisions.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import Executor
from dataclasses import dataclass, field

import numpy as np

from .channels import RngStream, SystemParams, sample_exponential, sample_gamma, sample_rician_power
from .energy_chain import EnergyStorageSpec

BURN_IN_FRACTION = 0.01
_CHUNK = 1 << 18


@dataclass
class TrialStats:
    levels: int
    blocks: int = 0
    outage_count: int = 0
    nzsc_count: int = 0
    deh_count: int = 0
    oeh_count: int = 0
    ready_count: int = 0
    level_histogram: np.ndarray = None
    transition_counts: np.ndarray = None

    def __post_init__(self):
        n = self.levels + 1
        if self.level_histogram is None:
            self.level_histogram = np.zeros(n, dtype=np.int64)
        if self.transition_counts is None:
            self.transition_counts = np.zeros((n, n), dtype=np.int64)

    def __add__(self, other: "TrialStats") -> "TrialStats":
        if other.levels != self.levels:
            raise ValueError("cannot merge statistics over different level counts")
        return TrialStats(
            levels=self.levels,
            blocks=self.blocks + other.blocks,
            outage_count=self.outage_count + other.outage_count,
            nzsc_count=self.nzsc_count + other.nzsc_count,
            deh_count=self.deh_count + other.deh_count,
            oeh_count=self.oeh_count + other.oeh_count,
            ready_count=self.ready_count + other.ready_count,
            level_histogram=self.level_histogram + other.level_histogram,
            transition_counts=self.transition_counts + other.transition_counts,
        )

    def check(self) -> None:
        assert self.deh_count + self.oeh_count == self.blocks
        assert int(self.level_histogram.sum()) == self.blocks
        assert int(self.transition_counts.sum()) == self.blocks


@dataclass(frozen=True)
class BatchRecord:
    seed: int
    stream_id: int
    batch: int
    stats: TrialStats


@dataclass
class SimulationResult:
    stats: TrialStats
    batches: list[BatchRecord] = field(default_factory=list)

    def batches_to_csv(self, path) -> None:
        """One row per batch: seed, stream, batch index, blocks and event counts."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["seed", "stream_id", "batch", "blocks", "outage_count", "nzsc_count",
                        "deh_count", "oeh_count", "ready_count"])
            for b in self.batches:
                s = b.stats
                w.writerow([b.seed, b.stream_id, b.batch, s.blocks, s.outage_count, s.nzsc_count,
                            s.deh_count, s.oeh_count, s.ready_count])


def _block_draws(params, storage, n, rng, duplex, sampled_leakage):
    """Per-block quantities that do not depend on the PES level."""
    L = storage.levels
    p = params
    n_jam = p.n_t if duplex == "fd" else p.n_j
    h_sd = sample_exponential(p.omega_sd, rng, n)
    if p.p_s > 0:
        ch_ok = h_sd >= (2.0**p.r_s - 1.0) * p.sigma2_d / p.p_s
    else:
        ch_ok = np.full(n, p.r_s == 0)

    k_d = np.minimum(storage.quantize(p.eta * p.p_s * sample_rician_power(p.n_j, p, rng, n)), L)
    if duplex == "fd":
        e_o = p.eta * p.p_s * sample_rician_power(p.n_r, p, rng, n)
        k_o = np.minimum(storage.quantize(p.eta_prime * np.minimum(e_o, storage.c2)), L + storage.tau)
    else:
        k_o = np.zeros(n, dtype=int)

    x = sample_exponential(p.p_s * p.omega_se, rng, n)
    y = sample_gamma(n_jam - 1, p.p_j * p.omega_je / (n_jam - 1), rng, n)
    gamma_e = x / (y + p.sigma2_e)
    if sampled_leakage:
        g = sample_gamma(n_jam - 1, p.sigma2_err, rng, n)
        leak = (1.0 - p.rho) * p.p_j * g / (n_jam - 1)
    else:
        leak = (1.0 - p.rho) * p.p_j * p.sigma2_err / (n_jam - 1)
    gamma_d = p.p_s * h_sd / (leak + p.sigma2_d)
    c_s = np.where(gamma_d > gamma_e, np.log2(1.0 + gamma_d) - np.log2(1.0 + gamma_e), 0.0)
    return ch_ok, k_d, k_o, c_s >= p.r_s, c_s > 0


def _walk(level, tau, L, ch_ok, k_d, k_o, hd):
    """Level path over one chunk; returns the levels at the start of each block."""
    starts = np.empty(len(ch_ok), dtype=np.int64)
    ok = ch_ok.tolist()
    kd = k_d.tolist()
    ko = k_o.tolist()
    for b in range(len(ok)):
        starts[b] = level
        if level >= tau and ok[b]:
            level = level - tau if hd else min(level - tau + ko[b], L)
        else:
            level = min(level + kd[b], L)
    return starts, level


def _step(levels, tau, L, ch_ok, k_d, k_o, hd):
    """One block of the level rule applied elementwise to an array of start levels."""
    transmit = (levels >= tau) & ch_ok
    after_tx = levels - tau if hd else np.minimum(levels - tau + k_o, L)
    return np.where(transmit, after_tx, np.minimum(levels + k_d, L))


def sample_transitions(
    params: SystemParams,
    storage: EnergyStorageSpec,
    n_blocks: int,
    rng: RngStream,
    duplex: str = "fd",
) -> np.ndarray:
    """Transition counts from one-block trials started round-robin at every level.

    A stationary run rarely visits levels with negligible stationary mass;
    this sampler gives every row of the transition matrix about
    ``n_blocks / (L + 1)`` independent trials of the same block rule.
    """
    if n_blocks < 1:
        raise ValueError("n_blocks must be >= 1")
    if duplex not in ("fd", "hd"):
        raise ValueError("duplex must be 'fd' or 'hd'")
    L, tau = storage.levels, storage.tau
    counts = np.zeros((L + 1) ** 2, dtype=np.int64)
    done = 0
    while done < n_blocks:
        n = min(_CHUNK, n_blocks - done)
        ch_ok, k_d, k_o, _, _ = _block_draws(params, storage, n, rng, duplex, False)
        starts = np.arange(done, done + n) % (L + 1)
        ends = _step(starts, tau, L, ch_ok, k_d, k_o, duplex == "hd")
        counts += np.bincount(starts * (L + 1) + ends, minlength=(L + 1) ** 2)
        done += n
    return counts.reshape(L + 1, L + 1)


def _simulate_batch(params, storage, n_blocks, rng, duplex, sampled_leakage, burn_in):
    L, tau = storage.levels, storage.tau
    stats = TrialStats(levels=L)
    level = 0
    done = 0
    while done < n_blocks:
        n = min(_CHUNK, n_blocks - done)
        ch_ok, k_d, k_o, secure, nz = _block_draws(params, storage, n, rng, duplex, sampled_leakage)
        starts, level = _walk(level, tau, L, ch_ok, k_d, k_o, duplex == "hd")
        ends = np.empty_like(starts)
        ends[:-1] = starts[1:]
        ends[-1] = level
        keep = np.arange(done, done + n) >= burn_in
        ready = starts >= tau
        oeh = ready & ch_ok & keep
        stats.blocks += int(keep.sum())
        stats.oeh_count += int(oeh.sum())
        stats.deh_count += int((keep & ~oeh).sum())
        stats.ready_count += int((ready & keep).sum())
        stats.outage_count += int((keep & ~(oeh & secure)).sum())
        stats.nzsc_count += int((oeh & nz).sum())
        stats.level_histogram += np.bincount(starts[keep], minlength=L + 1)
        pairs = starts[keep] * (L + 1) + ends[keep]
        stats.transition_counts += np.bincount(pairs, minlength=(L + 1) ** 2).reshape(L + 1, L + 1)
        done += n
    return stats


def simulate(
    params: SystemParams,
    storage: EnergyStorageSpec,
    n_blocks: int,
    rng: RngStream,
    duplex: str = "fd",
    n_batches: int = 1,
    sampled_leakage: bool = False,
    executor: Executor | None = None,
) -> SimulationResult:
    """Run ``n_batches`` independent chains totalling ``n_blocks`` blocks.

    Each batch starts from an empty PES, drops its first 1% of blocks as
    burn-in, and draws from its own substream of ``rng``.  Counts are merged
    by summation, so the result does not depend on completion order.
    """
    if n_blocks < 1:
        raise ValueError("n_blocks must be >= 1")
    if duplex not in ("fd", "hd"):
        raise ValueError("duplex must be 'fd' or 'hd'")
    n_batches = max(1, min(n_batches, n_blocks))
    sizes = [n_blocks // n_batches + (i < n_blocks % n_batches) for i in range(n_batches)]
    jobs = []
    for i, size in enumerate(sizes):
        sub = rng if n_batches == 1 else rng.substream(i)
        burn = int(math.ceil(BURN_IN_FRACTION * size)) if size > 1 else 0
        jobs.append((params, storage, size, sub, duplex, sampled_leakage, burn))
    if executor is None:
        parts = [_simulate_batch(*j) for j in jobs]
    else:
        parts = list(executor.map(_simulate_batch, *zip(*jobs)))
    total = parts[0]
    for p in parts[1:]:
        total = total + p
    records = [BatchRecord(rng.seed, rng.stream_id, i, s) for i, s in enumerate(parts)]
    return SimulationResult(stats=total, batches=records)


def simulate_fd(params, storage, n_blocks, rng, **kw) -> TrialStats:
    return simulate(params, storage, n_blocks, rng, duplex="fd", **kw).stats


def simulate_hd(params, storage, n_blocks, rng, **kw) -> TrialStats:
    return simulate(params, storage, n_blocks, rng, duplex="hd", **kw).stats


def simulate_unbounded_storage(params: SystemParams, n_blocks: int, rng: RngStream, capacity: float) -> float:
    """Fraction of energy-ready blocks for an undiscretized store with a huge cap.

    SES is unbounded and PES holds up to ``capacity``; used to check the
    infinite-capacity ready probability.
    """
    p = params
    e_th = p.e_th
    burn = int(math.ceil(BURN_IN_FRACTION * n_blocks))
    energy = 0.0
    ready_blocks = 0
    done = 0
    thr = (2.0**p.r_s - 1.0) * p.sigma2_d / p.p_s
    while done < n_blocks:
        n = min(_CHUNK, n_blocks - done)
        ok = (sample_exponential(p.omega_sd, rng, n) >= thr).tolist()
        e_d = (p.eta * p.p_s * sample_rician_power(p.n_j, p, rng, n)).tolist()
        e_o = (p.eta * p.eta_prime * p.p_s * sample_rician_power(p.n_r, p, rng, n)).tolist()
        for b in range(n):
            ready = energy >= e_th
            if done + b >= burn and ready:
                ready_blocks += 1
            if ready and ok[b]:
                energy = min(energy - e_th + e_o[b], capacity)
            else:
                energy = min(energy + e_d[b], capacity)
        done += n
    return ready_blocks / (n_blocks - burn)


@dataclass(frozen=True)
class EmpiricalReport:
    blocks: int
    p_so: float
    p_so_se: float
    p_nzsc: float
    p_nzsc_se: float
    ready_freq: float
    ready_se: float
    oeh_freq: float
    occupancy: np.ndarray
    transition_matrix: np.ndarray
    row_visits: np.ndarray


def _freq(count, n):
    p = count / n
    return p, math.sqrt(p * (1.0 - p) / n)


def estimate(stats: TrialStats) -> EmpiricalReport:
    """Maximum-likelihood frequencies with binomial standard errors."""
    if stats.blocks <= 0:
        raise ValueError("no blocks were recorded")
    n = stats.blocks
    p_so, se_so = _freq(stats.outage_count, n)
    p_nz, se_nz = _freq(stats.nzsc_count, n)
    ready, se_ready = _freq(stats.ready_count, n)
    visits = stats.transition_counts.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        tm = np.where(visits[:, None] > 0, stats.transition_counts / visits[:, None], 0.0)
    return EmpiricalReport(
        blocks=n,
        p_so=p_so,
        p_so_se=se_so,
        p_nzsc=p_nz,
        p_nzsc_se=se_nz,
        ready_freq=ready,
        ready_se=se_ready,
        oeh_freq=stats.oeh_count / n,
        occupancy=stats.level_histogram / n,
        transition_matrix=tm,
        row_visits=visits,
    )
