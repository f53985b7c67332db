"""Discretized PES energy levels, the FD and HD Markov chains, and q_b.

Both chains are assembled from two per-block pmfs over whole discretization
steps:

* ``deh_pmf[k]``: the DEH harvest (all N_J antennas) floors to k steps;
* ``oeh_pmf[k]``: the energy SES hands to PES after an OEH block floors to
  k steps, including the atom produced by the SES capacity cap.

A state i that meets the energy condition moves by DEH with probability
1 - q_c and by OEH with probability q_c; below threshold it always harvests.
Upward moves are capped at level L.  Written out per (i, j) pair this gives
exactly the six transition cases (empty stays empty, full stays full,
unchanged, charged to full, partially charged, discharged).
"""
from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.linalg.lapack import dgecon

from .channels import SystemParams, rician_power_cdf

log = logging.getLogger(__name__)

# relative slack when flooring energy ratios, so that values such as
# eta' * C2 * L / C1 = 45 computed as 44.99999999999999 land on the exact level
_LEVEL_RTOL = 1e-9


class ChainError(RuntimeError):
    """The transition matrix does not admit a usable stationary distribution."""


class ReducibleChainError(ChainError):
    pass


def _floor_levels(ratio):
    return np.floor(np.asarray(ratio) * (1.0 + _LEVEL_RTOL)).astype(int)


@dataclass(frozen=True)
class EnergyStorageSpec:
    """PES/SES capacities and the discretization of the PES into L steps."""

    c1: float
    c2: float
    levels: int
    e_th: float

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("need at least one discretization level")
        if not self.c2 > 0:
            raise ValueError("SES capacity must be positive")
        if not self.e_th > 0:
            raise ValueError("energy threshold must be positive")
        if not self.c1 > self.e_th:
            raise ValueError(f"PES capacity {self.c1} must exceed the threshold {self.e_th}")
        if self.tau > self.levels:
            raise ValueError("tau exceeds L")
        if self.tau == self.levels:
            log.warning("tau == L: jamming is only possible from a full PES")

    @classmethod
    def for_params(cls, params: SystemParams, c1: float, c2: float, levels: int):
        return cls(c1=c1, c2=c2, levels=levels, e_th=params.e_th)

    @property
    def step(self) -> float:
        return self.c1 / self.levels

    @property
    def tau(self) -> int:
        """Number of steps the jamming threshold occupies (ceiling)."""
        r = self.e_th / self.step
        return max(1, int(math.ceil(r * (1.0 - _LEVEL_RTOL))))

    def level_energy(self, i):
        return np.asarray(i) * self.step

    def quantize(self, energy):
        """Index of the highest level not above ``energy`` (not capped at L)."""
        return _floor_levels(np.asarray(energy) / self.step)


@dataclass(frozen=True)
class TransitionMatrix:
    entries: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("transition matrix must be square")
        if np.any(m < -1e-15) or np.any(m > 1 + 1e-12):
            raise ValueError("transition probabilities must lie in [0, 1]")
        if np.max(np.abs(m.sum(axis=1) - 1.0)) > 1e-9:
            raise ValueError("transition matrix rows must sum to 1")
        object.__setattr__(self, "entries", m)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def to_csv(self, path) -> None:
        """Row-major dump, one matrix row per line, 17 significant digits."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            for row in self.entries:
                w.writerow([f"{v:.17g}" for v in row])

    @classmethod
    def from_csv(cls, path) -> "TransitionMatrix":
        return cls(np.loadtxt(path, delimiter=",", ndmin=2))


@dataclass(frozen=True)
class StationaryDistribution:
    xi: np.ndarray
    tau: int

    @property
    def ready_prob(self) -> float:
        """Long-run probability that the energy condition holds."""
        return float(np.clip(self.xi[self.tau:].sum(), 0.0, 1.0))


# -- building blocks -------------------------------------------------------

def channel_ready_prob(params: SystemParams) -> float:
    """Probability that the S->D capacity supports the secrecy rate."""
    if params.p_s == 0:
        return 0.0 if params.r_s > 0 else 1.0
    thr = (2.0**params.r_s - 1.0) * params.sigma2_d / params.p_s
    return math.exp(-thr / params.omega_sd)


def mean_deh_harvest(params: SystemParams) -> float:
    """Mean energy collected in a DEH block, eta P_S N_J Omega_SJ."""
    return params.eta * params.p_s * params.n_j * params.omega_sj


def mean_oeh_import(params: SystemParams) -> float:
    """Mean energy SES hands to an unbounded PES after an OEH block."""
    return params.eta * params.eta_prime * params.p_s * params.n_r * params.omega_sj


def _cdf_on_grid(n_ant: int, params: SystemParams, unit: float, kmax: int) -> np.ndarray:
    """F_H(k * unit) for k = 0..kmax, for an n_ant-antenna Rician channel."""
    if params.p_s == 0:
        # no incident power: the harvest is identically zero
        out = np.ones(kmax + 1)
        out[0] = 0.0
        return out
    return np.atleast_1d(rician_power_cdf(unit * np.arange(kmax + 1), n_ant, params))


def deh_level_pmf(params: SystemParams, storage: EnergyStorageSpec) -> np.ndarray:
    """pmf of the DEH harvest in whole steps, length L + 1 (last entry = >= L)."""
    L = storage.levels
    if params.p_s == 0:
        pmf = np.zeros(L + 1)
        pmf[0] = 1.0
        return pmf
    # harvest >= k steps  <=>  H_SJ^d >= k / (eta P_S L / C1)
    unit = 1.0 / (params.eta * params.p_s / storage.step)
    F = _cdf_on_grid(params.n_j, params, unit, L)
    pmf = np.empty(L + 1)
    pmf[:L] = np.diff(F)
    pmf[L] = 1.0 - F[L]
    return np.clip(pmf, 0.0, None)


def oeh_level_pmf(params: SystemParams, storage: EnergyStorageSpec, n_rx: int | None = None) -> np.ndarray:
    """pmf of the SES-to-PES import in whole steps, length L + tau + 1.

    The import is eta' * min(E_h^o, C2); the cap puts an atom on the level
    floor(eta' C2 / step).  Mass at index >= L + tau is lumped in the last
    entry, which already saturates the PES from any starting level.
    """
    L, tau = storage.levels, storage.tau
    top = L + tau
    n_rx = params.n_r if n_rx is None else n_rx
    pmf = np.zeros(top + 1)
    if params.p_s == 0:
        pmf[0] = 1.0
        return pmf
    cap = int(storage.quantize(params.eta_prime * storage.c2))
    last = min(cap, top)
    unit = 1.0 / (params.eta * params.eta_prime * params.p_s / storage.step)
    F = _cdf_on_grid(n_rx, params, unit, last)
    pmf[:last] = np.diff(F)
    pmf[last] = 1.0 - F[last]
    return np.clip(pmf, 0.0, None)


def _check_absorbing(m: np.ndarray) -> None:
    absorbing = np.flatnonzero(np.diag(m) >= 1.0 - 1e-15)
    top = m.shape[0] - 1
    if absorbing.tolist() == [top] and top > 0:
        # 1 - p_LL fell below double precision: the store is saturated and the
        # stationary law is the point mass at L, which the solve still returns
        log.info("full PES is numerically absorbing; stationary law concentrates on level L")
        return
    if absorbing.size and m.shape[0] > 1:
        raise ReducibleChainError(
            f"state(s) {absorbing.tolist()} are absorbing; the chain is reducible "
            "(e.g. the source never delivers a full discretization step)"
        )


def _assemble(storage: EnergyStorageSpec, q_c: float, deh: np.ndarray, oeh: np.ndarray | None) -> np.ndarray:
    L, tau = storage.levels, storage.tau
    n = L + 1
    m = np.zeros((n, n))
    # cumulative tails give "reaches L" mass without summing past the cap
    deh_tail = np.cumsum(deh[::-1])[::-1]
    oeh_tail = None if oeh is None else np.cumsum(oeh[::-1])[::-1]
    for i in range(n):
        w_deh = 1.0 if i < tau else 1.0 - q_c
        room = L - i
        m[i, i:L] += w_deh * deh[:room]
        m[i, L] += w_deh * deh_tail[room]
        if i < tau:
            continue
        if oeh is None:
            # HD jammer: jamming blocks harvest nothing, drop exactly tau levels
            m[i, i - tau] += q_c
            continue
        base = i - tau
        span = L - base
        m[i, base:L] += q_c * oeh[:span]
        m[i, L] += q_c * (oeh_tail[span] if span < oeh.size else 0.0)
    return m


def fd_transition_matrix(params: SystemParams, storage: EnergyStorageSpec) -> TransitionMatrix:
    """Transition matrix of the full-duplex jammer's PES level."""
    q_c = channel_ready_prob(params)
    m = _assemble(storage, q_c, deh_level_pmf(params, storage), oeh_level_pmf(params, storage))
    _check_absorbing(m)
    return TransitionMatrix(m)


def hd_transition_matrix(params: SystemParams, storage: EnergyStorageSpec) -> TransitionMatrix:
    """Transition matrix of the half-duplex jammer's single battery."""
    q_c = channel_ready_prob(params)
    m = _assemble(storage, q_c, deh_level_pmf(params, storage), None)
    _check_absorbing(m)
    return TransitionMatrix(m)


def stationary_distribution(m: TransitionMatrix, tau: int) -> StationaryDistribution:
    """Solve (M^T - I + B) xi = b with B all ones and b the ones vector."""
    n = m.dim
    a = m.entries.T - np.eye(n) + np.ones((n, n))
    with warnings.catch_warnings():
        # exact singularity is reported below through the condition estimate
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=True)
    rcond = _rcond(a, lu)
    if not rcond > 1e-14:
        raise ChainError(f"stationary system is singular (reciprocal condition ~ {rcond:.2e})")
    xi = scipy.linalg.lu_solve((lu, piv), np.ones(n))
    if np.min(xi) < -1e-12:
        raise ChainError(f"stationary solve produced a negative probability {np.min(xi):.3e}")
    xi = np.clip(xi, 0.0, None)
    xi = xi / xi.sum()
    return StationaryDistribution(xi=xi, tau=tau)


def _rcond(a: np.ndarray, lu: np.ndarray) -> float:
    anorm = np.linalg.norm(a, 1)
    rc, info = dgecon(lu, anorm, norm="1")
    return float(rc) if info == 0 else 0.0


def fd_stationary(params: SystemParams, storage: EnergyStorageSpec) -> StationaryDistribution:
    return stationary_distribution(fd_transition_matrix(params, storage), storage.tau)


def hd_stationary(params: SystemParams, storage: EnergyStorageSpec) -> StationaryDistribution:
    return stationary_distribution(hd_transition_matrix(params, storage), storage.tau)


def infinite_capacity_ready_prob(params: SystemParams) -> float:
    """Energy-ready probability of an unbounded, continuous PES/SES.

    If OEH imports alone cover the threshold on average the store grows
    without bound and the condition always holds; otherwise long-run energy
    balance fixes the ready fraction.  Corners where the balance value exceeds
    one are transient as well and are clamped to 1.
    """
    q_c = channel_ready_prob(params)
    if q_c == 0.0:
        raise ChainError("channel condition never holds (q_c = 0); no OEH blocks occur")
    e_d = mean_deh_harvest(params)
    e_o = mean_oeh_import(params)
    if params.e_th < e_o:
        return 1.0
    q_b = e_d / (q_c * (params.e_th + e_d - e_o))
    return min(1.0, q_b)
