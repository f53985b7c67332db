"""Closed-form secrecy outage and non-zero secrecy capacity probabilities.

Both metrics factor as (energy-ready probability) x (a channel-only term), so
the same code serves the finite FD chain, the HD benchmark (all N_J antennas
jam) and the infinite-capacity bound; only the ready probability and the
number of jamming antennas change.
"""
from __future__ import annotations

import enum
import logging
import math
from concurrent.futures import Executor
from dataclasses import dataclass, replace

from .channels import SystemParams, eve_sinr_cdf, varphi
from .energy_chain import (
    ChainError,
    EnergyStorageSpec,
    fd_stationary,
    hd_stationary,
    infinite_capacity_ready_prob,
)
from .specfun import DomainError, scaled_ei_neg, scaled_expn

log = logging.getLogger(__name__)


class Variant(str, enum.Enum):
    FD_FINITE = "FD-finite"
    HD_FINITE = "HD-finite"
    FD_INFINITE = "FD-infinite"


# -- Psi functions -----------------------------------------------------------

def _check_mu_beta(mu, beta):
    if not (mu > 0 and beta > 0):
        raise DomainError("Psi functions need mu > 0 and beta > 0")


def psi1(n: int, mu: float, beta: float) -> float:
    """(n-1)/beta - (-mu)^(n-1) e^(beta mu) Ei(-beta mu), for n in {1, 2}."""
    if n not in (1, 2):
        raise DomainError("psi1 is defined for n = 1 or 2")
    _check_mu_beta(mu, beta)
    x = beta * mu
    if n == 2 and x > 1.0:
        # 1/beta + mu e^x Ei(-x) cancels badly for large x; use e^x E_2(x) / beta
        return scaled_expn(2, x) / beta
    return (n - 1) / beta - (-mu) ** (n - 1) * scaled_ei_neg(x)


def psi2(n: int, mu: float, beta: float) -> float:
    """Finite-sum form of int_0^inf e^(-mu x) (x + beta)^(-n) dx, n >= 2.

    For beta*mu > 1 the alternating sum loses digits, so there the same
    integral is evaluated as beta^(1-n) e^(beta mu) E_n(beta mu).
    """
    if int(n) != n or n < 2:
        raise DomainError("psi2 needs an integer n >= 2")
    _check_mu_beta(mu, beta)
    x = beta * mu
    if x > 1.0:
        return beta ** (1 - n) * scaled_expn(n, x)
    return _psi2_sum(n, mu, beta, x)


def _psi2_sum(n, mu, beta, x):
    # beta^(n-1) * Psi_2 = 1/(n-1)! [sum_k (k-1)! (-x)^(n-k-1) - (-x)^(n-1) e^x Ei(-x)]
    acc = 0.0
    for k in range(1, n):
        acc += math.factorial(k - 1) * (-x) ** (n - k - 1)
    acc -= (-x) ** (n - 1) * scaled_ei_neg(x)
    return acc / math.factorial(n - 1) * beta ** (1 - n)


# -- constants -----------------------------------------------------------------

@dataclass(frozen=True)
class SecrecyConstants:
    kappa1: float
    kappa2: float
    varphi: float
    beta1: float
    beta2: float
    mu1: float
    mu2: float
    n_jam: int

    @classmethod
    def from_params(cls, params: SystemParams, n_jam: int) -> "SecrecyConstants":
        if n_jam < 2:
            raise DomainError("secrecy metrics need at least 2 jamming antennas")
        if params.p_s <= 0:
            raise DomainError("secrecy metrics need p_s > 0")
        leak = (1.0 - params.rho) * params.p_j * params.sigma2_err / (n_jam - 1)
        k1 = params.p_s / (leak + params.sigma2_d)
        k2 = params.p_s / params.sigma2_d
        phi = varphi(params)
        s = params.sigma2_e / (params.p_s * params.omega_se)
        g = 2.0**params.r_s
        return cls(
            kappa1=k1,
            kappa2=k2,
            varphi=phi,
            beta1=(n_jam - 1) / phi,
            beta2=(g - 1.0) * k1 / k2,
            mu1=g / (k1 * params.omega_sd) + s,
            mu2=1.0 / (k1 * params.omega_sd) + s,
            n_jam=n_jam,
        )


def _noise_ratio(params: SystemParams) -> float:
    return params.sigma2_e / (params.p_s * params.omega_se)


def _eve_mixture(params: SystemParams, c: SecrecyConstants, mu: float, beta: float) -> float:
    """Eavesdropper-SINR integral shared by both metrics, written through Psi.

    Equals int_0^inf e^(-(mu - s) z) f_E(z) dz for the eavesdropper SINR
    density f_E, with ``beta`` possibly shifted by beta2 for P_nzsc.
    """
    n = c.n_jam
    s = _noise_ratio(params)
    if n == 2:
        return (s * psi1(1, mu, beta) + psi1(2, mu, beta)) / c.varphi
    return (s * psi2(n - 1, mu, beta) + (n - 1) * psi2(n, mu, beta)) * c.beta1 ** (n - 1)


def outage_given_ready(params: SystemParams, n_jam: int) -> float:
    """Pr{C_s >= R_s and C_SD >= R_s}, i.e. the secure fraction of OEH-eligible blocks."""
    c = SecrecyConstants.from_params(params, n_jam)
    lead = math.exp(-(2.0**params.r_s - 1.0) / (c.kappa1 * params.omega_sd))
    return lead * _eve_mixture(params, c, c.mu1, c.beta1)


def nonzero_given_ready(params: SystemParams, n_jam: int) -> float:
    """Pr{C_s > 0 and C_SD >= R_s} (the channel-only factor of P_nzsc)."""
    c = SecrecyConstants.from_params(params, n_jam)
    head = _eve_mixture(params, c, c.mu2, c.beta1 + c.beta2) * math.exp(-c.beta2 * c.mu2)
    tail = math.exp(-(2.0**params.r_s - 1.0) / (c.kappa2 * params.omega_sd)) * eve_sinr_cdf(
        c.beta2, params, n_jam
    )
    return head + tail


def _check_ready(ready_prob):
    if not 0.0 <= ready_prob <= 1.0:
        raise ValueError("ready_prob must lie in [0, 1]")


def secrecy_outage(params: SystemParams, ready_prob: float, n_jam_antennas: int) -> float:
    """Secrecy outage probability for a given energy-ready probability."""
    _check_ready(ready_prob)
    if n_jam_antennas < 2:
        raise DomainError("need at least 2 jamming antennas")
    if ready_prob == 0.0:
        return 1.0
    p = 1.0 - ready_prob * outage_given_ready(params, n_jam_antennas)
    return min(1.0, max(0.0, p))


def prob_nonzero_secrecy(params: SystemParams, ready_prob: float, n_jam_antennas: int) -> float:
    """Probability of a strictly positive secrecy capacity."""
    _check_ready(ready_prob)
    if n_jam_antennas < 2:
        raise DomainError("need at least 2 jamming antennas")
    if ready_prob == 0.0:
        return 0.0
    p = ready_prob * nonzero_given_ready(params, n_jam_antennas)
    return min(1.0, max(0.0, p))


# -- reports -------------------------------------------------------------------

@dataclass(frozen=True)
class SecrecyReport:
    variant: Variant
    p_so: float
    p_nzsc: float
    ready_prob: float
    constants: SecrecyConstants

    def __post_init__(self):
        if not (0 <= self.p_so <= 1 and 0 <= self.p_nzsc <= 1):
            raise ValueError("probabilities out of range")


def report(params: SystemParams, variant: Variant | str, storage: EnergyStorageSpec | None = None) -> SecrecyReport:
    """Full pipeline for one variant: chain (or q_b), then both metrics."""
    variant = Variant(variant)
    if variant is Variant.FD_INFINITE:
        ready = infinite_capacity_ready_prob(params)
        n_jam = params.n_t
    else:
        if storage is None:
            raise ValueError(f"{variant.value} needs an EnergyStorageSpec")
        if variant is Variant.FD_FINITE:
            ready = fd_stationary(params, storage).ready_prob
            n_jam = params.n_t
        else:
            ready = hd_stationary(params, storage).ready_prob
            n_jam = params.n_j
    return SecrecyReport(
        variant=variant,
        p_so=secrecy_outage(params, ready, n_jam),
        p_nzsc=prob_nonzero_secrecy(params, ready, n_jam),
        ready_prob=ready,
        constants=SecrecyConstants.from_params(params, n_jam),
    )


def _candidate_outage(params: SystemParams, storage: EnergyStorageSpec, p_j: float, variant: Variant):
    cand = replace(params, p_j=p_j)
    try:
        st = EnergyStorageSpec.for_params(cand, storage.c1, storage.c2, storage.levels)
        return report(cand, variant, st).p_so
    except (ValueError, ChainError) as exc:
        log.info("P_J = %.4g W rejected: %s", p_j, exc)
        return None


@dataclass(frozen=True)
class JammingSearch:
    p_j_star: float
    p_so_min: float
    grid: tuple[float, ...]
    p_so: tuple[float | None, ...]

    @property
    def feasible(self) -> list[int]:
        return [i for i, v in enumerate(self.p_so) if v is not None]

    @property
    def interior(self) -> bool:
        """Minimizer sits strictly inside the feasible part of the grid."""
        idx = self.feasible
        best = self.grid.index(self.p_j_star)
        return idx[0] < best < idx[-1]


def optimal_jamming_power(
    params: SystemParams,
    storage: EnergyStorageSpec,
    grid,
    variant: Variant | str = Variant.FD_FINITE,
    executor: Executor | None = None,
) -> JammingSearch:
    """Exhaustive search over candidate jamming powers (watts).

    The threshold E_th = P_J + P_c, tau, the chain and its stationary law are
    rebuilt for every candidate.  Candidates that violate the storage
    invariants (e.g. tau > L) are skipped.  Ties go to the smaller P_J.
    """
    grid = tuple(sorted(float(g) for g in grid))
    if not grid:
        raise ValueError("jamming-power grid is empty")
    variant = Variant(variant)
    args = [(params, storage, pj, variant) for pj in grid]
    if executor is None:
        vals = [_candidate_outage(*a) for a in args]
    else:
        vals = list(executor.map(_candidate_outage, *zip(*args)))
    best = None
    for pj, v in zip(grid, vals):
        if v is not None and (best is None or v < best[1]):
            best = (pj, v)
    if best is None:
        raise ChainError("no feasible jamming power in the grid")
    return JammingSearch(p_j_star=best[0], p_so_min=best[1], grid=grid, p_so=tuple(vals))
