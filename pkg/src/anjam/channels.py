"""Channel laws and samplers for the source/jammer/destination/eavesdropper links.

Power quantities are linear (watts), block length is normalized to one so
energies per block equal powers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .specfun import marcum_q_complement


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    return 10.0 * math.log10(watts) + 30.0


def db_to_linear(db: float) -> float:
    # -inf dB maps to 0 (pure Rayleigh for the Rician K-factor)
    return 0.0 if db == -math.inf else 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class Topology:
    """Linear placement S - J - E - D along a line, distances in meters."""

    d_sj: float = 5.0
    d_se: float = 20.0
    d_sd: float = 30.0
    alpha: float = 3.0

    def __post_init__(self):
        if not (0 < self.d_sj < self.d_se < self.d_sd):
            raise ValueError("topology needs 0 < d_sj < d_se < d_sd")
        if not self.alpha > 0:
            raise ValueError("path-loss exponent must be positive")

    @property
    def d_je(self) -> float:
        return self.d_se - self.d_sj

    @property
    def d_jd(self) -> float:
        return self.d_sd - self.d_sj


def path_gain(d: float, alpha: float) -> float:
    return 1.0 / (1.0 + d**alpha)


def omegas_from_topology(topo: Topology) -> dict[str, float]:
    """Average power gain 1/(1 + d^alpha) of every link."""
    dist = {"sj": topo.d_sj, "sd": topo.d_sd, "se": topo.d_se, "jd": topo.d_jd, "je": topo.d_je}
    return {k: path_gain(d, topo.alpha) for k, d in dist.items()}


_POSITIVE = ("p_s", "p_j", "p_c", "sigma2_d", "sigma2_e", "sigma2_err",
             "omega_sj", "omega_sd", "omega_se", "omega_jd", "omega_je")


@dataclass(frozen=True)
class SystemParams:
    """Physical and protocol scalars, all in linear units.

    ``n_j`` is not stored: it is always ``n_t + n_r``.
    """

    p_s: float
    p_j: float
    p_c: float
    sigma2_d: float
    sigma2_e: float
    sigma2_err: float
    rho: float
    r_s: float
    n_t: int
    n_r: int
    k_rician: float
    omega_sj: float
    omega_sd: float
    omega_se: float
    omega_jd: float
    omega_je: float
    eta: float = 0.5
    eta_prime: float = 0.9

    def __post_init__(self):
        # p_s == 0 is allowed so the "source silent" corner can be simulated
        for name in _POSITIVE:
            v = getattr(self, name)
            if name == "p_s":
                if not v >= 0:
                    raise ValueError("p_s must be >= 0")
            elif not v > 0:
                raise ValueError(f"{name} must be positive, got {v!r}")
        if self.n_t < 2:
            raise ValueError("null-space jamming needs n_t >= 2")
        if self.n_r < 1:
            raise ValueError("n_r must be >= 1")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        if self.r_s < 0:
            raise ValueError("r_s must be >= 0")
        if self.k_rician < 0:
            raise ValueError("Rician K-factor must be >= 0")
        if not (0 < self.eta <= 1 and 0 < self.eta_prime <= 1):
            raise ValueError("efficiencies must lie in (0, 1]")

    @property
    def n_j(self) -> int:
        return self.n_t + self.n_r

    @property
    def e_th(self) -> float:
        """Per-block energy needed for a jamming block (jamming + circuitry)."""
        return self.p_j + self.p_c

    def with_(self, **changes) -> "SystemParams":
        return replace(self, **changes)

    @classmethod
    def from_topology(cls, topo: Topology, **kw) -> "SystemParams":
        om = omegas_from_topology(topo)
        kw.setdefault("sigma2_err", om["jd"])
        return cls(omega_sj=om["sj"], omega_sd=om["sd"], omega_se=om["se"],
                   omega_jd=om["jd"], omega_je=om["je"], **kw)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


# -- distribution functions --------------------------------------------------

def rician_power_cdf(x, n_antennas: int, params: SystemParams):
    """CDF of ||h||^2 for an n-antenna Rician S->J channel.

    Computed as the lower tail 1 - Q_n(sqrt(2nK), sqrt(2(K+1)x/Omega_SJ)),
    summed directly so that tiny probabilities keep their digits.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("power gain must be >= 0")
    k = params.k_rician
    a = math.sqrt(2.0 * n_antennas * k)
    b = np.sqrt(2.0 * (k + 1.0) * x / params.omega_sj)
    return marcum_q_complement(n_antennas, a, b)


def rayleigh_power_cdf(x, omega: float):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or not omega > 0:
        raise ValueError("need x >= 0 and omega > 0")
    out = -np.expm1(-x / omega)
    return float(out) if out.ndim == 0 else out


def varphi(params: SystemParams) -> float:
    """Jamming-to-signal gain ratio at the eavesdropper."""
    return params.p_j * params.omega_je / (params.p_s * params.omega_se)


def eve_sinr_cdf(z, params: SystemParams, n_jam: int | None = None):
    """CDF of the eavesdropper SINR X / (Y + sigma_E^2).

    ``n_jam`` is the number of jamming antennas (n_t for the full-duplex
    jammer, n_j for the half-duplex one).
    """
    n = params.n_t if n_jam is None else n_jam
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise ValueError("SINR must be >= 0")
    s = params.sigma2_e / (params.p_s * params.omega_se)
    phi = varphi(params)
    out = 1.0 - np.exp(-z * s) * ((n - 1) / (phi * z + n - 1)) ** (n - 1)
    return float(out) if out.ndim == 0 else out


def eve_sinr_pdf(z, params: SystemParams, n_jam: int | None = None):
    n = params.n_t if n_jam is None else n_jam
    z = np.asarray(z, dtype=float)
    s = params.sigma2_e / (params.p_s * params.omega_se)
    phi = varphi(params)
    g = (n - 1) / (phi * z + n - 1)
    out = np.exp(-z * s) * (s * g ** (n - 1) + phi * g**n)
    return float(out) if out.ndim == 0 else out


# -- sampling ------------------------------------------------------------------

@dataclass
class RngStream:
    """Reproducible random substream keyed by (seed, stream_id).

    Distinct stream ids give statistically independent sequences through
    numpy's SeedSequence spawn keys.
    """

    seed: int
    stream_id: int = 0
    _gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def substream(self, index: int) -> "RngStream":
        # nested key so substreams never collide with sibling stream ids
        child = RngStream.__new__(RngStream)
        child.seed = self.seed
        child.stream_id = self.stream_id
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id, index))
        child._gen = np.random.Generator(np.random.PCG64(ss))
        return child


def sample_rician_power(n_antennas: int, params: SystemParams, rng: RngStream, size=None):
    """Sample ||h||^2 with n i.i.d. Rician entries of mean power Omega_SJ.

    Each entry is a deterministic LoS amplitude sqrt(K Omega/(K+1)) plus a
    circular Gaussian with variance Omega/(K+1).
    """
    g = rng.generator
    k = params.k_rician
    om = params.omega_sj
    los = math.sqrt(k * om / (k + 1.0))
    sd = math.sqrt(om / (k + 1.0) / 2.0)
    shape = (n_antennas,) if size is None else (*np.atleast_1d(size), n_antennas)
    re = los + sd * g.standard_normal(shape)
    im = sd * g.standard_normal(shape)
    out = np.sum(re * re + im * im, axis=-1)
    return float(out) if size is None else out


def sample_exponential(omega: float, rng: RngStream, size=None):
    return rng.generator.exponential(omega, size)


def sample_gamma(shape: int, scale: float, rng: RngStream, size=None):
    """Integer-shape Gamma as a sum of ``shape`` exponentials."""
    if int(shape) != shape or shape < 1:
        raise ValueError("gamma shape must be a positive integer")
    g = rng.generator
    if size is None:
        return float(g.exponential(scale, int(shape)).sum())
    return g.exponential(scale, (*np.atleast_1d(size), int(shape))).sum(axis=-1)
