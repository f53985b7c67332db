"""Flat ``key = value`` experiment configuration.

Powers may be given in dBm (``*_dbm`` keys) or watts (``*_w`` keys).  The
dBm forms are converted once, here, and everything downstream sees watts.
Serialization always writes the watt forms with ``repr`` so that
parse -> serialize -> parse reproduces every field exactly.

Lines starting with ``#`` or ``;`` are comments and ``[section]`` headers
are accepted but ignored, so INI files from other tools load unchanged.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, fields, replace

from .channels import SystemParams, Topology, db_to_linear, dbm_to_watts, omegas_from_topology
from .energy_chain import EnergyStorageSpec

SWEEP_AXES = ("p_s_dbm", "p_j_dbm", "rho", "n_t_split", "rs", "L", "c1")
PJ_POLICIES = ("fixed", "optimal")


class ConfigError(ValueError):
    """Bad configuration text or values; ``lineno`` is 1-based when known."""

    def __init__(self, message: str, lineno: int | None = None, source: str = "config"):
        self.lineno = lineno
        self.source = source
        where = f"{source}:{lineno}: " if lineno is not None else f"{source}: "
        super().__init__(where + message)


@dataclass(frozen=True)
class Sweep:
    axis: str | None = None
    values: tuple = ()

    def __post_init__(self):
        if self.axis is None:
            if self.values:
                raise ValueError("sweep values given without a sweep axis")
            return
        if self.axis not in SWEEP_AXES:
            raise ValueError(f"unknown sweep axis {self.axis!r}; choose from {', '.join(SWEEP_AXES)}")
        if not self.values:
            raise ValueError(f"sweep axis {self.axis!r} has no values")

    def points(self) -> list:
        return list(self.values) if self.axis else [None]


@dataclass(frozen=True)
class McSettings:
    n_blocks: int = 1_000_000
    seed: int = 0
    enabled: bool = True
    batches: int = 1
    sampled_leakage: bool = False

    def __post_init__(self):
        if self.n_blocks < 1:
            raise ValueError("mc_blocks must be >= 1")
        if self.seed < 0:
            raise ValueError("mc_seed must be >= 0")
        if self.batches < 1:
            raise ValueError("mc_batches must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved experiment description; every power is in watts."""

    d_sj: float = 5.0
    d_se: float = 20.0
    d_sd: float = 30.0
    alpha: float = 3.0
    p_s_w: float = dbm_to_watts(20.0)
    p_j_w: float = dbm_to_watts(0.0)
    p_c_w: float = 1e-4
    sigma2_d_w: float = dbm_to_watts(-80.0)
    sigma2_e_w: float | None = None  # None: same as sigma2_d_w
    sigma2_err: float | None = None  # None: Omega_JD
    rho: float = 1.0
    r_s: float = 1.0
    n_t: int = 4
    n_r: int = 4
    k_rician: float = db_to_linear(5.0)
    eta: float = 0.5
    eta_prime: float = 0.9
    c1: float = 0.02
    c2: float = 0.01
    levels: int = 100
    p_j_policy: str = "fixed"
    pj_grid_min_dbm: float = -10.0
    pj_grid_max_dbm: float = 20.0
    pj_grid_points: int = 60
    sweep: Sweep = field(default_factory=Sweep)
    mc: McSettings = field(default_factory=McSettings)
    out: str | None = None

    def __post_init__(self):
        if self.p_j_policy not in PJ_POLICIES:
            raise ValueError(f"p_j_policy must be one of {PJ_POLICIES}")
        if self.pj_grid_points < 1:
            raise ValueError("pj_grid_points must be >= 1")
        if self.pj_grid_min_dbm > self.pj_grid_max_dbm:
            raise ValueError("pj_grid_min_dbm exceeds pj_grid_max_dbm")

    # -- derived objects ---------------------------------------------------

    @property
    def topology(self) -> Topology:
        return Topology(d_sj=self.d_sj, d_se=self.d_se, d_sd=self.d_sd, alpha=self.alpha)

    def system_params(self) -> SystemParams:
        topo = self.topology
        kw = dict(
            p_s=self.p_s_w,
            p_j=self.p_j_w,
            p_c=self.p_c_w,
            sigma2_d=self.sigma2_d_w,
            sigma2_e=self.sigma2_d_w if self.sigma2_e_w is None else self.sigma2_e_w,
            rho=self.rho,
            r_s=self.r_s,
            n_t=self.n_t,
            n_r=self.n_r,
            k_rician=self.k_rician,
            eta=self.eta,
            eta_prime=self.eta_prime,
        )
        if self.sigma2_err is not None:
            kw["sigma2_err"] = self.sigma2_err
        return SystemParams.from_topology(topo, **kw)

    def storage(self, params: SystemParams | None = None) -> EnergyStorageSpec:
        params = self.system_params() if params is None else params
        return EnergyStorageSpec.for_params(params, self.c1, self.c2, self.levels)

    def pj_grid(self) -> list[float]:
        """Log-spaced jamming-power candidates in watts."""
        n = self.pj_grid_points
        lo, hi = self.pj_grid_min_dbm, self.pj_grid_max_dbm
        if n == 1:
            return [dbm_to_watts(lo)]
        return [dbm_to_watts(lo + (hi - lo) * i / (n - 1)) for i in range(n)]

    def at(self, value) -> "ExperimentConfig":
        """Copy with the sweep axis set to ``value``."""
        axis = self.sweep.axis
        if axis is None or value is None:
            return self
        if axis == "p_s_dbm":
            return replace(self, p_s_w=dbm_to_watts(value))
        if axis == "p_j_dbm":
            return replace(self, p_j_w=dbm_to_watts(value))
        if axis == "rho":
            return replace(self, rho=value)
        if axis == "n_t_split":
            return replace(self, n_t=value[0], n_r=value[1])
        if axis == "rs":
            return replace(self, r_s=value)
        if axis == "L":
            return replace(self, levels=value)
        return replace(self, c1=value)

    def validate(self) -> None:
        """Build params and storage at every sweep point; raise ConfigError on failure."""
        for v in self.sweep.points():
            try:
                cfg = self.at(v)
                cfg.storage(cfg.system_params())
            except ValueError as exc:
                label = "" if v is None else f" at {self.sweep.axis} = {format_sweep_value(v)}"
                raise ConfigError(f"invalid parameters{label}: {exc}") from None

    def echo(self) -> str:
        """One-line rendering of the resolved configuration (watts)."""
        items = serialize_items(self)
        om = omegas_from_topology(self.topology)
        items += [(f"omega_{k}", repr(v)) for k, v in om.items()]
        return "; ".join(f"{k}={v}" for k, v in items)


# -- parsing ---------------------------------------------------------------

def _parse_bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_int(text):
    v = float(text)
    if not v.is_integer():
        raise ValueError(f"expected an integer, got {text!r}")
    return int(v)


def _parse_float(text):
    t = text.strip().lower()
    if t in ("-inf", "-infinity"):
        return -math.inf
    v = float(t)
    if math.isnan(v):
        raise ValueError("NaN is not allowed")
    return v


def _parse_optional_float(text):
    return None if text.strip().lower() in ("", "none", "default") else _parse_float(text)


def _parse_split(text):
    parts = text.split(":")
    if len(parts) != 2:
        raise ValueError(f"antenna split must look like n_t:n_r, got {text!r}")
    return (_parse_int(parts[0]), _parse_int(parts[1]))


def parse_sweep_values(axis: str, text: str) -> tuple:
    items = [t.strip() for t in text.split(",") if t.strip()]
    if axis == "n_t_split":
        return tuple(_parse_split(t) for t in items)
    if axis == "L":
        return tuple(_parse_int(t) for t in items)
    return tuple(_parse_float(t) for t in items)


def format_sweep_value(v) -> str:
    if isinstance(v, tuple):
        return f"{v[0]}:{v[1]}"
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


# key -> (field name, converter)
_SCALARS = {
    "d_sj": ("d_sj", _parse_float),
    "d_se": ("d_se", _parse_float),
    "d_sd": ("d_sd", _parse_float),
    "alpha": ("alpha", _parse_float),
    "p_s_w": ("p_s_w", _parse_float),
    "p_s_dbm": ("p_s_w", lambda t: dbm_to_watts(_parse_float(t))),
    "p_j_w": ("p_j_w", _parse_float),
    "p_j_dbm": ("p_j_w", lambda t: dbm_to_watts(_parse_float(t))),
    "p_c_w": ("p_c_w", _parse_float),
    "p_c_dbm": ("p_c_w", lambda t: dbm_to_watts(_parse_float(t))),
    "sigma2_d_w": ("sigma2_d_w", _parse_float),
    "sigma2_d_dbm": ("sigma2_d_w", lambda t: dbm_to_watts(_parse_float(t))),
    "sigma2_e_w": ("sigma2_e_w", _parse_optional_float),
    "sigma2_e_dbm": ("sigma2_e_w", lambda t: dbm_to_watts(_parse_float(t))),
    "sigma2_err": ("sigma2_err", _parse_optional_float),
    "rho": ("rho", _parse_float),
    "r_s": ("r_s", _parse_float),
    "n_t": ("n_t", _parse_int),
    "n_r": ("n_r", _parse_int),
    "k_rician": ("k_rician", _parse_float),
    "k_db": ("k_rician", lambda t: db_to_linear(_parse_float(t))),
    "eta": ("eta", _parse_float),
    "eta_prime": ("eta_prime", _parse_float),
    "c1": ("c1", _parse_float),
    "c2": ("c2", _parse_float),
    "levels": ("levels", _parse_int),
    "L": ("levels", _parse_int),
    "p_j_policy": ("p_j_policy", str.strip),
    "pj_grid_min_dbm": ("pj_grid_min_dbm", _parse_float),
    "pj_grid_max_dbm": ("pj_grid_max_dbm", _parse_float),
    "pj_grid_points": ("pj_grid_points", _parse_int),
    "out": ("out", str.strip),
}
_MC = {
    "mc_blocks": ("n_blocks", _parse_int),
    "mc_seed": ("seed", _parse_int),
    "mc_enabled": ("enabled", _parse_bool),
    "mc_batches": ("batches", _parse_int),
    "mc_sampled_leakage": ("sampled_leakage", _parse_bool),
}
_SWEEP = ("sweep_axis", "sweep_values")
KNOWN_KEYS = tuple(_SCALARS) + tuple(_MC) + _SWEEP


_INLINE_COMMENT = re.compile(r"(?:^|\s)[#;]")


def parse_lines(lines, source: str = "config") -> list[tuple[str, str, int]]:
    """Split raw text lines into (key, value, lineno) triples."""
    out = []
    for lineno, raw in enumerate(lines, start=1):
        # a comment marker starts a comment at line start or after whitespace
        line = _INLINE_COMMENT.split(raw, maxsplit=1)[0].strip()
        if not line or (line.startswith("[") and line.endswith("]")):
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.rstrip()!r}", lineno, source)
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError("empty key", lineno, source)
        out.append((key, value.strip(), lineno))
    return out


def build_config(entries, base: ExperimentConfig | None = None, source: str = "config") -> ExperimentConfig:
    """Apply (key, value, lineno) entries on top of ``base``.

    A field may be set only once per source (``p_s_dbm`` and ``p_s_w``
    count as the same field).
    """
    base = ExperimentConfig() if base is None else base
    top, mc, seen = {}, {}, {}
    axis, values_text, values_line = base.sweep.axis, None, None
    for key, value, lineno in entries:
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno, source)
        target = _SCALARS.get(key, _MC.get(key, (key, None)))[0]
        if target in seen:
            raise ConfigError(f"{key!r} repeats a setting from line {seen[target]}", lineno, source)
        seen[target] = lineno
        try:
            if key in _SCALARS:
                top[target] = _SCALARS[key][1](value)
            elif key in _MC:
                mc[target] = _MC[key][1](value)
            elif key == "sweep_axis":
                axis = value.strip() or None
                if axis is not None and axis not in SWEEP_AXES:
                    raise ValueError(f"unknown sweep axis {axis!r}; choose from {', '.join(SWEEP_AXES)}")
            else:
                values_text, values_line = value, lineno
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", lineno, source) from None

    sweep = base.sweep
    if "sweep_axis" in seen or values_text is not None:
        try:
            if values_text is not None:
                if axis is None:
                    raise ValueError("sweep_values given without sweep_axis")
                vals = parse_sweep_values(axis, values_text)
            elif axis == base.sweep.axis:
                vals = base.sweep.values
            else:
                vals = ()
            sweep = Sweep(axis, vals) if axis else Sweep()
        except ValueError as exc:
            raise ConfigError(str(exc), values_line or seen.get("sweep_axis"), source) from None
    try:
        return replace(base, sweep=sweep, mc=replace(base.mc, **mc), **top)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc), None, source) from None


def parse_config(text: str, source: str = "config", base: ExperimentConfig | None = None) -> ExperimentConfig:
    return build_config(parse_lines(text.splitlines(), source), base, source)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), source=str(path))


def apply_overrides(cfg: ExperimentConfig, overrides) -> ExperimentConfig:
    """Apply ``--set KEY=VALUE`` strings; the n-th override reports line n."""
    entries = []
    for i, item in enumerate(overrides, start=1):
        if "=" not in item:
            raise ConfigError(f"expected KEY=VALUE, got {item!r}", i, "--set")
        key, _, value = item.partition("=")
        entries.append((key.strip(), value.strip(), i))
    return build_config(entries, cfg, "--set") if entries else cfg


# -- serialization ---------------------------------------------------------

def serialize_items(cfg: ExperimentConfig) -> list[tuple[str, str]]:
    items = []
    for f in fields(cfg):
        if f.name in ("sweep", "mc"):
            continue
        v = getattr(cfg, f.name)
        if v is None:
            if f.name == "out":
                continue
            items.append((f.name, "none"))
        elif isinstance(v, float):
            items.append((f.name, repr(v)))
        else:
            items.append((f.name, str(v)))
    m = cfg.mc
    items += [
        ("mc_blocks", str(m.n_blocks)),
        ("mc_seed", str(m.seed)),
        ("mc_enabled", "true" if m.enabled else "false"),
        ("mc_batches", str(m.batches)),
        ("mc_sampled_leakage", "true" if m.sampled_leakage else "false"),
    ]
    if cfg.sweep.axis:
        items.append(("sweep_axis", cfg.sweep.axis))
        items.append(("sweep_values", ", ".join(format_sweep_value(v) for v in cfg.sweep.values)))
    return items


def serialize_config(cfg: ExperimentConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in serialize_items(cfg))
