"""Command-line front end: analyze, simulate, optimize-pj and reproduce.

Every command writes CSV: two ``#`` comment lines (tool version and command,
then the resolved configuration in watts), a header row, and data rows with
floats printed to 17 significant digits.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import os
import sys
from concurrent.futures import Executor, ProcessPoolExecutor
from dataclasses import replace

from . import __version__
from .channels import RngStream, db_to_linear, dbm_to_watts, watts_to_dbm
from .config import ConfigError, ExperimentConfig, apply_overrides, format_sweep_value, load_config
from .energy_chain import ChainError, EnergyStorageSpec, infinite_capacity_ready_prob
from .mc_sim import estimate, simulate
from .secrecy import Variant, optimal_jamming_power, report, secrecy_outage
from .specfun import SpecialFunctionError

log = logging.getLogger("anjam")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
FIGURES = range(2, 9)
PS_GRID_DBM = [10.0 + 2.0 * i for i in range(16)]  # 10, 12, ..., 40


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for numerical failures here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- CSV output --------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def render_csv(command: str, cfg: ExperimentConfig, header, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# anjam {__version__} {command}\n")
    buf.write(f"# config: {cfg.echo()}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _emit(text: str, path) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _map(fn, jobs, executor: Executor | None):
    """Ordered map over argument tuples, serial or on ``executor``."""
    if executor is None or len(jobs) < 2:
        return [fn(*j) for j in jobs]
    return list(executor.map(fn, *zip(*jobs)))


def _axis_cols(cfg):
    return [cfg.sweep.axis] if cfg.sweep.axis else []


def _axis_vals(cfg, v):
    return [format_sweep_value(v)] if cfg.sweep.axis else []


# -- analyze -----------------------------------------------------------------

def _analyze_point(cfg: ExperimentConfig):
    params = cfg.system_params()
    storage = cfg.storage(params)
    rows = []
    for variant in Variant:
        p = params
        if cfg.p_j_policy == "optimal":
            search = optimal_jamming_power(params, storage, cfg.pj_grid(), variant)
            p = params.with_(p_j=search.p_j_star)
        st = EnergyStorageSpec.for_params(p, cfg.c1, cfg.c2, cfg.levels)
        rep = report(p, variant, None if variant is Variant.FD_INFINITE else st)
        rows.append([variant.value, p.p_s, p.p_j, rep.ready_prob, rep.p_so, rep.p_nzsc])
    return rows


def cmd_analyze(cfg: ExperimentConfig, executor=None) -> str:
    points = cfg.sweep.points()
    results = _map(_analyze_point, [(cfg.at(v),) for v in points], executor)
    header = _axis_cols(cfg) + ["variant", "p_s_w", "p_j_w", "ready_prob", "p_so", "p_nzsc"]
    rows = [_axis_vals(cfg, v) + r for v, res in zip(points, results) for r in res]
    return render_csv("analyze", cfg, header, rows)


# -- simulate ----------------------------------------------------------------

def _ratio(mc, closed, n):
    """|mc - closed| in units of the binomial s.e. implied by the closed form."""
    se = math.sqrt(closed * (1.0 - closed) / n)
    if se > 0:
        return abs(mc - closed) / se
    return 0.0 if mc == closed else math.inf


def _simulate_point(cfg: ExperimentConfig, index: int):
    params = cfg.system_params()
    storage = cfg.storage(params)
    rows = []
    for k, (duplex, variant) in enumerate((("fd", Variant.FD_FINITE), ("hd", Variant.HD_FINITE))):
        rep = report(params, variant, storage)
        n = cfg.mc.n_blocks
        lo = min(rep.p_so, 1 - rep.p_so, rep.p_nzsc, 1 - rep.p_nzsc)
        if cfg.mc.enabled and n * lo < 10:
            log.warning(
                "%s: %d blocks expect fewer than 10 events for a probability near %.3g; "
                "the empirical estimate will be coarse", duplex, n, lo,
            )
        row = [duplex, params.p_s, params.p_j]
        if cfg.mc.enabled:
            rng = RngStream(cfg.mc.seed, stream_id=2 * index + k)
            res = simulate(params, storage, n, rng, duplex=duplex, n_batches=cfg.mc.batches,
                           sampled_leakage=cfg.mc.sampled_leakage)
            emp = estimate(res.stats)
            row.append(emp.blocks)
            for mc, se, cf in ((emp.p_so, emp.p_so_se, rep.p_so), (emp.p_nzsc, emp.p_nzsc_se, rep.p_nzsc),
                               (emp.ready_freq, emp.ready_se, rep.ready_prob)):
                row += [mc, se, cf, _ratio(mc, cf, emp.blocks)]
        else:
            row.append(0)
            for cf in (rep.p_so, rep.p_nzsc, rep.ready_prob):
                row += [None, None, cf, None]
        rows.append(row)
    return rows


def cmd_simulate(cfg: ExperimentConfig, executor=None) -> str:
    points = cfg.sweep.points()
    results = _map(_simulate_point, [(cfg.at(v), i) for i, v in enumerate(points)], executor)
    header = _axis_cols(cfg) + ["duplex", "p_s_w", "p_j_w", "blocks"]
    for m in ("p_so", "p_nzsc", "ready"):
        header += [f"{m}_mc", f"{m}_se", f"{m}_closed", f"{m}_ratio"]
    rows = [_axis_vals(cfg, v) + r for v, res in zip(points, results) for r in res]
    return render_csv("simulate", cfg, header, rows)


# -- optimize-pj ---------------------------------------------------------------

def _optimize_point(cfg: ExperimentConfig):
    params = cfg.system_params()
    storage = cfg.storage(params)
    rows = []
    for variant in (Variant.FD_FINITE, Variant.HD_FINITE):
        s = optimal_jamming_power(params, storage, cfg.pj_grid(), variant)
        rows.append([variant.value, params.p_s, s.p_j_star, watts_to_dbm(s.p_j_star), s.p_so_min,
                     s.interior, len(s.feasible)])
    return rows


def cmd_optimize_pj(cfg: ExperimentConfig, executor=None) -> str:
    points = cfg.sweep.points()
    results = _map(_optimize_point, [(cfg.at(v),) for v in points], executor)
    header = _axis_cols(cfg) + ["variant", "p_s_w", "p_j_star_w", "p_j_star_dbm", "p_so_min",
                                "interior", "feasible_candidates"]
    rows = [_axis_vals(cfg, v) + r for v, res in zip(points, results) for r in res]
    return render_csv("optimize-pj", cfg, header, rows)


# -- reproduce -----------------------------------------------------------------

def _with_ps(cfg, ps_dbm, **kw):
    return replace(cfg, p_s_w=dbm_to_watts(ps_dbm), **kw)


def _fig2_point(cfg, ps):
    rows = []
    for c1, levels in ((0.1, 100), (0.1, 400), (0.02, 50), (0.02, 100)):
        c = _with_ps(cfg, ps, c1=c1, levels=levels)
        rep = report(c.system_params(), Variant.FD_FINITE, c.storage())
        rows.append([ps, f"C1={c1:g},L={levels}", c1, levels, rep.ready_prob, rep.p_so])
    params = _with_ps(cfg, ps).system_params()
    q_b = infinite_capacity_ready_prob(params)
    rows.append([ps, "infinite", None, None, q_b, secrecy_outage(params, q_b, params.n_t)])
    return rows


def _fig34_point(cfg, ps, n_j, k_db, index):
    c = _with_ps(cfg, ps, n_t=n_j // 2, n_r=n_j // 2, k_rician=db_to_linear(k_db))
    params = c.system_params()
    rep = report(params, Variant.FD_FINITE, c.storage(params))
    row = [ps, n_j, k_db, rep.p_so, rep.p_nzsc]
    if c.mc.enabled:
        res = simulate(params, c.storage(params), c.mc.n_blocks, RngStream(c.mc.seed, index), "fd",
                       n_batches=c.mc.batches)
        emp = estimate(res.stats)
        row += [emp.p_so, emp.p_so_se, emp.p_nzsc, emp.p_nzsc_se]
    else:
        row += [None] * 4
    return [row]


def _fig5_point(cfg, ps, variant):
    c = _with_ps(cfg, ps)
    params = c.system_params()
    s = optimal_jamming_power(params, c.storage(params), c.pj_grid(), variant)
    return [[ps, variant.value, watts_to_dbm(pj), v, pj == s.p_j_star] for pj, v in zip(s.grid, s.p_so)]


def _fig6_point(cfg, ps, r_s, variant):
    c = _with_ps(cfg, ps, r_s=r_s)
    params = c.system_params()
    s = optimal_jamming_power(params, c.storage(params), c.pj_grid(), variant)
    return [[ps, r_s, variant.value, watts_to_dbm(s.p_j_star), s.p_so_min]]


def _fig7_point(cfg, ps, n_t, n_r):
    c = _with_ps(cfg, ps, n_t=n_t, n_r=n_r)
    params = c.system_params()
    s = optimal_jamming_power(params, c.storage(params), c.pj_grid(), Variant.FD_FINITE)
    return [[ps, f"{n_t}:{n_r}", watts_to_dbm(s.p_j_star), s.p_so_min]]


def _fig8_point(cfg, ps):
    c = _with_ps(cfg, ps, rho=1.0)
    params = c.system_params()
    pj = optimal_jamming_power(params, c.storage(params), c.pj_grid(), Variant.FD_FINITE).p_j_star
    rows = []
    for rho in (0.0, 0.5, 0.9, 0.99, 1.0):
        p = params.with_(p_j=pj, rho=rho)
        rep = report(p, Variant.FD_FINITE, EnergyStorageSpec.for_params(p, c.c1, c.c2, c.levels))
        rows.append([ps, rho, watts_to_dbm(pj), rep.p_so])
    return rows


def _figure_jobs(fig: int, cfg: ExperimentConfig):
    ps = PS_GRID_DBM
    fd, hd = Variant.FD_FINITE, Variant.HD_FINITE
    if fig == 2:
        return (["p_s_dbm", "series", "c1", "L", "ready_prob", "p_so"],
                _fig2_point, [(cfg, p) for p in ps])
    if fig in (3, 4):
        jobs, i = [], 0
        for n_j in (4, 8):
            for k_db in (5.0, -math.inf):
                for p in ps:
                    jobs.append((cfg, p, n_j, k_db, i))
                    i += 1
        return (["p_s_dbm", "n_j", "k_db", "p_so", "p_nzsc", "p_so_mc", "p_so_se", "p_nzsc_mc", "p_nzsc_se"],
                _fig34_point, jobs)
    if fig == 5:
        return (["p_s_dbm", "variant", "p_j_dbm", "p_so", "is_minimizer"],
                _fig5_point, [(cfg, p, v) for p in (20.0, 25.0, 30.0) for v in (fd, hd)])
    if fig == 6:
        return (["p_s_dbm", "r_s", "variant", "p_j_star_dbm", "p_so"],
                _fig6_point, [(cfg, p, r, v) for r in (0.1, 1.0) for v in (fd, hd) for p in ps])
    if fig == 7:
        return (["p_s_dbm", "split", "p_j_star_dbm", "p_so"],
                _fig7_point, [(cfg, p, t, r) for t, r in ((2, 6), (4, 4), (6, 2)) for p in ps])
    return (["p_s_dbm", "rho", "p_j_dbm", "p_so"], _fig8_point, [(cfg, p) for p in ps])


def cmd_reproduce(cfg: ExperimentConfig, figure: int, executor=None) -> str:
    if figure not in FIGURES:
        raise UsageError(f"unknown figure {figure}; choose from {FIGURES.start}..{FIGURES.stop - 1}")
    header, fn, jobs = _figure_jobs(figure, cfg)
    rows = [r for res in _map(fn, jobs, executor) for r in res]
    return render_csv(f"reproduce --figure {figure}", cfg, header, rows)


# -- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat key = value configuration file")
    common.add_argument("--set", dest="overrides", metavar="KEY=VALUE", action="append", default=[],
                        help="override one configuration key (repeatable)")
    common.add_argument("--out", metavar="PATH", help="output file (reproduce: directory); default stdout")
    common.add_argument("--seed", type=int, help="Monte Carlo seed")
    common.add_argument("--blocks", type=int, help="Monte Carlo block count")
    common.add_argument("--workers", type=int, default=1, help="worker processes for sweep points")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = _Parser(prog="anjam", description="Accumulate-and-jam secrecy analysis and simulation.")
    ap.add_argument("--version", action="version", version=f"anjam {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("analyze", parents=[common], help="closed-form metrics for FD and HD next to the infinite-capacity bound")
    sub.add_parser("simulate", parents=[common], help="Monte Carlo next to the closed forms")
    sub.add_parser("optimize-pj", parents=[common], help="grid search for the best jamming power")
    rp = sub.add_parser("reproduce", parents=[common], help="data behind a default-parameter figure")
    rp.add_argument("--figure", type=int, required=True, metavar="N", help="figure number, 2 to 8")
    return ap


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    cfg = apply_overrides(cfg, args.overrides)
    mc = {}
    if args.seed is not None:
        mc["seed"] = args.seed
    if args.blocks is not None:
        mc["blocks"] = args.blocks
    if mc:
        try:
            cfg = replace(cfg, mc=replace(cfg.mc, seed=mc.get("seed", cfg.mc.seed),
                                          n_blocks=mc.get("blocks", cfg.mc.n_blocks)))
        except ValueError as exc:
            raise ConfigError(str(exc), None, "command line") from None
    cfg.validate()
    return cfg


def _run(args, cfg, executor) -> None:
    if args.command == "reproduce":
        text = cmd_reproduce(cfg, args.figure, executor)
        out_dir = args.out or cfg.out or "."
        os.makedirs(out_dir, exist_ok=True)
        _emit(text, os.path.join(out_dir, f"fig{args.figure}.csv"))
        return
    fn = {"analyze": cmd_analyze, "simulate": cmd_simulate, "optimize-pj": cmd_optimize_pj}[args.command]
    _emit(fn(cfg, executor), args.out or cfg.out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        if args.workers < 1:
            raise UsageError("--workers must be >= 1")
        cfg = resolve_config(args)
        if args.workers > 1:
            with ProcessPoolExecutor(max_workers=args.workers) as ex:
                _run(args, cfg, ex)
        else:
            _run(args, cfg, None)
    except (ConfigError, UsageError, OSError) as exc:
        print(f"anjam: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ChainError, SpecialFunctionError, ArithmeticError) as exc:
        print(f"anjam: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"anjam: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
