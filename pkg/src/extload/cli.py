"""Command-line interface.

Exit codes: 0 success, 2 bad arguments or failed preconditions, 3 numerical
failure, 4 input/output problems. Errors are printed to stderr as a single
``error <code> <kind>: <message>`` line.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import pipeline
from .basis import IllegalMove
from .binning import BinningError, bin_summary
from .estimator import EmptySlab, pointwise_credible_band
from .io import (IngestError, aggregate_raw, build_config, read_raw, read_records,
                 render_table, write_table)
from .mle import NotConverged
from .rjs import ChainStall
from .wind import WindFitError

EXIT_OK, EXIT_PRECONDITION, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text):
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text):
    return tuple(int(x) for x in text.split(",") if x.strip())


def _common(p):
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--seed", type=int)
    p.add_argument("--full-scale", action="store_true",
                   help="full-scale sampler counts instead of the desk profile")
    p.add_argument("--burn-in", type=int)
    p.add_argument("--m-l", type=int, help="posterior draws used for l_T")
    p.add_argument("--m-w", type=int)
    p.add_argument("--n-w", type=int)
    p.add_argument("--n-l", type=int)
    p.add_argument("--t-years", type=_floats, help="comma-separated service lives")
    p.add_argument("--out-dir", default=".")


def _data_arg(p):
    p.add_argument("--data", required=True, help="ten-minute record file (v, s, y)")


def build_parser():
    parser = _Parser(prog="extload", description="Extreme load estimation.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="raw timestamp,v,y text to ten-minute records")
    p.add_argument("--input", default="-")
    p.add_argument("--output", default="-")
    p.add_argument("--block-len", type=float, default=600.0, help="seconds")

    p = sub.add_parser("fit-wind", help="wind family table and turbulence fit")
    _data_arg(p)
    _common(p)

    p = sub.add_parser("estimate", help="spline extreme load levels")
    _data_arg(p)
    _common(p)
    p.add_argument("--loc-types", type=_ints)
    p.add_argument("--scale-types", type=_ints)

    p = sub.add_parser("estimate-binned", help="binning extreme load levels")
    _data_arg(p)
    _common(p)
    p.add_argument("--n-v-bins", type=int)
    p.add_argument("--n-s-bins", type=int)

    p = sub.add_parser("score", help="repeated train/test quantile scoring")
    _data_arg(p)
    _common(p)
    p.add_argument("--score-repeats", type=int)

    p = sub.add_parser("simulate", help="synthetic training set and reference quantiles")
    _common(p)
    p.add_argument("--sim-blocks", type=int)
    p.add_argument("--ref-datasets", type=int)
    p.add_argument("--ref-size", type=int)

    p = sub.add_parser("replicate-sim", help="simulation comparison with a verdict file")
    _common(p)
    p.add_argument("--sim-blocks", type=int)
    p.add_argument("--ref-datasets", type=int)
    p.add_argument("--ref-size", type=int)

    p = sub.add_parser("credible-band", help="pointwise predictive bands over a sweep")
    _data_arg(p)
    _common(p)
    p.add_argument("--axis", choices=("v", "s"), default="v")
    p.add_argument("--centers", type=_floats, required=True)
    p.add_argument("--halfwidth", type=float)
    return parser


_CONFIG_FLAGS = ("seed", "burn_in", "m_l", "m_w", "n_w", "n_l", "t_years", "loc_types",
                 "scale_types", "n_v_bins", "n_s_bins", "score_repeats", "sim_blocks",
                 "ref_datasets", "ref_size")


def _config(args):
    overrides = {k: getattr(args, k, None) for k in _CONFIG_FLAGS}
    return build_config(args.config, args.full_scale, overrides)


def _out(args, name):
    return os.path.join(args.out_dir, name)


def _quantile_columns(res):
    return {"draw": np.arange(res.draws.size), "l_t": res.draws}


def _write_results(args, cfg, results, prefix, method):
    paths = []
    for r in results:
        tag = f"T{r.t_years:g}" if r.t_years is not None else f"p{r.p_t:g}"
        meta = cfg.header(method=method, t_years=r.t_years, p_t=format(r.p_t, ".17g"),
                          mean=format(r.mean, ".17g"), median=format(r.median, ".17g"),
                          ci_lower=format(r.ci_lower, ".17g"),
                          ci_upper=format(r.ci_upper, ".17g"), n_draws=r.draws.size,
                          n_clamped=r.n_clamped)
        path = _out(args, f"{prefix}_{tag}.csv")
        write_table(path, _quantile_columns(r), meta)
        paths.append(path)
        print(f"{method} {tag}: mean={r.mean:.6g} 95%=[{r.ci_lower:.6g}, {r.ci_upper:.6g}]")
    return paths


def _write_trace(path, cfg, chain):
    t = chain.trace
    write_table(path, {"iteration": [r.iteration for r in t], "k_mu": [r.k_mu for r in t],
                       "k_sigma": [r.k_sigma for r in t], "loglik": [r.loglik for r in t],
                       "sic": [r.sic for r in t],
                       "accepted_mu": [int(r.accepted_mu) for r in t],
                       "accepted_sigma": [int(r.accepted_sigma) for r in t]},
                cfg.header(acceptance_rate=format(chain.acceptance_rate, ".6f"),
                           n_failed_fits=chain.n_failed_fits))


def _write_sic(path, cfg, wind):
    kinds = list(wind.sic_table)
    write_table(path, {"family": [k.value for k in kinds],
                       "sic": [wind.sic_table[k] for k in kinds],
                       "chosen": [int(k is wind.chosen) for k in kinds]},
                cfg.header(chosen=wind.chosen.value,
                           nu_hat=",".join(format(x, ".17g") for x in wind.nu_hat.nu)))


def cmd_ingest(args):
    src = sys.stdin if args.input == "-" else open(args.input)
    try:
        agg = aggregate_raw(read_raw(src), args.block_len)
    finally:
        if src is not sys.stdin:
            src.close()
    cols = {"v": agg.v, "s": agg.s, "y": agg.y}
    meta = {"block_len": args.block_len, "n_blocks": agg.n, "n_dropped": agg.n_dropped}
    if args.output == "-":
        sys.stdout.write(render_table(cols, meta))
    else:
        write_table(args.output, cols, meta)
    print(f"blocks={agg.n} dropped={agg.n_dropped}", file=sys.stderr)


def cmd_fit_wind(args):
    cfg = _config(args)
    data = read_records(args.data)
    stage = pipeline.wind_stage(data, cfg)
    _write_sic(_out(args, "sic_table.csv"), cfg, stage.wind)
    write_table(_out(args, "wind_pairs.csv"), {"v": stage.v, "s": stage.s}, cfg.header())
    if stage.turb is not None:
        _write_trace(_out(args, "turbulence_trace.csv"), cfg, stage.turb.chain)
    for k, s in sorted(stage.wind.sic_table.items(), key=lambda kv: -kv[1]):
        print(f"{k.value:4s} SIC={s:.6f}{'  *' if k is stage.wind.chosen else ''}")


def cmd_estimate(args):
    cfg = _config(args)
    data = read_records(args.data)
    stage = pipeline.wind_stage(data, cfg)
    results, chain = pipeline.spline_estimate(data, cfg, stage)
    _write_results(args, cfg, results, "spline", "spline")
    _write_trace(_out(args, "chain_trace.csv"), cfg, chain)
    _write_sic(_out(args, "sic_table.csv"), cfg, stage.wind)


def cmd_estimate_binned(args):
    cfg = _config(args)
    data = read_records(args.data)
    stage = pipeline.wind_stage(data, cfg)
    results, model = pipeline.binned_estimate(data, cfg, stage)
    _write_results(args, cfg, results, "binned", "binning")
    rows = bin_summary(model)
    write_table(_out(args, "bins.csv"), {k: [r[k] for r in rows] for k in rows[0]},
                cfg.header(xi_shared=format(model.xi_shared, ".17g")))


def cmd_score(args):
    cfg = _config(args)
    data = read_records(args.data)
    reports = pipeline.score(data, cfg)
    main = [r for r in reports if r.tau in cfg.score_taus]
    write_table(_out(args, "score_table.csv"),
                {"tau": [r.tau for r in main], "b": [r.b for r in main],
                 "spline": [r.mean_scores["spline"] for r in main],
                 "binning": [r.mean_scores["binning"] for r in main],
                 "reduction_pct": [r.reduction_pct for r in main]},
                cfg.header(n_repeats=main[0].n_repeats if main else 0))
    sweep = [r for r in reports if r.b == 1.0]
    write_table(_out(args, "tau_sweep.csv"),
                {"tau": [r.tau for r in sweep],
                 "spline": [r.mean_scores["spline"] for r in sweep],
                 "binning": [r.mean_scores["binning"] for r in sweep],
                 "reduction_pct": [r.reduction_pct for r in sweep]}, cfg.header(b=1))
    diffs = pipeline.bin_differences(data, cfg)
    write_table(_out(args, "bin_differences.csv"), diffs, cfg.header(tau=0.99))
    for r in main:
        print(f"tau={r.tau:g} b={r.b:g} spline={r.mean_scores['spline']:.6g} "
              f"binning={r.mean_scores['binning']:.6g} reduction={r.reduction_pct:.2f}%")


def _sim_meta(cfg):
    return cfg.header(weibull=",".join(f"{x:g}" for x in cfg.sim_weibull),
                      n_blocks=cfg.sim_blocks, block_size=cfg.sim_block_size)


def _write_sim(args, cfg, data, ref, probs):
    write_table(_out(args, "training.csv"),
                {"v": data.cov.v, "s": data.cov.s, "y": data.y}, _sim_meta(cfg))
    write_table(_out(args, "reference_quantiles.csv"),
                {f"q_{p:g}": ref[:, j] for j, p in enumerate(probs)},
                cfg.header(n_datasets=cfg.ref_datasets, dataset_size=cfg.ref_size))


def cmd_simulate(args):
    cfg = _config(args)
    probs = (1e-4, 1e-5)
    data, ref = pipeline.simulate(cfg, probs)
    _write_sim(args, cfg, data, ref, probs)
    print(f"training pairs={data.n} reference datasets={ref.shape[0]}")


def cmd_replicate_sim(args):
    cfg = _config(args)
    rep = pipeline.replicate_sim(cfg)
    rows = rep.verdict_rows()
    _write_sim(args, cfg, rep.data, rep.reference, rep.probs)
    _write_results(args, cfg, rep.spline, "spline", "spline")
    _write_results(args, cfg, rep.binned, "binned", "binning")
    _write_results(args, cfg, rep.service, "spline", "spline")
    _write_trace(_out(args, "chain_trace.csv"), cfg, rep.chain)
    write_table(_out(args, "verdict.csv"), {k: [r[k] for r in rows] for k in rows[0]},
                _sim_meta(cfg) | {"verdict": "pass" if rep.passed else "fail"})
    print(f"verdict: {'pass' if rep.passed else 'fail'}")


def cmd_credible_band(args):
    cfg = _config(args)
    data = read_records(args.data)
    loc, scale = pipeline.model_types(cfg, data)
    from .estimator import fit_load_model
    chain = fit_load_model(data, pipeline.chain_config(cfg), loc, scale)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 7]))
    centers, lo, hi, counts = [], [], [], []
    source = data.cov.v if args.axis == "v" else data.cov.s
    half = args.halfwidth if args.halfwidth is not None else (0.5 if args.axis == "v" else 0.05)
    for c in args.centers:
        try:
            a, b = pointwise_credible_band(data, chain.draws, args.axis, c, half, rng)
        except EmptySlab:
            continue
        centers.append(c)
        lo.append(a)
        hi.append(b)
        counts.append(int(np.sum(np.abs(source - c) < half)))
    if not centers:
        raise EmptySlab("no sweep center has observations in its slab")
    write_table(_out(args, f"band_{args.axis}.csv"),
                {"center": centers, "lower": lo, "upper": hi, "n_obs": counts},
                cfg.header(axis=args.axis, halfwidth=half))


COMMANDS = {"ingest": cmd_ingest, "fit-wind": cmd_fit_wind, "estimate": cmd_estimate,
            "estimate-binned": cmd_estimate_binned, "score": cmd_score,
            "simulate": cmd_simulate, "replicate-sim": cmd_replicate_sim,
            "credible-band": cmd_credible_band}


def _fail(code, kind, exc):
    msg = " ".join(str(exc).split())
    print(f"error {code} {kind}: {msg}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail(EXIT_PRECONDITION, "usage", exc)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (IngestError, OSError) as exc:
        return _fail(EXIT_IO, type(exc).__name__, exc)
    except (ChainStall, NotConverged, BinningError, WindFitError,
            np.linalg.LinAlgError, FloatingPointError) as exc:
        return _fail(EXIT_NUMERIC, type(exc).__name__, exc)
    except (ValueError, EmptySlab, IllegalMove) as exc:
        return _fail(EXIT_PRECONDITION, type(exc).__name__, exc)
    except RuntimeError as exc:
        return _fail(EXIT_NUMERIC, type(exc).__name__, exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
