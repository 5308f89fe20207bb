"""Command-line entry point: ``cirsharp {calibrate,forecast,compare,segment}``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import market_data, pipeline, report, segmentation
from .config import MODES, OUTPUT_DIR_ENV, RunConfig, build_config, load_config_file
from .errors import ConfigError, DataError, NumericalError

log = logging.getLogger("cirsharp")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("input", nargs="?", help="rate file (date column + maturities)")
    p.add_argument("--config", help="flat JSON file with RunConfig keys")
    p.add_argument("--maturity", help="column to use (comma-separated for compare)")
    p.add_argument("--group-size", type=int, dest="group_size")
    p.add_argument("--segmentation", choices=MODES)
    p.add_argument("--min-segment-len", type=int, dest="min_segment_len")
    p.add_argument("--k-max", type=int, dest="k_max")
    p.add_argument("--shift-threshold", type=float, dest="shift_threshold")
    p.add_argument("--alpha", type=float)
    p.add_argument("--relax-pac", action="store_const", const=True, dest="relax_pac")
    p.add_argument("--k-lower", type=float, dest="k_lower")
    p.add_argument("--k-upper", type=float, dest="k_upper")
    p.add_argument("--delta", type=float)
    p.add_argument("--forecast-window", type=int, dest="forecast_window")
    p.add_argument("--classic-window", type=int, dest="classic_window")
    p.add_argument("--output-dir", dest="output_dir",
                   help=f"defaults to ${OUTPUT_DIR_ENV} or ./cirsharp-out")
    p.add_argument("--threads", type=int)
    p.add_argument("-v", "--verbose", action="count", default=0)


_CONFIG_KEYS = ("input", "maturity", "group_size", "segmentation", "min_segment_len",
                "k_max", "shift_threshold", "alpha", "relax_pac", "k_lower",
                "k_upper", "delta", "forecast_window", "classic_window",
                "output_dir", "threads")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cirsharp", description="CIR# short-rate calibration")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in (("calibrate", "segment, fit ARIMA-CIR per group, write report"),
                        ("forecast", "rolling one-step CIR# forecasts"),
                        ("compare", "CIR# versus martingale-estimated CIR forecasts"),
                        ("segment", "segmentation and shift check only")):
        _add_common(sub.add_parser(name, help=help_))
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    file_values = load_config_file(args.config) if args.config else {}
    overrides = {k: getattr(args, k) for k in _CONFIG_KEYS}
    cfg = build_config(file_values, overrides)
    if not cfg.input:
        raise ConfigError("no input file given")
    if not cfg.maturities:
        raise ConfigError("no maturity given")
    return cfg


def _load(cfg: RunConfig, maturity: Optional[str] = None):
    return market_data.load_rate_series(cfg.input, maturity or cfg.maturities[0],
                                        cfg.delta)


def cmd_calibrate(cfg: RunConfig) -> int:
    series = _load(cfg)
    rep = pipeline.calibrate_series(series, cfg.pipeline())
    out = cfg.resolved_output_dir()
    summary = report.write_calibration(rep, series, out, cfg.as_dict())
    for line in rep.diagnostics:
        log.warning(line) if line.startswith("WARNING") else log.info(line)
    print(f"{summary['groups_fitted']}/{summary['groups_total']} groups fitted; "
          f"total R2 {rep.total_r2:.4f}, total eps {rep.total_eps:.4f} -> {out}")
    return EXIT_OK


def cmd_forecast(cfg: RunConfig) -> int:
    series = _load(cfg)
    res = pipeline.rolling_forecast(series, cfg.forecast_window, cfg.pipeline())
    score = pipeline.score_forecasts(res)
    base = pipeline.last_value_score(series, res)
    out = cfg.resolved_output_dir()
    report.write_forecast(res, score, base, series, out, cfg.as_dict())
    print(f"{score.count}/{len(res)} positions predicted; R2 {score.r2:.4f}, "
          f"RMSE {score.rmse:.4f} (last value RMSE {base.rmse:.4f}) -> {out}")
    return EXIT_OK


def cmd_compare(cfg: RunConfig) -> int:
    rows = []
    for m in cfg.maturities:
        series = _load(cfg, m)
        rows.append(pipeline.compare_with_cir(series, cfg.forecast_window,
                                              cfg.classic_window, cfg.pipeline()))
    out = cfg.resolved_output_dir()
    report.write_comparison(rows, out, cfg.as_dict())
    for r in rows:
        print(f"{r.maturity}: R2 A={r.r2[0]:.4f} B={r.r2[1]:.4f}; "
              f"eps A={r.eps[0]:.4f} B={r.eps[1]:.4f} ({r.count} positions)")
    print(f"-> {out}")
    return EXIT_OK


def cmd_segment(cfg: RunConfig) -> int:
    series = _load(cfg)
    pc = cfg.pipeline()
    points = ()
    if cfg.segmentation == "change_point":
        cps = segmentation.detect_change_points(series, cfg.k_max, cfg.min_segment_len)
        points = cps.points
        seg = cps.segmentation(len(series))
    else:
        seg = pipeline.build_segmentation(series, pc)
    shift = market_data.needs_shift(series, seg, cfg.shift_threshold)
    out = cfg.resolved_output_dir()
    report.write_segments(seg, series, out, shift, points, cfg.as_dict())
    print(f"{len(seg)} groups ({', '.join(seg.labels())}); "
          f"shift {'needed' if shift else 'not needed'} -> {out}")
    return EXIT_OK


COMMANDS = {"calibrate": cmd_calibrate, "forecast": cmd_forecast,
            "compare": cmd_compare, "segment": cmd_segment}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(
            level=logging.WARNING - 10 * min(args.verbose, 2),
            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"cirsharp: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"cirsharp: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"cirsharp: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"cirsharp: I/O error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
