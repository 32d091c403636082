"""Command-line interface.

Subcommands:
    analyze   full pipeline driven by a JSON config
    synth     write a generated signal as CSV (t,value)
    spectrum  PSD plot data (octave_or_freq, log2_value, fitted_value)
    battery   statistical battery on an estimates CSV

Exit codes: 0 success, 1 validation error, 2 analysis finished with
per-series failures recorded in the report.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from .errors import DataFormatError, ScaleFreeError
from .grouptests import run_battery
from .pipeline import (AnalysisConfig, _FMT, load_estimates_csv,
                       load_taxonomy, run_full_analysis)
from .scaling import (fit_loglog, fit_psd_powerlaw, scale_to_frequency,
                      welch_psd, wavelet_spectrum)
from .synth import GeneratorSpec, generate
from .wavelet import Signal, build_wavelet, dwt


def _fmt(x) -> str:
    return _FMT % float(x)


def _cmd_analyze(args) -> int:
    config = AnalysisConfig.from_json(args.config)
    report = run_full_analysis(config)
    n_fail = len(report.failures)
    print(f"analyzed {report.provenance['n_series']} series, "
          f"{n_fail} failure(s); outputs in {report.output_dir}")
    return 2 if n_fail else 0


def _cmd_synth(args) -> int:
    spec = GeneratorSpec(
        kind=args.kind, hurst=args.hurst, length=args.length, seed=args.seed,
        lambda2=args.lambda2, integral_scale=args.integral_scale,
        sampling_rate=args.rate,
    )
    signal = generate(spec)
    with open(args.out, "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "value"])
        for k, v in enumerate(signal.samples):
            w.writerow([_fmt(k / args.rate), _fmt(v)])
    print(f"wrote {args.length} samples to {args.out}")
    return 0


def _read_column(path, column):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataFormatError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if column in header:
            idx = header.index(column)
        else:
            try:
                idx = int(column)
            except ValueError:
                raise DataFormatError(
                    f"{path}: no column named {column!r}; available: {header}"
                ) from None
            if not 0 <= idx < len(header):
                raise DataFormatError(f"{path}: column index {idx} out of range")
        values = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                values.append(float(row[idx]))
            except (ValueError, IndexError):
                raise DataFormatError(
                    f"{path}:{line_no}: cannot read column {header[idx]!r}"
                ) from None
    return np.asarray(values)


def _cmd_spectrum(args) -> int:
    samples = _read_column(args.infile, args.column)
    signal = Signal(samples, args.rate, label=args.column)
    rows = []
    if args.method == "welch":
        spectrum = welch_psd(signal, segment_length=args.segment_length,
                             overlap_fraction=args.overlap, window=args.window)
        f_lo = scale_to_frequency(args.j2, args.rate)
        f_hi = scale_to_frequency(args.j1, args.rate)
        fit = fit_psd_powerlaw(spectrum, f_lo, f_hi)
        for f, p in zip(spectrum.frequencies, spectrum.power):
            if p <= 0:
                continue
            fitted = fit.intercept - fit.beta * np.log2(f)
            rows.append((f, np.log2(p), fitted))
    else:
        pyramid = dwt(signal, build_wavelet(args.vanishing), args.j2)
        spectrum = wavelet_spectrum(pyramid)
        fit = fit_loglog(spectrum.octave_pairs(), args.j1, args.j2)
        order = np.argsort(spectrum.octave_index)
        for j, p in zip(spectrum.octave_index[order], spectrum.power[order]):
            rows.append((int(j), np.log2(p), fit.slope * j + fit.intercept))
    with open(args.out, "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["octave_or_freq", "log2_value", "fitted_value"])
        for a, b, c in rows:
            w.writerow([_fmt(a), _fmt(b), _fmt(c)])
    print(f"wrote {len(rows)} spectrum rows to {args.out}")
    return 0


def _cmd_battery(args) -> int:
    taxonomy = load_taxonomy(args.taxonomy)
    table = load_estimates_csv(args.estimates, taxonomy)
    battery = run_battery(table, alpha_levels=tuple(args.alpha))
    with open(args.out, "w", newline="\n", encoding="utf-8") as fh:
        json.dump(battery.to_json_dict(), fh, sort_keys=True, indent=1)
        fh.write("\n")
    print(f"wrote battery report ({table.n_subjects} subjects, "
          f"{table.n_maps} maps) to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scalefree",
        description="Scale-free and multifractal time-series analysis",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="run the full pipeline from a JSON config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("synth", help="generate a synthetic signal as CSV")
    p.add_argument("--kind", required=True, choices=("fgn", "fbm", "mrw"))
    p.add_argument("--hurst", type=float, required=True)
    p.add_argument("--length", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--lambda2", type=float, default=0.0)
    p.add_argument("--integral-scale", type=int, default=None)
    p.add_argument("--rate", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("spectrum", help="PSD plot data for one CSV column")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--column", default="value")
    p.add_argument("--method", choices=("welch", "wavelet"), default="wavelet")
    p.add_argument("--rate", type=float, default=1.0)
    p.add_argument("--j1", type=int, default=3)
    p.add_argument("--j2", type=int, default=6)
    p.add_argument("--vanishing", type=int, default=3)
    p.add_argument("--segment-length", type=int, default=None)
    p.add_argument("--overlap", type=float, default=0.5)
    p.add_argument("--window", choices=("hann", "rect"), default="hann")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_spectrum)

    p = sub.add_parser("battery", help="statistical battery on estimates CSV")
    p.add_argument("--estimates", required=True)
    p.add_argument("--taxonomy", required=True)
    p.add_argument("--alpha", type=float, nargs=2, default=(0.01, 0.05))
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_battery)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScaleFreeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
