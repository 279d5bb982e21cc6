"""Command-line entry point.

Subcommands::

    pecep gen-var    simulate a VAR series to a raw matrix file
    pecep gen-audio  write the synthetic species WAV corpus and annotations
    pecep exp1       PECEP convergence sweep on VAR data
    pecep exp2       per-species network training and call-level ranking
    pecep pecep      entropy report for a residual matrix file
    pecep report     re-aggregate an emitted records file

Exit status is 0 on success, 1 on a configuration error and 2 on a runtime
failure (reports for whatever completed are still written).
"""

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

from . import binio
from .entropy import entropy_report, gaussian_noise_entropy
from .errors import InvalidConfigError, PecepError
from .experiments import (
    EXP1_PROFILES,
    EXP2_PROFILES,
    Exp1Config,
    Exp2Config,
    build_config,
    rank_species,
    run_experiment1,
    run_experiment2,
    summarize_exp1,
)
from .report import read_csv_records, report_emit
from .synth import generate_species_corpus, species_table
from .var import VarProcess, simulate_var

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors, not argparse's default status 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _load_overrides(path):
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise InvalidConfigError(f"config {path} must hold a JSON object")
    return data


def _common(p, fmt=True):
    p.add_argument("--config", help="JSON file of config overrides")
    p.add_argument("--profile", choices=("desk", "full"), default="desk")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--out", default="out", help="output directory")
    if fmt:
        p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")


def cmd_gen_var(args):
    proc = VarProcess.random(args.d, args.p, args.band_width, sigma2=args.sigma2, seed=args.seed)
    data = simulate_var(proc, args.n, seed=args.seed + 1)
    out = Path(args.out)
    data.save(out / "series.bin")
    binio.write_matrix(out / "coefficients.bin", proc.stacked, {"d": proc.d, "p": proc.p, "layout": "[A_1 | ... | A_p]"})
    print(f"wrote {data.n} frames of dimension {proc.d} to {out / 'series.bin'}")
    return EXIT_OK


def cmd_gen_audio(args):
    cfg = build_config(Exp2Config, EXP2_PROFILES, args.profile, _load_overrides(args.config), args.seed)
    out = Path(args.out) / "audio"
    specs = species_table(cfg.n_species, cfg.species)
    if args.species is not None:
        if not 0 <= args.species < len(specs):
            raise InvalidConfigError(f"species {args.species} not in 0..{len(specs) - 1}")
        specs = [specs[args.species]]
    for spec in specs:
        generate_species_corpus(spec, cfg.clips_per_species, cfg.master_seed, cfg.clip_duration,
                                cfg.sample_rate, out)
        print(f"species {spec.index}: {cfg.clips_per_species} clips")
    return EXIT_OK


def cmd_exp1(args):
    cfg = build_config(Exp1Config, EXP1_PROFILES, args.profile, _load_overrides(args.config), args.seed)
    out = Path(args.out)
    result = run_experiment1(cfg, jobs=args.jobs)
    seeds = {"master_seed": cfg.master_seed}
    report_emit(result.records, args.format, out / f"exp1_records.{args.format}", asdict(cfg), seeds)
    if result.summary:
        report_emit(result.summary, args.format, out / f"exp1_summary.{args.format}", asdict(cfg), seeds)
    for row in result.summary:
        if row["predictor"] == "ols":
            print(f"sigma2={row['sigma2']:g} n={row['n']}: mean pecep - bound = {row['mean_pecep_minus_bound']:+.4f}")
    if result.n_failed_trials:
        print(f"{result.n_failed_trials} trial(s) failed", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_exp2(args):
    cfg = build_config(Exp2Config, EXP2_PROFILES, args.profile, _load_overrides(args.config), args.seed)
    out = Path(args.out)
    result = run_experiment2(cfg, jobs=args.jobs, out_dir=out, save_audio=args.save_audio)
    seeds = {"master_seed": cfg.master_seed}
    if result.calls:
        report_emit(result.calls, args.format, out / f"exp2_calls.{args.format}", asdict(cfg), seeds)
    doc = {**result.to_dict(), "histories": {str(k): v for k, v in result.histories.items()}}
    report_emit(result.species_summary, "json", out / "exp2_ranking.json", asdict(cfg), seeds, extra=doc)
    for row in result.species_summary:
        if row["status"] == "ok":
            print(f"species {row['species']}: median {row['median']:.3f} iqr {row['iqr']:.3f} ({row['n_calls']} calls)")
        else:
            print(f"species {row['species']}: {row['status']}")
    print(f"spearman rho {result.spearman_rho:.3f}, adjacent violations {result.monotone_violations}")
    if not result.complete:
        print(f"failed species: {result.failed_species}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_pecep(args):
    residuals, meta = binio.read_matrix(args.residuals)
    bound = gaussian_noise_entropy(args.sigma2, residuals.shape[1]) if args.sigma2 else None
    rep = entropy_report(residuals, args.ridge, theoretical_bound=bound)
    rec = {"source": str(args.residuals), **rep.to_dict()}
    if args.out:
        report_emit([rec], args.format, args.out, config={"ridge": args.ridge, "sigma2": args.sigma2})
    else:
        print(json.dumps(rec, indent=1))
    return EXIT_OK


def cmd_report(args):
    records = read_csv_records(args.records)
    if not records:
        raise InvalidConfigError(f"{args.records} holds no records")
    cols = set(records[0])
    out = Path(args.out)
    if {"trial", "sigma2", "predictor"} <= cols:
        rows = summarize_exp1(records)
        path = report_emit(rows, args.format, out / f"exp1_summary.{args.format}")
    elif {"species", "call", "pecep"} <= cols:
        species = sorted({r["species"] for r in records})
        rows, rho, violations = rank_species(records, species)
        extra = {"spearman_rho": rho, "monotone_violations": violations}
        path = report_emit(rows, "json", out / "exp2_ranking.json", extra=extra)
    else:
        raise InvalidConfigError(f"{args.records}: not an exp1 records or exp2 calls table")
    print(f"wrote {path}")
    return EXIT_OK


def make_parser():
    parser = _Parser(prog="pecep", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-var", help="simulate a VAR series")
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--p", type=int, default=4)
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--band-width", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_gen_var)

    p = sub.add_parser("gen-audio", help="write the synthetic species corpus")
    _common(p, fmt=False)
    p.add_argument("--species", type=int, help="only this species index")
    p.set_defaults(func=cmd_gen_audio)

    p = sub.add_parser("exp1", help="VAR convergence experiment")
    _common(p)
    p.set_defaults(func=cmd_exp1)

    p = sub.add_parser("exp2", help="species ranking experiment")
    _common(p)
    p.add_argument("--save-audio", action="store_true", help="also write the WAV corpus")
    p.set_defaults(func=cmd_exp2)

    p = sub.add_parser("pecep", help="entropy report for a residual matrix")
    p.add_argument("residuals", help="raw <f8 matrix with JSON sidecar")
    p.add_argument("--ridge", type=float, default=0.0)
    p.add_argument("--sigma2", type=float, help="noise variance for the theoretical bound")
    p.add_argument("--format", choices=("csv", "json"), default="json")
    p.add_argument("--out", help="report file (stdout when omitted)")
    p.set_defaults(func=cmd_pecep)

    p = sub.add_parser("report", help="re-aggregate an emitted CSV table")
    p.add_argument("records", help="exp1_records.csv or exp2_calls.csv")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    args = make_parser().parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        print("pecep: error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except InvalidConfigError as exc:
        print(f"pecep: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PecepError, OSError) as exc:
        print(f"pecep: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
