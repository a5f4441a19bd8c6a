"""Command-line front end: ``squashsim run | experiments | fuzz``.

Exit codes: 0 completed, 1 fuzz found a violation, 2 configuration error,
3 I/O error, 64 usage error. ``SQUASHSIM_LOG`` (off, info, debug) sets the
diagnostic verbosity on stderr.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import attacklab, fuzz
from .config import load_config
from .errors import ConfigError, IoError
from .metrics.attacks import export_timeline, write_json

EXIT_OK, EXIT_FUZZ_FAIL, EXIT_CONFIG, EXIT_IO, EXIT_USAGE = 0, 1, 2, 3, 64

log = logging.getLogger("squashsim")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="squashsim", description="Speculative-load cancellation simulator.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run one attack scenario")
    r.add_argument("--config", help="preset name (c1, c2, perf1, perf4) or JSON config file")
    r.add_argument("--scenario", default="spectre_pht", help="named scenario or JSON scenario file")
    r.add_argument("--cancel", type=_on_off, help="on|off (default: the scenario's setting)")
    r.add_argument("--out", default="out", help="output directory")
    r.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    r.add_argument("--seed", type=int, help="probe-order seed (default: the scenario's, 0)")

    e = sub.add_parser("experiments", help="run the built-in experiments 1-4")
    e.add_argument("--only", type=int, choices=sorted(attacklab.EXPERIMENTS))
    e.add_argument("--cancel", type=_on_off, help="force cancellation on|off for every experiment")
    e.add_argument("--out", default="out")
    e.add_argument("--format", choices=("csv", "jsonl"), default="csv")

    f = sub.add_parser("fuzz", help="randomised race-property checks")
    f.add_argument("--iters", type=int, default=1000)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out", default=".", help="directory for the repro file on failure")
    f.add_argument("--inject-bug", action="store_true", help=argparse.SUPPRESS)
    return p


def _setup_logging() -> None:
    level = os.environ.get("SQUASHSIM_LOG", "off").lower()
    levels = {"off": logging.CRITICAL + 1, "info": logging.INFO, "debug": logging.DEBUG}
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("squashsim")
    root.handlers[:] = [handler]
    root.setLevel(levels.get(level, levels["off"]))
    if level not in levels:
        print(f"squashsim: ignoring unknown SQUASHSIM_LOG={level!r}", file=sys.stderr)


def _outdir(path: str) -> Path:
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(p, exc.strerror or str(exc)) from exc
    return p


def cmd_run(args) -> int:
    cfg = load_config(args.config) if args.config else None
    overrides = {}
    if args.cancel is not None:
        overrides["cancel_enabled"] = args.cancel
    if args.seed is not None:
        overrides["seed"] = args.seed
    sc = attacklab.load_scenario(args.scenario, config=cfg, **overrides)
    out = _outdir(args.out)
    log.info("running %s on %s (cancel %s)", sc.name, sc.config.name, "on" if sc.cancel_enabled else "off")
    res = attacklab.run_attack(sc)
    summary = res.summary()
    write_json(out / "summary.json", summary)
    export_timeline(res.system.trace, res.records, out / f"timeline.{args.format}", args.format)
    print(f"leaked={summary['leaked']!r} attacks={summary['attacks_attempted']} "
          f"timed_out={summary['timed_out']} cc={summary['cc']}")
    return EXIT_OK


def cmd_experiments(args) -> int:
    out = _outdir(args.out)
    rows = []
    print(f"{'experiment':>10} {'leaked':>7} {'N_1':>5} {'N_2':>5} {'N_total':>8} {'cc':>9}")
    for res in attacklab.run_experiments(args.only, args.cancel):
        row = res.row()
        rows.append({**row, "summary": res.outcome.summary()})
        export_timeline(res.outcome.system.trace, res.outcome.records,
                        out / f"experiment{res.number}.{args.format}", args.format)
        print(f"{row['experiment']:>10} {str(row['leaked']):>7} {row['N_1']:>5} {row['N_2']:>5} "
              f"{row['N_total']:>8} {str(row['cc']):>9}")
    write_json(out / "experiments.json", rows)
    return EXIT_OK


def cmd_fuzz(args) -> int:
    if args.iters < 0:
        raise ConfigError("--iters must be >= 0")
    cache_cls = fuzz.BuggyCache if args.inject_bug else fuzz.Cache
    rep = fuzz.run_fuzz(args.iters, args.seed, cache_cls=cache_cls, out=Path(args.out))
    if rep.ok:
        print(f"fuzz: {args.iters} cases, no violations "
              f"(n-1 checked {rep.exercised['n_minus_1']}, cancel-first races {rep.exercised['cancel_before_response']})")
        return EXIT_OK
    print(f"fuzz: {rep.failures}/{args.iters} cases violated a property; first: "
          f"{rep.violations[0].prop}: {rep.violations[0].message}")
    print(f"repro written to {rep.repro_path}")
    return EXIT_FUZZ_FAIL


COMMANDS = {"run": cmd_run, "experiments": cmd_experiments, "fuzz": cmd_fuzz}


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"squashsim: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IoError as exc:
        print(f"squashsim: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
