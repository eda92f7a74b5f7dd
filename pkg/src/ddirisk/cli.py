"""Command line entry point: one subcommand per pipeline stage."""

from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .errors import DdiRiskError
from .pipeline import COMMANDS, PIPELINE, RunConfig, run_pipeline, validate_inputs


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ddirisk",
                                description="Drug-drug interaction risk from dispensation records.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--config", help="JSON file with run options")
    p.add_argument("--seed", type=int, help="master seed (default 42)")
    p.add_argument("--out", help="output directory (default out/)")
    p.add_argument("--threads", type=int, help="worker threads; results do not depend on it")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "synth": "generate a synthetic cohort and write it with the bundled catalog",
        "profile": "ingest dispensations and build per-patient overlap profiles",
        "measures": "pair, drug, gender, severity, age and drug-count measures",
        "nullmodel": "randomized pair null model per age group",
        "network": "DDI network, node metrics and gender subgraphs",
        "classify": "cross-validated interaction risk classifier and baselines",
        "cost": "hospitalization cost projection tables",
        "pipeline": "run " + " -> ".join(PIPELINE),
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text, description=text)
        if name in ("profile", "pipeline"):
            sp.add_argument("--dispensations", help="dispensation CSV (default: synth output)")
            sp.add_argument("--patients", help="patient CSV")
            sp.add_argument("--catalog", help="interaction catalog CSV")
        if name == "synth":
            sp.add_argument("--patients-n", dest="synth_patients", type=int,
                            help="number of synthetic patients")
        if name in ("nullmodel", "pipeline"):
            sp.add_argument("--runs", dest="null_runs", type=int)
        if name == "cost":
            sp.add_argument("--params", dest="cost_params", help="cost parameter JSON")
            sp.add_argument("--rounding", dest="cost_rounding", choices=("floor", "half_up"))
        if name in ("network", "pipeline"):
            sp.add_argument("--betweenness", choices=("hops", "tau"))
    return p


_OPTION_KEYS = ("seed", "out", "threads", "dispensations", "patients", "catalog",
                "synth_patients", "null_runs", "cost_params", "cost_rounding", "betweenness")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = RunConfig.load(args.config,
                             **{k: getattr(args, k, None) for k in _OPTION_KEYS})
        validate_inputs(cfg)
        if args.command == "pipeline":
            run_pipeline(cfg)
        else:
            for path in COMMANDS[args.command](cfg):
                print(path)
    except DdiRiskError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
