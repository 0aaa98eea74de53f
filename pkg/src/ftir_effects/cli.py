"""Command-line entry point: ``ftir-effects <command> [options]``.

stdout receives only the path of the run report; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys

from .pipeline import COMMANDS, EXIT_INVALID, EXIT_IO, CommandError, RunConfig

# config-file keys that mirror command-line options
_CONFIG_OPTIONS = ("tol", "max_iter", "bcd_method", "bcd_restarts", "grid_theta", "grid_phi",
                   "cos_phi_floor")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ftir-effects",
        description="Template, treatment-effect and sparse-pattern estimation for FTIR spectra.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    helps = {
        "simulate": "generate synthetic pre/post-treatment spectra and their truth",
        "template": "estimate the template from pre-treatment spectra",
        "effect": "estimate pattern and effects from post-treatment spectra",
        "sparsify": "rotate the pattern to its sparsest interpretable form",
        "msc": "multiplicative scatter correction of pre-treatment spectra",
        "pipeline": "template -> effect -> sparsify in one run",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--config", help="JSON config (generator params and solver options)")
        p.add_argument("--pre", help="pre-treatment spectra CSV")
        p.add_argument("--post", help="post-treatment spectra CSV")
        p.add_argument("--template", help="template.json (default: <out>/template.json)")
        p.add_argument("--effect", help="effect.json (default: <out>/effect.json)")
        p.add_argument("--seed", type=int, help="generator seed (unsigned 64-bit)")
        p.add_argument("--exclude-labels", default=None,
                       help="comma-separated labels or label groups to drop")
        p.add_argument("--force", action="store_true", help="overwrite existing outputs")
        p.add_argument("--tol", type=float, help="relative objective decrease to stop BCD")
        p.add_argument("--max-iter", type=int, help="maximum BCD sweeps")
        p.add_argument("--bcd-method", choices=("joint", "plain"), help="BCD block layout")
        p.add_argument("--bcd-restarts", type=int,
                       help="extra BCD descents from seeded random patterns")
        p.add_argument("--grid-theta", type=int, help="landscape points in theta")
        p.add_argument("--grid-phi", type=int, help="landscape points in phi")
        p.add_argument("--cos-phi-floor", type=float, help="selection floor on |cos(phi)|")
        p.add_argument("--with-msc", action="store_true", help="pipeline: also run MSC")
    return parser


def resolve_config(args) -> RunConfig:
    cfg_doc = {}
    if args.config:
        try:
            with open(args.config) as fh:
                cfg_doc = json.load(fh)
        except FileNotFoundError:
            raise CommandError(f"config file not found: {args.config}", EXIT_INVALID) from None
        except json.JSONDecodeError as exc:
            raise CommandError(f"{args.config}: invalid JSON ({exc})", EXIT_INVALID) from None
        except OSError as exc:
            raise CommandError(f"cannot read {args.config}: {exc}", EXIT_IO) from None
        if not isinstance(cfg_doc, dict):
            raise CommandError(f"{args.config}: config must be a JSON object", EXIT_INVALID)
    rc = RunConfig(out=args.out, pre=args.pre, post=args.post, template=args.template,
                   effect=args.effect, config_path=args.config, config=cfg_doc,
                   seed=args.seed, force=args.force, with_msc=args.with_msc)
    for key in _CONFIG_OPTIONS:
        value = getattr(args, key)
        if value is None:
            value = cfg_doc.get(key)
        if value is not None:
            setattr(rc, key, value)
    exclude = args.exclude_labels
    if exclude is None:
        exclude = cfg_doc.get("exclude_labels", ())
    if isinstance(exclude, str):
        exclude = [s.strip() for s in exclude.split(",") if s.strip()]
    rc.exclude_labels = tuple(exclude)
    if not args.with_msc and cfg_doc.get("msc"):
        rc.with_msc = True
    try:
        rc.validate()
    except TypeError as exc:
        raise CommandError(f"invalid option type: {exc}", EXIT_INVALID) from None
    return rc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        report_path = COMMANDS[args.command](cfg)
    except CommandError as exc:
        print(f"ftir-effects {args.command}: error: {exc}", file=sys.stderr)
        return exc.code
    with open(report_path) as fh:
        for w in json.load(fh)["warnings"]:
            print(f"ftir-effects {args.command}: warning: {w}", file=sys.stderr)
    print(report_path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
