"""Command line: ``tonelli-gl run|validate <config-or-preset>``, ``tonelli-gl presets list``.

Exit codes: 0 success, 1 validation found violations, 2 parse error,
3 precondition violation, 4 numeric failure.  Errors go to stderr as JSON
{code, module, message, context}.  Outputs land under $TONELLI_GL_OUT
(default ./runs), one fresh directory per run.
"""

import argparse
import json
import os
import sys

from . import presets, scenario
from .config import load
from .errors import ConfigParseError, TonelliError


def _resolve(target):
    if os.path.exists(target):
        return load(target)
    if target in presets.PRESETS:
        return presets.get(target)
    raise ConfigParseError(f"no such config file or preset: {target}", path=target)


def _cmd_run(args):
    try:
        cfg = _resolve(args.config)
    except TonelliError as exc:
        print(json.dumps(exc.to_json()), file=sys.stderr)
        return exc.exit_code
    code, payload, outdir = scenario.execute(cfg, args.out)
    if code:
        print(json.dumps(payload), file=sys.stderr)
    else:
        print(json.dumps({"output": str(outdir), "summary": payload}, default=scenario._jsonable, indent=2))
    return code


def _cmd_validate(args):
    if not os.path.exists(args.config) and args.config in presets.PRESETS:
        report = scenario.validate_text(presets.text(args.config))
    else:
        report = scenario.validate(args.config)
    print(json.dumps(report, indent=2))
    if any(v.startswith("parse:") for v in report["violations"]):
        return 2
    return 1 if report["violations"] else 0


def _cmd_presets(args):
    if args.action == "list":
        for name in presets.names():
            print(f"{name:20s} {presets.PRESETS[name][0]}")
        return 0
    if args.name not in presets.PRESETS:
        print(json.dumps({"code": "ConfigParseError", "module": "scenario", "message": f"unknown preset {args.name}", "context": {}}), file=sys.stderr)
        return 2
    sys.stdout.write(presets.text(args.name))
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="tonelli-gl", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="execute a scenario")
    r.add_argument("config", help="config file or preset name")
    r.add_argument("--out", help="explicit output directory (default: fresh dir under $TONELLI_GL_OUT)")
    r.set_defaults(func=_cmd_run)
    v = sub.add_parser("validate", help="check a scenario without running it")
    v.add_argument("config")
    v.set_defaults(func=_cmd_validate)
    p = sub.add_parser("presets", help="list or print named presets")
    p.add_argument("action", choices=("list", "show"))
    p.add_argument("name", nargs="?")
    p.set_defaults(func=_cmd_presets)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
