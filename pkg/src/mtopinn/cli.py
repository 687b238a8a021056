"""Command-line entry point: ``mtopinn <subcommand> [flags]``.

Any flag may also come from ``--config file.json`` (keys are the flag names
with dashes or underscores); explicit flags override file values.

Exit codes: 0 success, 1 validation/configuration error, 2 training divergence.
"""
import argparse
import json
import logging
import sys
from pathlib import Path

from . import dataflow, harness
from .errors import DivergenceError
from .mto import ALPHA_INIT_MODES
from .trainer import COLLOC_MODES

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED = 0, 1, 2


def _int_list(text):
    if isinstance(text, (list, tuple)):
        return [int(x) for x in text]
    text = str(text)
    if ".." in text:
        lo, hi = text.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in text.split(",") if x]


def _str_list(text):
    if isinstance(text, (list, tuple)):
        return list(text)
    return [x for x in str(text).split(",") if x]


def _widths(text):
    """'20x8' -> (20,)*8; '16,16' -> (16, 16)."""
    if isinstance(text, (list, tuple)):
        return tuple(int(x) for x in text)
    text = str(text)
    if "x" in text:
        w, n = text.split("x")
        return (int(w),) * int(n)
    return tuple(int(x) for x in text.split(","))


def _add_data(p):
    p.add_argument("--data", help="directory written by gen-data (default: generate in memory)")
    p.add_argument("--scenario-seed", type=int, default=1)
    p.add_argument("--out", default="runs", help="output directory")


def _add_train(p):
    p.add_argument("--main", default="density-A", choices=[n for n in harness.TASK_NAMES if n.startswith("density")])
    p.add_argument("--seeds", type=_int_list, default=list(harness.DEFAULT_SEEDS), help="e.g. 1..10 or 1,2,3")
    p.add_argument("--epochs", type=int, default=4000)
    p.add_argument("--batch-size", type=int, default=1024)
    p.add_argument("--n-colloc", type=int, default=None)
    p.add_argument("--colloc-mode", choices=COLLOC_MODES, default="per_epoch")
    p.add_argument("--hidden", type=_widths, default=(20,) * 8, help="hidden widths, e.g. 20x8")
    p.add_argument("--trigger", choices=("adaptive", "fixed"), default="adaptive")
    p.add_argument("--window", type=int, default=50)
    p.add_argument("--improvement", type=float, default=0.01)
    p.add_argument("--period", type=int, default=None, help="fixed-trigger period (default: window)")
    p.add_argument("--alpha-init", choices=ALPHA_INIT_MODES, default="identity")
    p.add_argument("--alpha-epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--alpha-lr", type=float, default=1e-2)
    p.add_argument("--workers", type=int, default=1)


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; 2 is reserved for divergence here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="mtopinn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="synthesise a field, training sets A/B and the test grid")
    p.add_argument("--scenario-seed", type=int, default=1)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="run one multi-seed plan")
    _add_data(p)
    _add_train(p)
    p.add_argument("--method", choices=harness.METHODS, default="PINN+MTO")
    p.add_argument("--aux", default="speed-B", choices=harness.TASK_NAMES)

    p = sub.add_parser("compare", help="NN vs PINN vs PINN+MTO table")
    _add_data(p)
    _add_train(p)
    p.add_argument("--auxiliaries", type=_str_list, default=["density-B", "speed-A", "speed-B"])

    for name, hlp in (("ablate-trigger", "fixed vs adaptive triggering"),
                      ("ablate-alpha", "five alpha initialisations"),
                      ("sweep-window", "adaptive window sweep")):
        p = sub.add_parser(name, help=hlp)
        _add_data(p)
        _add_train(p)
        p.add_argument("--aux", default="speed-B", choices=harness.TASK_NAMES)
        if name == "sweep-window":
            p.add_argument("--windows", type=_int_list, default=list(harness.DEFAULT_WINDOWS))

    p = sub.add_parser("report", help="rebuild tables from stored run.json files")
    p.add_argument("--run-dir", required=True)

    return parser, sub


def _apply_config_file(parser, sub, argv):
    pre = _Parser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if not known.config:
        return parser.parse_args(rest)
    with open(known.config, encoding="utf-8") as fh:
        values = {k.replace("-", "_"): v for k, v in json.load(fh).items()}
    cmd = parser.parse_args(rest).command
    subparser = sub.choices[cmd]
    converters = {a.dest: a.type for a in subparser._actions if a.type is not None}
    defaults = {}
    for k, v in values.items():
        conv = converters.get(k)
        defaults[k] = conv(v) if conv is not None and isinstance(v, str) else v
    subparser.set_defaults(**defaults)
    return parser.parse_args(rest)


def _bundle(args):
    if getattr(args, "data", None):
        return harness.DataBundle.load(args.data)
    return harness.DataBundle.from_scenario(args.scenario_seed)


def _overrides(args):
    from .netcore import Architecture
    return {
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "n_colloc": args.n_colloc,
        "colloc_mode": args.colloc_mode,
        "arch": Architecture(hidden_widths=tuple(args.hidden)),
        "trigger": {"kind": args.trigger, "window": args.window, "improvement": args.improvement,
                    "period": args.period or args.window},
        "alpha_init": args.alpha_init,
        "alpha_epochs": args.alpha_epochs,
        "lr": args.lr,
        "alpha_lr": args.alpha_lr,
    }


def _print_rows(rows):
    for r in rows:
        aux = r.auxiliary or "--"
        print(f"{r.method:9s} {r.main:10s} {aux:10s} loss {r.loss_mean:.4g} ± {r.loss_std:.2g}  "
              f"MAPE {r.mape_mean:.4f} ± {r.mape_std:.4f}  triggers {r.trigger_mean:.1f}"
              + (f"  p(MAPE)={r.p_mape:.3g}" if r.baseline else ""))


def _diverged(results):
    return any(s["status"] != "ok" for r in results for s in r.summaries)


def main(argv=None):
    parser, sub = build_parser()
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = _apply_config_file(parser, sub, argv)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return _dispatch(args)
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def _dispatch(args):
    cmd = args.command
    if cmd == "gen-data":
        fld = dataflow.rush_hour_scenario(args.scenario_seed)
        bundle = harness.DataBundle.from_field(fld)
        bundle.save(args.out, fld)
        print(f"wrote field {fld.Nt}x{fld.Nd}, {len(bundle.sets)} training sets and "
              f"{len(bundle.test)} test rows to {args.out}")
        return EXIT_OK
    if cmd == "report":
        for path in harness.report(args.run_dir):
            print(path)
        return EXIT_OK

    bundle = _bundle(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ov = _overrides(args)
    if cmd == "train":
        aux = args.aux if args.method == "PINN+MTO" else None
        res = harness.run_plan(harness.ExperimentPlan(args.method, args.main, aux, args.seeds, ov),
                               bundle, out, args.workers)
        harness.write_rows([res.row], out / f"{res.plan.name}.csv")
        _print_rows([res.row])
        return EXIT_DIVERGED if _diverged([res]) else EXIT_OK
    if cmd == "compare":
        results = harness.compare(bundle, args.main, args.auxiliaries, args.seeds, ov, out, args.workers)
        _print_rows([r.row for r in results])
        return EXIT_DIVERGED if _diverged(results) else EXIT_OK

    base = harness.ExperimentPlan("PINN+MTO", args.main, args.aux, args.seeds, ov)
    if cmd == "sweep-window":
        rows = harness.sweep_window(base, bundle, args.windows, out, args.workers)
        for r in rows:
            print(f"S={r.window:4d}  triggers {r.trigger_mean:6.2f}  loss {r.loss_mean:.4g} ± {r.loss_std:.2g}")
        return EXIT_OK
    kind = "trigger_strategy" if cmd == "ablate-trigger" else "alpha_init"
    cells, results = harness.ablate(kind, base, bundle, out, args.workers)
    for c in cells:
        flag = "best" if c.best else ("co-winner" if c.co_winner else "")
        print(f"{c.label:10s} loss {c.loss_mean:.4g} ± {c.loss_std:.2g}  MAPE {c.mape_mean:.4f}  {flag}")
    return EXIT_DIVERGED if _diverged(results) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
