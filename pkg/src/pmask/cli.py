"""``pmask`` command line: check, asf, measure, graph, sweep, random."""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from pathlib import Path

from .core import DistError, validate
from .fairness import decide_asf
from .game import build, dump_text, stats, to_dot
from .lang import ModelError, elaborate, parse_file, to_model_text
from .masking import WitnessError, decide_masking
from .measure import MeasureConfig, MeasureError, measure

EXIT_OK, EXIT_USAGE, EXIT_MODEL, EXIT_METRIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"pmask: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _const(text: str) -> tuple[str, Fraction]:
    name, sep, val = text.partition("=")
    if not sep or not name.strip():
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {text!r}")
    try:
        return name.strip(), Fraction(val.strip())
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"bad constant value {val!r}") from None


def _grid(text: str) -> tuple[str, list[Fraction]]:
    name, sep, vals = text.partition("=")
    if not sep or not name.strip():
        raise argparse.ArgumentTypeError(f"expected NAME=V1,V2,..., got {text!r}")
    try:
        return name.strip(), [Fraction(v.strip()) for v in vals.split(",") if v.strip()]
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"bad grid values {vals!r}") from None


def parse_milestones(spec: str) -> frozenset:
    """``tick:2,rfsh`` -> {("tick", 2), ("rfsh", 2)}; the side defaults to 2."""
    out = set()
    for item in spec.split(","):
        item = item.strip()
        if not item:
            continue
        name, sep, side = item.partition(":")
        side = side.strip() if sep else "2"
        if side not in ("1", "2") or not name:
            raise UsageError(f"bad milestone {item!r} (expected ACTION[:1|2])")
        out.add((name.strip(), int(side)))
    if not out:
        raise UsageError("empty milestone set")
    return frozenset(out)


def _ms_label(ms) -> str:
    return ",".join(f"{a}:{s}" for a, s in sorted(ms))


def _fmt_const(v: Fraction) -> str:
    return str(v) if v.denominator != 1 else str(v.numerator)


def _faults(args):
    if not args.faults:
        return None
    return {f.strip() for item in args.faults for f in item.split(",") if f.strip()}


def load_pair(args, consts: dict):
    used = set()
    models = []
    for path, faults in ((args.nominal, None), (args.impl, _faults(args))):
        try:
            mf = parse_file(path, consts, lenient=True)
            pts = elaborate(mf, faults)
        except ModelError as e:
            raise ModelError(f"{path}: {e}") from None
        used |= mf.overridden
        problems = validate(pts)
        if problems:
            raise ModelError(f"{path}: " + "; ".join(problems))
        models.append(pts)
    unused = set(consts) - used
    if unused:
        raise UsageError(f"constant(s) {', '.join(sorted(unused))} not declared in either model")
    return models


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2)


def _config(args, ms) -> MeasureConfig:
    return MeasureConfig(milestones=ms, epsilon=args.epsilon, max_iters=args.max_iters)


def _milestone_sets(args) -> list:
    specs = args.milestone or []
    if not specs:
        raise UsageError("at least one --milestone is required")
    sets = [parse_milestones(s) for s in specs]
    if any(side == 1 for ms in sets for _, side in ms):
        print("pmask: warning: side-1 milestones count nominal moves; the metric is defined for side 2",
              file=sys.stderr)
    return sets


# --- subcommands ---------------------------------------------------------------

def cmd_check(args, out):
    nom, imp = load_pair(args, dict(args.const or []))
    res = decide_masking(nom, imp)
    rep = {"command": "check", **res.to_json()}
    if args.json:
        out.write(_dump(rep) + "\n")
    else:
        out.write(f"masking: {str(res.verdict).lower()}\n")
        if res.verdict:
            out.write(f"relation: {len(res.relation)} pairs\n")
            for r in rep["relation"]:
                out.write(f"  {r['nominal_label']}  ~  {r['impl_label']}\n")
        else:
            out.write("refutation trace:\n")
            for step in rep["trace"]:
                out.write(f"  [{step['level']}] {step['vertex']}\n")
    return EXIT_OK


def cmd_asf(args, out):
    nom, imp = load_pair(args, dict(args.const or []))
    g = build(nom, imp)
    res = decide_asf(g)
    rep = {"command": "asf", **res.to_json(g)}
    if args.json:
        out.write(_dump(rep) + "\n")
    else:
        out.write(f"asf: {str(res.asf).lower()}\n")
        if not res.asf:
            out.write(f"unsafe vertices: {len(res.unsafe)}\n")
    return EXIT_OK


def cmd_measure(args, out):
    sets = _milestone_sets(args)
    nom, imp = load_pair(args, dict(args.const or []))
    g = build(nom, imp)
    if not decide_asf(g).asf:
        raise MeasureError("not almost-sure failing under fairness: metric undefined")
    results = []
    for ms in sets:
        r = measure(nom, imp, _config(args, ms), graph=g, check_asf=False)
        results.append({"milestones": _ms_label(ms), **r.to_json()})
    if args.json:
        consts = {k: _fmt_const(v) for k, v in (args.const or [])}
        out.write(_dump({"command": "measure", "constants": consts, "results": results}) + "\n")
    else:
        out.write(f"{'milestones':<16}{'value':>12}{'u':>10}{'iters':>8}\n")
        for r in results:
            out.write(f"{r['milestones']:<16}{r['value']:>12.2f}{r['u_used']:>10g}{r['iters']:>8}\n")
    return EXIT_OK


def cmd_graph(args, out):
    nom, imp = load_pair(args, dict(args.const or []))
    g = build(nom, imp)
    st = stats(g)
    if args.dot:
        Path(args.dot).write_text(to_dot(g), encoding="utf-8")
    if args.dump:
        out.write(dump_text(g))
    elif args.json:
        out.write(_dump({"command": "graph", **st}) + "\n")
    else:
        out.write(" ".join(f"{k}={v}" for k, v in st.items()) + "\n")
    return EXIT_OK


def sweep_rows(args, sets, grid):
    names = [n for n, _ in grid]
    fixed = dict(args.const or [])
    combos = [] if not grid else list(itertools.product(*[vals for _, vals in grid]))

    def run(combo):
        consts = {**fixed, **dict(zip(names, combo))}
        row = {"constants": {k: _fmt_const(v) for k, v in zip(names, combo)}, "values": {},
               "iters": 0, "residual": 0.0, "error": None}
        try:
            nom, imp = load_pair(args, consts)
            g = build(nom, imp)
            if not decide_asf(g).asf:
                raise MeasureError("not almost-sure failing under fairness: metric undefined")
            for ms in sets:
                r = measure(nom, imp, _config(args, ms), graph=g, check_asf=False)
                row["values"][_ms_label(ms)] = r.value
                row["iters"] += r.iters
                row["residual"] = max(row["residual"], r.residual)
        except (MeasureError, ModelError, DistError, UsageError, ValueError) as e:
            row["error"] = str(e)
        return row

    workers = max(1, int(os.environ.get("PMASK_THREADS", "1") or 1))
    if workers == 1:
        return names, [run(c) for c in combos]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return names, list(pool.map(run, combos))


def cmd_sweep(args, out):
    sets = _milestone_sets(args)
    grid = args.grid or []
    names, rows = sweep_rows(args, sets, grid)
    labels = [_ms_label(ms) for ms in sets]
    if args.json:
        out.write(_dump({"command": "sweep", "milestones": labels, "rows": rows}) + "\n")
        return EXIT_OK
    if args.csv:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(names + labels + ["iters", "residual", "error"])
        for r in rows:
            vals = [f"{r['values'][m]:.2f}" if m in r["values"] else "" for m in labels]
            w.writerow([r["constants"][n] for n in names] + vals
                       + [r["iters"], f"{r['residual']:.3e}", r["error"] or ""])
        text = buf.getvalue()
        if args.csv == "-":
            out.write(text)
        else:
            Path(args.csv).write_text(text, encoding="utf-8")
        return EXIT_OK
    head = "".join(f"{n:>8}" for n in names) + "".join(f"{m:>14}" for m in labels) + f"{'iters':>8}"
    out.write(head + "\n")
    for r in rows:
        line = "".join(f"{r['constants'][n]:>8}" for n in names)
        if r["error"]:
            line += f"  FAILED: {r['error']}"
        else:
            line += "".join(f"{r['values'][m]:>14.2f}" for m in labels) + f"{r['iters']:>8}"
        out.write(line + "\n")
    return EXIT_OK


def cmd_random(args, out):
    from .oracle import random_pair

    nom, imp = random_pair(args.seed)
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    (d / "nominal.pm").write_text(to_model_text(nom, "NOMINAL"), encoding="utf-8")
    (d / "impl.pm").write_text(to_model_text(imp, "IMPL"), encoding="utf-8")
    out.write(f"wrote {d / 'nominal.pm'} and {d / 'impl.pm'}\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pmask", description="Probabilistic masking simulation and masking-tolerance metric.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def pair(sp):
        sp.add_argument("nominal", help="nominal model file")
        sp.add_argument("impl", help="implementation model file")
        sp.add_argument("--faults", action="append", metavar="A[,B]",
                        help="fault actions of the implementation (overrides its 'faults' declaration)")
        sp.add_argument("--const", action="append", type=_const, metavar="NAME=VALUE")
        sp.add_argument("--json", action="store_true", help="JSON report")
        return sp

    def metric(sp):
        sp.add_argument("--milestone", action="append", metavar="ACT[:SIDE][,...]",
                        help="one milestone set per flag; side defaults to 2")
        sp.add_argument("--epsilon", type=float, default=1e-9)
        sp.add_argument("--max-iters", type=int, default=1_000_000)
        return sp

    pair(sub.add_parser("check", help="decide masking simulation"))
    pair(sub.add_parser("asf", help="decide almost-sure failing under fairness"))
    metric(pair(sub.add_parser("measure", help="masking-tolerance metric")))
    g = pair(sub.add_parser("graph", help="symbolic game graph statistics"))
    g.add_argument("--dot", metavar="PATH", help="write Graphviz DOT")
    g.add_argument("--dump", action="store_true", help="print the text dump")
    s = metric(pair(sub.add_parser("sweep", help="metric over a grid of constants")))
    s.add_argument("--grid", action="append", type=_grid, metavar="NAME=V1,V2")
    s.add_argument("--csv", metavar="PATH", help="write CSV ('-' for stdout)")
    r = sub.add_parser("random", help="write a seeded random model pair")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", default=".")
    return p


COMMANDS = {"check": cmd_check, "asf": cmd_asf, "measure": cmd_measure, "graph": cmd_graph,
            "sweep": cmd_sweep, "random": cmd_random}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return COMMANDS[args.command](args, out)
    except UsageError as e:
        print(f"pmask: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"pmask: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ModelError, DistError, ValueError) as e:
        print(f"pmask: model error: {e}", file=sys.stderr)
        return EXIT_MODEL
    except MeasureError as e:
        print(f"pmask: {e}", file=sys.stderr)
        return EXIT_METRIC
    except WitnessError as e:
        print(f"pmask: internal error: witness failed verification: {e}", file=sys.stderr)
        return EXIT_METRIC


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
