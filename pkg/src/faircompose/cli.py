"""Command line entry point.

Exit codes: 0 ran, 1 runtime failure (e.g. a classifier failing its own
audit), 2 invalid input, 3 infeasibility reported as an error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence

import numpy as np
import yaml
from pydantic import ValidationError

from . import _jit
from .constrained import check_constrained_feasibility
from .core import (
    FairnessError,
    InfeasibleError,
    InvalidMetricError,
    audit_conditional_parity,
    audit_individual_fairness,
)
from .demos import DEMOS, run_named_demo
from .experiments import (
    group_structures,
    build_instance,
    evaluate_composition,
    evaluate_feasibility,
    run_scenario,
)
from .group_audit import audit_subgroup_parity
from .scenario import ConstrainedComposition, Scenario, composition_label, load_scenario

log = logging.getLogger("faircompose")

EXIT_OK, EXIT_FAILED, EXIT_INVALID, EXIT_INFEASIBLE = 0, 1, 2, 3
STAGES = ("metrics", "classifiers", "compositions", "groups")


def _load(path: str, seed: int | None = None, universes: int | None = None, workers: int | None = None) -> Scenario:
    sc = load_scenario(path)
    update = {k: v for k, v in {"seed": seed, "universes": universes, "workers": workers}.items() if v is not None}
    if update:
        sc = Scenario.model_validate({**sc.model_dump(), **update})
    return sc


def _format_rows(rows) -> str:
    w = max([len("composition"), *(len(r.composition_type) for r in rows)])
    head = f"{'composition':<{w}} {'task':<10} {'% violating':>11} {'avg':>8} {'max':>8}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(
            f"{r.composition_type:<{w}} {r.task:<10} {r.pct_pairs_violating:>10.2f}% "
            f"{r.avg_violation:>8.4f} {r.max_violation:>8.4f}"
        )
    return "\n".join(lines)


def cmd_validate(args) -> int:
    sc = _load(args.scenario)
    print(f"ok: {sc.name!r}, {len(sc.tasks)} task(s), {len(sc.compositions)} composition(s), "
          f"{sc.universe_count()} universe(s)")
    return EXIT_OK


def cmd_run(args) -> int:
    sc = _load(args.scenario, args.seed, args.universes, args.workers)
    log.info("running %s with %s backend", sc.name, _jit.backend())
    res = run_scenario(sc)
    print(_format_rows(res.rows))
    for i, label, rep in res.feasibility[:10]:
        print(f"[universe {i}] {label}: {rep.summary()}")
    if args.out:
        paths = res.write(args.out, plots=False if args.no_plots else None)
        print(f"wrote {len(paths)} file(s) to {args.out}")
    return EXIT_OK


def cmd_demo(args) -> int:
    if args.list or not args.name:
        print("\n".join(DEMOS))
        return EXIT_OK
    try:
        print(run_named_demo(args.name))
    except KeyError as e:
        print(e.args[0], file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def cmd_audit(args) -> int:
    sc = _load(args.scenario, args.seed)
    seeds = np.random.SeedSequence(sc.seed).spawn(sc.universe_count())
    if not 0 <= args.universe < len(seeds):
        print(f"universe must be in [0, {len(seeds)})", file=sys.stderr)
        return EXIT_INVALID
    inst = build_instance(sc, args.universe, seeds[args.universe])
    if args.stage == "metrics":
        for t, m in zip(sc.tasks, inst.metrics):
            off = m.dist[np.triu_indices(m.size, 1)]
            print(f"{t.name}: valid metric on {m.size} elements, distances in [{off.min():.4g}, {off.max():.4g}]"
                  if off.size else f"{t.name}: single element")
    elif args.stage == "classifiers":
        for t, m, c in zip(sc.tasks, inst.metrics, inst.classifiers):
            rep = audit_individual_fairness(m, c, sc.epsilon)
            print(f"{t.name}: allocation {c.p.sum():.4g}; {rep.summary()}")
    elif args.stage == "compositions":
        for c in sc.compositions:
            label = composition_label(c)
            if isinstance(c, ConstrainedComposition):
                print(f"{label}: {evaluate_feasibility(sc, c, inst).summary()}")
                continue
            for o in evaluate_composition(sc, c, inst):
                rep = audit_individual_fairness(o.metric, o.probs, sc.epsilon)
                print(f"{label} / {o.task}: {rep.summary()}")
    else:
        groups = group_structures(sc)
        if not groups:
            print("scenario defines no groups")
        for task, specs in groups.items():
            c = inst.classifiers[sc.task_index(task)]
            for g, indicators in specs:
                print(f"{task}: {audit_conditional_parity(g, c, sc.epsilon).summary()}")
                for ind in indicators:
                    print(f"{task} refined by {ind}: {audit_subgroup_parity(g, ind, c, sc.epsilon).summary()}")
    return EXIT_OK


def _part(text: str) -> tuple[float, float]:
    try:
        beta, gamma = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected BETA,GAMMA, got {text!r}") from None
    return beta, gamma


def cmd_feasibility(args) -> int:
    try:
        rep = check_constrained_feasibility(args.size_a, args.size_b, args.n, args.p, args.part)
    except InfeasibleError as e:
        print(f"infeasible: {e}")
        return EXIT_INFEASIBLE if args.error_if_infeasible else EXIT_OK
    print(rep.summary())
    if rep.feasible is False and args.error_if_infeasible:
        return EXIT_INFEASIBLE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="faircompose", description="Audit compositions of fair classifiers.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario file against the schema")
    p.add_argument("scenario")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("run", help="run a scenario and write reports")
    p.add_argument("scenario")
    p.add_argument("--out", default=None, help="directory for report.csv, pairs.csv and plots")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--universes", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("demo", help="print a named worked example")
    p.add_argument("name", nargs="?")
    p.add_argument("--list", action="store_true")
    p.set_defaults(fn=cmd_demo)

    p = sub.add_parser("audit", help="audit one stage of a scenario on one universe")
    p.add_argument("scenario")
    p.add_argument("--stage", choices=STAGES, required=True)
    p.add_argument("--universe", type=int, default=0)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_audit)

    p = sub.add_parser("feasibility", help="check a quota against a matching witness")
    p.add_argument("--size-a", type=int, required=True)
    p.add_argument("--size-b", type=int, required=True)
    p.add_argument("-n", type=int, required=True, help="cohort size")
    p.add_argument("--p", type=float, default=None, help="required share from A")
    p.add_argument("--part", type=_part, action="append", required=True, metavar="BETA,GAMMA")
    p.add_argument("--error-if-infeasible", action="store_true")
    p.set_defaults(fn=cmd_feasibility)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.fn(args)
    except (ValidationError, yaml.YAMLError, InvalidMetricError, FileNotFoundError, ValueError) as e:
        print(f"invalid input: {e}", file=sys.stderr)
        return EXIT_INVALID
    except InfeasibleError as e:
        print(f"infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except FairnessError as e:
        print(f"failed: {e}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
