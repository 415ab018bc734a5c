"""Command-line entry point: ``run``, ``validate`` and ``plan``."""
from __future__ import annotations

import argparse
import sys
from contextlib import contextmanager

from slicelan.errors import FabricError, ScenarioError, SliceLanError, UnknownEndpoint
from slicelan.fabric import build_fabric
from slicelan.orchestrator import admit_flow, dumps_plan
from slicelan.scenarios.config import load_json, parse_flow, parse_scenario
from slicelan.scenarios.csvio import write_metrics_csv
from slicelan.scenarios.presets import preset_document
from slicelan.scenarios.runner import run_experiment

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
PRESET_PREFIX = "preset:"


def _scenario_document(spec: str) -> dict:
    if spec.startswith(PRESET_PREFIX):
        return preset_document(spec[len(PRESET_PREFIX):])
    return load_json(spec)


class InvalidInput(Exception):
    pass


@contextmanager
def _validating():
    try:
        yield
    except (FabricError, ScenarioError, KeyError, TypeError, ValueError) as exc:
        raise InvalidInput(str(exc)) from exc


def _load_topology(path: str | None):
    return None if path is None else load_json(path)


def cmd_run(args: argparse.Namespace) -> int:
    doc = dict(_scenario_document(args.scenario))
    if args.no_orchestrator:
        doc["orchestrator_enabled"] = False
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.tick_ms is not None:
        doc["tick_ms"] = args.tick_ms
    with _validating():
        scenario = parse_scenario(doc, _load_topology(args.topology))
    result = run_experiment(scenario)
    ticks, windows = write_metrics_csv(result.series, result.summary, args.out)
    print(f"wrote {ticks} and {windows} ({len(result.series.records)} ticks, {result.wall_s:.2f} s)")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    with _validating():
        fabric = build_fabric(load_json(args.topology))
        msg = f"topology ok: {len(fabric.switches)} switches, {len(fabric.endpoints)} endpoints"
        if args.scenario:
            sc = parse_scenario(_scenario_document(args.scenario), fabric)
            msg += f"; scenario ok: {len(sc.flows)} flows over {sc.duration_s:g} s"
    print(msg)
    return EXIT_OK


def cmd_plan(args: argparse.Namespace) -> int:
    with _validating():
        fabric = build_fabric(load_json(args.topology))
        flow = parse_flow(load_json(args.flow), duration_s=1.0)
        for ep in (flow.src, flow.dst):
            if ep not in fabric.endpoints:
                raise UnknownEndpoint(f"unknown endpoint {ep!r}")
    print(dumps_plan(flow.id, admit_flow(fabric, flow, {})))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="slicelan", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scenario and write CSV metrics")
    r.add_argument("--topology", help="topology JSON (optional for presets or documents embedding one)")
    r.add_argument("--scenario", required=True, help="scenario JSON or preset:motivation / preset:lanimpact")
    r.add_argument("--no-orchestrator", action="store_true")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--seed", type=int)
    r.add_argument("--tick-ms", type=int)
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", help="check a topology and optionally a scenario")
    v.add_argument("--topology", required=True)
    v.add_argument("--scenario")
    v.set_defaults(func=cmd_validate)

    pl = sub.add_parser("plan", help="print the admission plan for one RAN flow on an idle fabric")
    pl.add_argument("--topology", required=True)
    pl.add_argument("--flow", required=True)
    pl.set_defaults(func=cmd_plan)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvalidInput as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SliceLanError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
