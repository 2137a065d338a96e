"""Command-line entry point.

Subcommands: gen-scenario, run, ablate, sweep, render, serve.  Artifact
paths are printed; re-running with identical inputs rewrites identical
bytes (timings live in their own sidecar).  Exit codes: 0 success,
1 validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import metrics, rendering, scenarios
from .engine import run as run_session, start_session
from .errors import DragfieldError, ValidationError
from .field import generate
from .records import load_record

ENV_OUT_DIR = "DRAGFIELD_OUT"


def _out_dir(args) -> str:
    out = args.out or os.environ.get(ENV_OUT_DIR) or "out"
    os.makedirs(out, exist_ok=True)
    return out


def _config_overrides(args) -> dict:
    picked = {}
    for flag, key in (("tau", "tau"), ("lam", "lam"), ("eta", "eta"),
                      ("r1", "r1"), ("r2", "r2"), ("steps", "max_steps")):
        value = getattr(args, flag, None)
        if value is not None:
            picked[key] = value
    return picked


def _load_scenario(args) -> scenarios.Scenario:
    name = args.scenario
    if os.path.exists(name):
        scenario = scenarios.load(name)
    elif name in scenarios.TEMPLATES:
        scenario = scenarios.make_template(name)
    else:
        raise ValidationError(
            f"scenario {name!r} is neither a file nor a template "
            f"(templates: {sorted(scenarios.TEMPLATES)})")
    if args.seed is not None:
        scenario.seed = args.seed
    return scenario


def cmd_gen_scenario(args) -> int:
    scenario = scenarios.make_template(args.template)
    if args.seed is not None:
        scenario.seed = args.seed
    out = _out_dir(args)
    path = os.path.join(out, f"{scenario.name}.json")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(scenario.to_json())
    print(path)
    return 0


def cmd_run(args) -> int:
    scenario = _load_scenario(args)
    config = scenario.config(**_config_overrides(args))
    session = run_session(start_session(scenario, config))

    out = os.path.join(_out_dir(args), scenario.scenario_id())
    paths = session.record.save(out)

    before = rendering.field_image(session.F0)
    after = rendering.overlay_trajectories(
        rendering.field_image(session.F),
        [[p for _, p, _ in pt.trajectory] for pt in session.points],
        [pt.t for pt in session.points])
    before_path = os.path.join(out, "before.png")
    after_path = os.path.join(out, "after.png")
    rendering.save_png(before, before_path)
    rendering.save_png(after, after_path)

    print(paths["record"])
    print(paths["timings"])
    print(before_path)
    print(after_path)
    print(f"status={session.status} steps={session.step_count} "
          f"md={metrics.mean_distance(session):.3f} "
          f"fidelity={metrics.fidelity_proxy(session):.5f}")
    return 0


def cmd_ablate(args) -> int:
    suite = scenarios.suite(args.suite)
    results = metrics.ablate(suite, steps=args.steps, jobs=args.jobs)
    return _emit_report(args, results, "ablation")


def cmd_sweep(args) -> int:
    suite = scenarios.suite(args.suite)
    values = [float(v) for v in args.values.split(",")]
    results = metrics.sweep(args.parameter, values, suite,
                            steps=args.steps, jobs=args.jobs)
    return _emit_report(args, results, f"sweep_{args.parameter}")


def _emit_report(args, results, stem: str) -> int:
    out = _out_dir(args)
    data_path = os.path.join(out, f"{stem}.json")
    table_path = os.path.join(out, f"{stem}.txt")
    doc = {
        "rows": [r.to_dict() for r in results],
        "aggregate": metrics.aggregate(results),
    }
    with open(data_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    table = metrics.format_table(results)
    with open(table_path, "w", encoding="utf-8") as fh:
        fh.write(table)
    print(data_path)
    print(table_path)
    sys.stdout.write(table)
    return 0


def cmd_render(args) -> int:
    doc = load_record(args.record)
    scenario = scenarios.from_dict(doc["scenario"])
    steps = doc["steps"]
    if not steps:
        raise ValidationError("record has no steps to render")
    index = args.step if args.step is not None else len(steps)
    if not 1 <= index <= len(steps):
        raise ValidationError(
            f"step {index} outside 1..{len(steps)}")
    entry = steps[index - 1]

    field = generate(scenario.spec(), _latent_from(entry),
                     scenario_id=scenario.scenario_id())
    trails = []
    for i in range(len(scenario.points)):
        trail = [scenario.points[i].handle]
        trail += [tuple(s["points"][i]["p"]) for s in steps[:index]]
        trails.append(trail)
    img = rendering.overlay_trajectories(
        rendering.field_image(field), trails,
        [pt.target for pt in scenario.points])
    out = _out_dir(args)
    path = os.path.join(out, f"render_step{index:04d}.png")
    rendering.save_png(img, path)
    print(path)
    return 0


def _latent_from(entry):
    from .field import LatentCode

    return LatentCode(np.asarray(entry["w"], dtype=np.float64))


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    frontend = args.frontend
    if frontend is None:
        candidate = os.path.join(os.getcwd(), "frontend", "dist")
        frontend = candidate if os.path.isdir(candidate) else None
    app = create_app(out_dir=_out_dir(args), frontend_dir=frontend)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dragfield",
        description="Point-drag editing over synthetic feature fields")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario=False):
        p.add_argument("--out", default=None,
                       help=f"output directory (default: ${ENV_OUT_DIR} or ./out)")
        p.add_argument("--seed", type=int, default=None)
        if scenario:
            p.add_argument("--scenario", required=True,
                           help="scenario file path or template name")
            p.add_argument("--steps", type=int, default=None)
            p.add_argument("--tau", type=float, default=None)
            p.add_argument("--lambda", dest="lam", type=float, default=None)
            p.add_argument("--eta", type=float, default=None)
            p.add_argument("--r1", type=int, default=None)
            p.add_argument("--r2", type=int, default=None)

    p = sub.add_parser("gen-scenario", help="write a scenario file from a template")
    p.add_argument("template", choices=sorted(scenarios.TEMPLATES))
    common(p)
    p.set_defaults(fn=cmd_gen_scenario)

    p = sub.add_parser("run", help="execute one drag and write its record")
    common(p, scenario=True)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("ablate", help="four-variant ablation over a suite")
    p.add_argument("--suite", default="default")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    common(p)
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("sweep", help="tau/lambda sensitivity sweep")
    p.add_argument("--parameter", choices=("tau", "lambda"), required=True)
    p.add_argument("--values", default="0,0.2,0.4,0.6,0.8,1.0")
    p.add_argument("--suite", default="sweep")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    common(p)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("render", help="render one recorded step with trails")
    p.add_argument("--record", required=True, help="path to run_record.json")
    p.add_argument("--step", type=int, default=None,
                   help="1-based step (default: last)")
    common(p)
    p.set_defaults(fn=cmd_render)

    p = sub.add_parser("serve", help="start the session service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--frontend", default=None,
                   help="studio dist/ directory (default: ./frontend/dist if present)")
    common(p)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ValidationError as exc:
        for line in exc.violations:
            print(f"error: {line}", file=sys.stderr)
        return 1
    except DragfieldError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
