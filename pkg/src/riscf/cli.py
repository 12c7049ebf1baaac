"""Command line entry point: ``riscf run | sweep | validate``.

Exit status is 0 only when every requested cell ran to completion (and,
for ``validate``, when the config has no problems).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ScenarioConfig, SolverSettings, load_config, validate
from .experiments import RAW_COLUMNS, SweepSpec, _write_csv, run_cell, run_sweep, scenario_fig4, scenario_fig7

log = logging.getLogger("riscf")

SCENARIOS = ("fig4", "fig7")


def _scenario(name: str, seed: int, L: float | None, solver: SolverSettings) -> ScenarioConfig:
    if name == "fig4":
        return scenario_fig4(25.0 if L is None else L, seed, solver=solver)
    if name == "fig7":
        if L is not None:
            raise ValueError("--L applies to fig4 only")
        return scenario_fig7(seed, solver=solver)
    raise ValueError(f"unknown scenario {name!r}; pick one of {SCENARIOS}")


def _solver(args) -> SolverSettings:
    return SolverSettings.coarse() if args.coarse else SolverSettings()


def _reseed(cfg: ScenarioConfig, seed: int) -> ScenarioConfig:
    # the reference topologies draw user positions from the seed too
    if cfg.meta.get("scenario") == "fig4":
        return scenario_fig4(cfg.meta["L"], seed, constraint=cfg.constraint, solver=cfg.solver)
    if cfg.meta.get("scenario") == "fig7":
        return scenario_fig7(seed, constraint=cfg.constraint, solver=cfg.solver)
    return cfg.replace(seed=int(seed))


def _number(text: str):
    try:
        return int(text)
    except ValueError:
        return float(text)


def _read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def _base_from(doc, args) -> ScenarioConfig:
    """Scenario from a sweep file entry: a reference name, ``{"name": ..., "L": ...}`` or a full config."""
    if isinstance(doc, str):
        return _scenario(doc, 0, None, _solver(args))
    if "dims" in doc:
        return ScenarioConfig.from_dict(doc)
    return _scenario(doc["name"], int(doc.get("seed", 0)), doc.get("L"), _solver(args))


def _print_rows(rows) -> None:
    for r in rows:
        status = "error" if r["converged"] == "error" else f"wsr={r['wsr']:.6g} iterations={r['iterations']}"
        print(f"{r['scenario']} {r['variant']} seed={r['seed']}: {status}")


def cmd_run(args) -> int:
    if args.config:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = _reseed(cfg, args.seed)
    else:
        cfg = _scenario(args.scenario, 0 if args.seed is None else args.seed, args.L, _solver(args))
    problems = validate(cfg)
    if problems:
        for p in problems:
            print(f"invalid config: {p}", file=sys.stderr)
        return 2
    variants = args.variant or ["f1"]
    trials = args.trials or 1
    rows = []
    for variant in variants:
        for t in range(trials):
            seed = cfg.seed + t
            run_cfg = cfg if t == 0 else _reseed(cfg, seed)
            rows.append(run_cell(run_cfg, None, None, variant, t, seed, args.timing))
    _print_rows(rows)
    if args.out:
        _write_csv(Path(args.out), RAW_COLUMNS, rows)
    return 0 if all(r["converged"] != "error" for r in rows) else 1


def cmd_sweep(args) -> int:
    if args.config:
        doc = _read_json(args.config)
        base = _base_from(doc.get("scenario", "fig4"), args)
        spec_doc = dict(doc["sweep"])
    else:
        if not (args.var and args.values):
            print("sweep needs --config or both --var and --values", file=sys.stderr)
            return 2
        base = _scenario(args.scenario, 0, args.L, _solver(args))
        spec_doc = {"variable": args.var, "values": args.values}
    if args.trials is not None:
        spec_doc["trials"] = args.trials
    if args.variant:
        spec_doc["variants"] = args.variant
    if args.seed is not None:
        spec_doc["seed"] = args.seed
    spec = SweepSpec.from_dict(spec_doc)
    res = run_sweep(spec, base, args.out, n_jobs=args.jobs, timing=args.timing, json_mirror=args.json)
    for s in res.summary:
        print(f"{s['variant']} {s['sweep_var']}={s['sweep_value']}: mean={s['mean_wsr']:.6g} "
              f"stderr={s['stderr_wsr']:.3g} failed={s['failed']}")
    return 0 if res.failed == 0 else 1


def cmd_validate(args) -> int:
    doc = _read_json(args.config)
    problems = []
    if "sweep" in doc:
        try:
            SweepSpec.from_dict(doc["sweep"])
            cfg = _base_from(doc.get("scenario", "fig4"), args)
        except (KeyError, TypeError, ValueError) as exc:
            problems.append(str(exc))
            cfg = None
    else:
        try:
            cfg = ScenarioConfig.from_dict(doc)
        except (KeyError, TypeError, ValueError) as exc:
            problems.append(str(exc))
            cfg = None
    if cfg is not None:
        problems.extend(validate(cfg))
    for p in problems:
        print(p)
    if not problems:
        print("ok")
    return 0 if not problems else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="riscf", description="RIS-aided cell-free precoding experiments")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, sweep: bool):
        p.add_argument("--config", help="scenario JSON (run) or sweep JSON (sweep)")
        p.add_argument("--scenario", choices=SCENARIOS, default="fig4")
        p.add_argument("--L", type=float, help="user distance for fig4, meters")
        p.add_argument("--out", help="CSV output path")
        p.add_argument("--seed", type=int, help="channel seed (run) or master seed (sweep)")
        p.add_argument("--trials", type=int)
        p.add_argument("--variant", action="append", help="f1, f2, f3:L or noris; repeatable")
        p.add_argument("--coarse", action="store_true", help="stop at 2%% relative change")
        p.add_argument("--timing", action="store_true", help="fill the runtime_s column")
        if sweep:
            p.add_argument("--var", help="sweep variable")
            p.add_argument("--values", type=_number, nargs="+")
            p.add_argument("--jobs", type=int, default=1)
            p.add_argument("--json", action="store_true", help="also write a JSON mirror")

    common(sub.add_parser("run", help="optimize one scenario"), sweep=False)
    common(sub.add_parser("sweep", help="Monte-Carlo parameter sweep"), sweep=True)
    v = sub.add_parser("validate", help="check a scenario or sweep file")
    v.add_argument("--config", required=True)
    v.add_argument("--coarse", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": cmd_run, "sweep": cmd_sweep, "validate": cmd_validate}[args.command]
    try:
        return handler(args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"riscf: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
