"""Command-line front end.

Exit codes: 0 success, 1 FAIL (no feasible routing found / verification
mismatch), 2 usage or input error, 3 solver error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .capacitated import WidthError, quadratically_capacitated_flow
from .concurrent_mmw import ConcurrentConfig, binary_search_lambda, max_concurrent_flow
from .coupled import SolveOptions, quadratically_coupled_flow
from .generate import PROFILES, gen_instance, random_instance
from .graphcore import Instance, ParseError, incidence_transpose_apply, read_instance
from .kvec import EnergyMatrices, congestions
from .lapsolve import INNER_METHODS, SOLVERS, ConvergenceError
from .refsolve import BudgetError, lp_concurrent_oracle
from .signs import TableBudgetError, max_concurrent_flow_signs
from .trace import Trace
from .weighted import WeightedSpec, max_weighted_flow

SCHEMA = 1
EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    epsilon: float = 0.1
    outer: str = "mmw"
    solver: str = "cheby"
    inner: str = "direct"
    paper_faithful: bool = False
    n_outer: int | None = None
    rho_outer: float | None = None
    n_inner: int | None = None
    rho_inner: float | None = None
    seed: int = 0
    output: str = "json"
    out: str | None = None
    threads: int = 1

    def validate(self) -> None:
        if not 0 < self.epsilon < 0.5:
            raise UsageError("--epsilon must lie in (0, 0.5)")
        for name in ("n_outer", "rho_outer", "n_inner", "rho_inner"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise UsageError(f"--{name.replace('_', '-')} must be positive")
        if self.threads < 0:
            raise UsageError("--threads must be >= 0")

    def concurrent(self) -> ConcurrentConfig:
        return ConcurrentConfig(self.n_outer, self.rho_outer, self.n_inner, self.rho_inner,
                                self.paper_faithful, SolveOptions(self.solver, self.inner, self.paper_faithful))


# --------------------------------------------------------------------------
# parser


def _solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--outer", choices=("mmw", "signs"), default="mmw")
    p.add_argument("--solver", choices=SOLVERS, default="cheby")
    p.add_argument("--inner", choices=INNER_METHODS, default="direct",
                   help="Laplacian solver behind the preconditioner")
    p.add_argument("--paper-faithful", action="store_true",
                   help="exact iteration constants and unfloored solve tolerance")
    p.add_argument("--n-outer", type=int)
    p.add_argument("--rho-outer", type=float)
    p.add_argument("--n-inner", type=int)
    p.add_argument("--rho-inner", type=float)


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", choices=("json", "csv"), default="json")
    p.add_argument("--out", help="report path (default: stdout)")
    p.add_argument("--config", help="JSON file with defaults for these flags")
    p.add_argument("--threads", type=int, default=1, help="worker processes for bench (0 = all CPUs)")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="mcflow", description="Multicommodity flow solvers.")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = sub.add_parser("solve-concurrent", help="maximum concurrent flow by binary search")
    p.add_argument("instance")
    p.add_argument("--scale", type=float, help="route this multiple of the demands instead of searching")
    subs["solve-concurrent"] = p

    p = sub.add_parser("solve-weighted", help="maximum weighted multicommodity flow")
    p.add_argument("instance")
    p.add_argument("--weights", required=True, help="comma-separated, one per commodity")
    subs["solve-weighted"] = p

    p = sub.add_parser("coupled", help="minimum-energy flow with P(e) = I / u(e)^2")
    p.add_argument("instance")
    p.add_argument("--delta", type=float, default=1e-3)
    subs["coupled"] = p

    p = sub.add_parser("capacitated", help="saturation-bounded flow with P(e) = I / u(e)^2")
    p.add_argument("instance")
    subs["capacitated"] = p

    p = sub.add_parser("verify", help="both outer solvers against the LP optimum")
    p.add_argument("instance")
    subs["verify"] = p

    p = sub.add_parser("gen", help="write a random instance")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--profile", choices=PROFILES, default="random")
    subs["gen"] = p

    p = sub.add_parser("bench", help="iteration counts against m (runtime claim not reproduced)")
    p.add_argument("--sizes", default="8,16,32", help="comma-separated edge counts")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--repeats", type=int, default=2)
    subs["bench"] = p

    for name, p in subs.items():
        if name != "gen":
            _solver_flags(p)
        _common_flags(p)
    return parser, subs


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                defaults = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(defaults, dict):
            raise UsageError("config file must hold a JSON object")
        sp = subs[args.command]
        known = {a.dest for a in sp._actions}
        unknown = set(k.replace("-", "_") for k in defaults) - known
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        sp.set_defaults(**{k.replace("-", "_"): v for k, v in defaults.items()})
        args = parser.parse_args(argv)  # flags given explicitly still win
    return args


def config_from(args: argparse.Namespace) -> RunConfig:
    base = {f: getattr(args, f) for f in RunConfig.__dataclass_fields__ if hasattr(args, f)}
    cfg = RunConfig(**base)
    cfg.validate()
    return cfg


# --------------------------------------------------------------------------
# reports


def _instance_stats(inst: Instance, path: str | None = None) -> dict:
    out = {"n": inst.n, "m": inst.m, "k": inst.k}
    if path:
        out["file"] = os.path.basename(path)
    return out


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_report(report: dict, cfg: RunConfig, trace: Trace | None) -> None:
    if cfg.output == "json":
        text = json.dumps(_clean(report), sort_keys=True, indent=2) + "\n"
    else:
        rows = trace.records if trace is not None else []
        keys = sorted({k for r in rows for k in r})
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(_clean(r))
        text = buf.getvalue()
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _base_report(cfg: RunConfig) -> dict:
    c = asdict(cfg)
    c.pop("out")
    return {"schema": SCHEMA, "command": cfg.command, "config": c}


def _unit_energy(inst: Instance) -> EnergyMatrices:
    return EnergyMatrices.identity(inst.m, inst.k, 1.0 / np.asarray(inst.graph.caps, float) ** 2)


def _load(path: str) -> Instance:
    try:
        return read_instance(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from exc


# --------------------------------------------------------------------------
# commands


def cmd_solve_concurrent(args, cfg: RunConfig, trace: Trace) -> tuple[dict, int]:
    inst = _load(args.instance)
    rep = _base_report(cfg)
    rep["instance"] = _instance_stats(inst, args.instance)
    conf = cfg.concurrent()
    if args.scale is not None:
        solve = max_concurrent_flow if cfg.outer == "mmw" else max_concurrent_flow_signs
        out = solve(inst, cfg.epsilon, conf, scale=args.scale, trace=trace)
        rep.update(status=out.status, scale=args.scale, max_congestion=out.max_congestion,
                   iterations=out.iterations, max_condition=out.max_condition)
        return rep, EXIT_OK if out.ok else EXIT_FAIL
    res = binary_search_lambda(inst, cfg.epsilon, cfg.outer, conf, trace)
    rep.update(bracket=list(res.bracket), probes=[{"lambda": l, "status": s} for l, s in res.probes])
    if not res.found:
        rep.update(status="fail", diagnostic=res.diagnostic, **{"lambda": None})
        return rep, EXIT_FAIL
    cong = congestions(res.flow, inst.graph.caps)
    rep.update(status="ok", max_congestion=float(cong.max()), iterations=res.outcome.iterations,
               max_condition=res.outcome.max_condition, **{"lambda": res.lam})
    return rep, EXIT_OK


def cmd_solve_weighted(args, cfg: RunConfig, trace: Trace) -> tuple[dict, int]:
    inst = _load(args.instance)
    try:
        w = np.array([float(x) for x in args.weights.split(",")])
        spec = WeightedSpec(inst, w)
    except ValueError as exc:
        raise UsageError(f"bad --weights: {exc}") from exc
    rep = _base_report(cfg)
    rep["instance"] = _instance_stats(inst, args.instance)
    rep["weights"] = w
    res = max_weighted_flow(spec, cfg.epsilon, cfg.concurrent(), trace)
    rep["probes"] = [{"total": t, "status": s} for t, s in res.probes]
    if not res.found:
        rep.update(status="fail", objective=None, diagnostic=res.diagnostic)
        return rep, EXIT_FAIL
    rep.update(status="ok", objective=res.objective, values=res.values,
               max_congestion=float(congestions(res.flow, inst.graph.caps).max()))
    return rep, EXIT_OK


def cmd_coupled(args, cfg: RunConfig, trace: Trace) -> tuple[dict, int]:
    inst = _load(args.instance)
    if not 0 < args.delta < 1:
        raise UsageError("--delta must lie in (0, 1)")
    res = quadratically_coupled_flow(inst.graph, _unit_energy(inst), inst.demands, args.delta,
                                     options=SolveOptions(cfg.solver, cfg.inner, cfg.paper_faithful))
    d = inst.demands
    resid = float(np.max(np.abs(incidence_transpose_apply(inst.graph, res.flow) - d)))
    trace.emit("coupled", **res.report.as_dict())
    rep = _base_report(cfg)
    rep.update(instance=_instance_stats(inst, args.instance), status="ok", energy=res.energy,
               potential_energy=res.scale ** 2, conservation_residual=resid,
               solve=res.report.as_dict())
    return rep, EXIT_OK


def cmd_capacitated(args, cfg: RunConfig, trace: Trace) -> tuple[dict, int]:
    inst = _load(args.instance)
    conf = cfg.concurrent()
    P = _unit_energy(inst)
    out = quadratically_capacitated_flow(inst.graph, P, inst.demands, cfg.epsilon,
                                         conf.inner_params(inst.m, cfg.epsilon), conf.solve, trace)
    rep = _base_report(cfg)
    rep.update(instance=_instance_stats(inst, args.instance), status=out.status,
               iterations=out.iterations, accepted=out.accepted,
               max_saturation=out.max_saturation if out.flow is not None else None)
    return rep, EXIT_FAIL if out.failed else EXIT_OK


def verify_instance(inst: Instance, cfg: RunConfig, trace: Trace | None = None) -> dict:
    eps = cfg.epsilon
    lam_lp = lp_concurrent_oracle(inst)
    rows = {}
    for outer in ("mmw", "signs"):
        res = binary_search_lambda(inst, eps, outer, cfg.concurrent(), trace)
        cong = float(congestions(res.flow, inst.graph.caps).max()) if res.found else None
        agree = res.found and res.lam >= (1 - 5 * eps) * lam_lp and cong <= 1 + 3 * eps + 1e-12
        rows[outer] = {"lambda": res.lam, "max_congestion": cong, "ratio": res.lam / lam_lp,
                       "agrees": bool(agree)}
    return {"lp_lambda": lam_lp, "outers": rows, "agree": all(r["agrees"] for r in rows.values())}


def cmd_verify(args, cfg: RunConfig, trace: Trace) -> tuple[dict, int]:
    inst = _load(args.instance)
    rep = _base_report(cfg)
    rep["instance"] = _instance_stats(inst, args.instance)
    rep.update(verify_instance(inst, cfg, trace))
    rep["status"] = "ok" if rep["agree"] else "mismatch"
    return rep, EXIT_OK if rep["agree"] else EXIT_FAIL


def cmd_gen(args, cfg: RunConfig, trace: Trace) -> tuple[str, int]:
    try:
        text = gen_instance(cfg.seed, args.n, args.m, args.k, args.profile)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return text, EXIT_OK


def _bench_one(job: tuple[int, int, int, dict]) -> dict:
    m, k, seed, conf = job
    cfg = RunConfig(**conf)
    n = max(2, m // 2)
    inst = random_instance(seed, n, m, k)
    trace = Trace()
    res = binary_search_lambda(inst, cfg.epsilon, cfg.outer, cfg.concurrent(), trace)
    outer = trace.of(cfg.outer)
    inner = sum(1 for r in outer if r.get("inner") is not None)
    return {"m": m, "n": n, "k": k, "seed": seed, "lambda": res.lam, "probes": len(res.probes),
            "outer_iterations": len(outer), "inner_calls": inner}


def cmd_bench(args, cfg: RunConfig, trace: Trace) -> tuple[dict, int]:
    try:
        sizes = [int(x) for x in args.sizes.split(",")]
    except ValueError as exc:
        raise UsageError(f"bad --sizes: {exc}") from exc
    conf = asdict(cfg)
    jobs = [(m, args.k, cfg.seed + r, conf) for m in sizes for r in range(args.repeats)]
    workers = cfg.threads or os.cpu_count() or 1
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(_bench_one, jobs))
    else:
        rows = [_bench_one(j) for j in jobs]
    for r in rows:
        trace.emit("bench", **r)
    rep = _base_report(cfg)
    rep.update(status="ok", runs=rows,
               note="iteration counts only; the asymptotic runtime bound is not reproduced")
    return rep, EXIT_OK


COMMANDS = {
    "solve-concurrent": cmd_solve_concurrent,
    "solve-weighted": cmd_solve_weighted,
    "coupled": cmd_coupled,
    "capacitated": cmd_capacitated,
    "verify": cmd_verify,
    "gen": cmd_gen,
    "bench": cmd_bench,
}


def run(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:  # argparse usage errors
        return EXIT_USAGE if exc.code else EXIT_OK
    except UsageError as exc:
        print(f"mcflow: {exc}", file=sys.stderr)
        return EXIT_USAGE
    t0 = time.perf_counter()
    trace = Trace()
    try:
        if args.command == "gen":
            cfg = RunConfig("gen", seed=args.seed, output=args.output, out=args.out)
            text, code = cmd_gen(args, cfg, trace)
            if cfg.out:
                with open(cfg.out, "w") as fh:
                    fh.write(text)
            else:
                sys.stdout.write(text)
            return code
        cfg = config_from(args)
        report, code = COMMANDS[args.command](args, cfg, trace)
    except (UsageError, ParseError) as exc:
        print(f"mcflow: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConvergenceError, WidthError, BudgetError, TableBudgetError, np.linalg.LinAlgError) as exc:
        print(f"mcflow: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    report["wall_time"] = time.perf_counter() - t0
    report["trace"] = trace.records
    write_report(report, cfg, trace)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
