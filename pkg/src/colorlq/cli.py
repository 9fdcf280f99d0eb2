"""Command-line front end.

Exit codes: 0 success, 1 solvability failure or failed verification,
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .diagnostics import (
    compare_policies,
    reduction_suite,
    telescoping_residual,
)
from .errors import (
    ColorLQError,
    ConfigError,
    NotSolvable,
    SingularHessian,
)
from .model import build_problem, load_config, rademacher
from .oracle import backward_costate, dp_exact, path_qp, stationarity_residual
from .policy import LinearPolicy, SchedulePolicy, ZeroPolicy
from .riccati_delay import solve_delayed
from .riccati_free import optimal_value, solve_literal, solve_measurable, solve_white
from .schedule import Schedule
from .simulate import exact_expected_cost, monte_carlo, rollout, sample_path

EXIT_OK, EXIT_UNSOLVABLE, EXIT_USAGE = 0, 1, 2


class UsageError(ConfigError):
    pass


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="colorlq", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="YAML problem description")
        sp.add_argument("--out", default="out", help="output directory (default: out)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value (dotted keys for noise./init.)")

    sp = sub.add_parser("solve", help="emit a backward-recursion schedule")
    common(sp)
    sp.add_argument("--mode", choices=["literal", "measurable", "white", "delayed"])

    sp = sub.add_parser("simulate", help="Monte Carlo / exact closed-loop cost")
    common(sp)
    sp.add_argument("--policy", default="auto",
                    choices=["auto", "literal", "measurable", "white", "delayed", "zero",
                             "oracle", "dp"])
    sp.add_argument("--policy-file", help="schedule JSON to load the policy from")
    sp.add_argument("--samples", type=int, default=10000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--exact", action="store_true", help="also enumerate all noise paths")

    sp = sub.add_parser("oracle", help="exact optimum on the noise tree")
    common(sp)
    sp.add_argument("--method", choices=["dp", "path-qp"], default="path-qp")

    sp = sub.add_parser("compare", help="recursion controllers vs oracle optimum")
    common(sp)
    sp.add_argument("--methods", nargs="+",
                    choices=["literal", "measurable", "white", "delayed"])
    sp.add_argument("--instance-id", default=None)

    sp = sub.add_parser("verify", help="reductions, telescoping and stationarity checks")
    common(sp)
    sp.add_argument("--seed", type=int, default=0)
    return p


def _resolve_config(path: str, overrides: list[str]) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path!r}: {exc.strerror}") from None
    raw = load_config(text)
    raw = copy.deepcopy(raw)
    for item in overrides:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        target = raw
        *parents, leaf = key.split(".")
        for part in parents:
            target = target.setdefault(part, {})
        target[leaf] = yaml.safe_load(value)
    return raw


def _schedule(mode: str, problem) -> Schedule:
    model, noise, init = problem.model, problem.noise, problem.init
    if mode == "literal":
        return solve_literal(model, noise, init.w_prev)
    if mode == "measurable":
        return solve_measurable(model, noise, init.w_prev)
    if mode == "white":
        return solve_white(model)
    return solve_delayed(model)


def _default_mode(model) -> str:
    if model.delay:
        return "delayed"
    return "measurable" if model.colored else "white"


def cmd_solve(args, problem, out: Path) -> tuple[int, list[str], dict]:
    mode = args.mode or _default_mode(problem.model)
    sched = _schedule(mode, problem)
    (out / "schedule.json").write_text(sched.dumps())
    info = {"mode": mode}
    if mode != "delayed":
        info["optimal_value"] = optimal_value(sched, problem.init)
    print(json.dumps(info))
    return EXIT_OK, ["schedule.json"], info


def _policy(args, problem):
    model = problem.model
    if args.policy_file:
        return SchedulePolicy(Schedule.loads(Path(args.policy_file).read_text()))
    kind = _default_mode(model) if args.policy == "auto" else args.policy
    if kind == "zero":
        return ZeroPolicy(model.m, model.N if model.delay else model.N + 1, bool(model.delay))
    if kind == "oracle":
        return path_qp(model, problem.noise, problem.init).policy
    if kind == "dp":
        return dp_exact(model, problem.noise, problem.init.w_prev).policy()
    return SchedulePolicy(_schedule(kind, problem))


def cmd_simulate(args, problem, out: Path):
    model, noise, init = problem.model, problem.noise, problem.init
    pol = _policy(args, problem)
    est = monte_carlo(model, pol, init, noise, args.samples, args.seed)
    (out / "estimate.csv").write_text(est.to_csv())
    traj = rollout(model, pol, sample_path(noise, model.N + 1, args.seed, 0), init)
    (out / "trajectory.csv").write_text(traj.to_csv())
    files = ["estimate.csv", "trajectory.csv"]
    info = {"mean": est.mean, "stderr": est.stderr, "n_samples": est.n_samples}
    if args.exact:
        exact = exact_expected_cost(model, pol, noise, init)
        (out / "exact.csv").write_text(f"exact_cost\n{exact!r}\n")
        files.append("exact.csv")
        info["exact_cost"] = exact
    print(json.dumps(info))
    return EXIT_OK, files, info


def cmd_oracle(args, problem, out: Path):
    model, noise, init = problem.model, problem.noise, problem.init
    if args.method == "dp":
        res = dp_exact(model, noise, init.w_prev)
        doc = {"delayed": res.delayed, "value": res.value(init),
               "steps": [{"k": k, "tables": [
                   {"w": w, "value": res.values[k][w].tolist(),
                    "gain": res.gains[k][w].tolist() if k < len(res.gains) else None}
                   for w in res.values[k]]} for k in range(len(res.values))]}
        (out / "dp.json").write_text(json.dumps(doc, indent=1))
        print(json.dumps({"method": "dp", "value": doc["value"]}))
        return EXIT_OK, ["dp.json"], {"value": doc["value"]}
    res = path_qp(model, noise, init)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["history", "k"] + [f"u{j}" for j in range(model.m)])
    for hist, k, u in res.policy.rows():
        w.writerow([hist, k] + [repr(float(c)) for c in u])
    (out / "policy_tree.csv").write_text(buf.getvalue())
    (out / "oracle.csv").write_text(f"cost,pivot_ratio\n{res.cost!r},{res.pivot_ratio!r}\n")
    print(json.dumps({"method": "path-qp", "cost": res.cost}))
    return EXIT_OK, ["policy_tree.csv", "oracle.csv"], {"cost": res.cost}


def cmd_compare(args, problem, out: Path):
    iid = args.instance_id or Path(args.config).stem
    rep = compare_policies(problem.model, problem.noise, problem.init, args.methods, iid)
    (out / "report.json").write_text(rep.dumps())
    (out / "compare.csv").write_text(rep.to_csv())
    print(rep.to_csv(), end="")
    return EXIT_OK, ["report.json", "compare.csv"], {"lower_bound_ok": rep.lower_bound_ok}


def cmd_verify(args, problem, out: Path):
    model, noise, init = problem.model, problem.noise, problem.init
    red = reduction_suite(model, seed=args.seed)
    doc = red.to_dict()
    passed = red.passed

    white_model = model.replace(delay=0, B2=np.zeros_like(model.B2))
    wnoise = noise if noise.finite else rademacher(math.sqrt(model.sigma2))
    white = solve_white(white_model)
    tel_opt = telescoping_residual(white_model, white, SchedulePolicy(white), wnoise, init)
    rng = np.random.default_rng(args.seed)
    rand_pol = LinearPolicy([rng.normal(size=(model.m, model.n)) for _ in range(model.N + 1)])
    tel_rand = telescoping_residual(white_model, white, rand_pol, wnoise, init)
    doc["telescoping"] = {"optimal_residual": tel_opt.residual,
                          "optimal_square_term": tel_opt.max_square_term,
                          "random_policy_residual": tel_rand.residual}
    passed &= tel_opt.residual <= 1e-10 and tel_rand.residual <= 1e-10
    passed &= tel_opt.max_square_term <= 1e-12

    if noise.finite:
        qp = path_qp(model, noise, init)
        res = stationarity_residual(model, backward_costate(model, qp.policy, noise, init), noise)
        doc["stationarity_path_qp"] = res
        passed &= res <= 1e-8
    doc["passed"] = bool(passed)
    (out / "verify.json").write_text(json.dumps(doc, indent=1))
    print(json.dumps({"passed": bool(passed)}))
    return (EXIT_OK if passed else EXIT_UNSOLVABLE), ["verify.json"], {"passed": bool(passed)}


COMMANDS = {"solve": cmd_solve, "simulate": cmd_simulate, "oracle": cmd_oracle,
            "compare": cmd_compare, "verify": cmd_verify}


def _error_doc(exc: Exception) -> dict:
    doc = {"error": type(exc).__name__, "message": str(exc)}
    for attr in ("k", "w", "condition", "min_eig", "field", "key", "line", "count", "cap"):
        if hasattr(exc, attr):
            doc[attr] = getattr(exc, attr)
    return doc


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    start = time.perf_counter()
    try:
        raw = _resolve_config(args.config, args.set)
        problem = build_problem(raw, allow_indefinite_R=True)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        code, files, info = COMMANDS[args.command](args, problem, out)
    except (NotSolvable, SingularHessian) as exc:
        print(json.dumps(_error_doc(exc)), file=sys.stderr)
        return EXIT_UNSOLVABLE
    except (ColorLQError, OSError) as exc:
        print(json.dumps(_error_doc(exc)), file=sys.stderr)
        return EXIT_USAGE

    manifest = {
        "command": args.command,
        "version": __version__,
        "argv": sys.argv[1:] if argv is None else list(argv),
        "config": raw,
        "seed": getattr(args, "seed", None),
        "outputs": files,
        "result": info,
        "duration_s": time.perf_counter() - start,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, default=float))
    return code


if __name__ == "__main__":
    sys.exit(main())
