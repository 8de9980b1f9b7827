"""Batch front end: config-driven subcommands with deterministic reports.

Exit codes: 0 pass, 1 fail, 2 inconclusive, 3 usage/config error.  Every
report embeds the resolved configuration, the seed, and a content digest;
with a fixed (config, seed) the emitted bytes are identical across runs and
across worker counts (workers only redistribute independent tasks, and
results reduce in fixed task order).
"""

import argparse
import csv
import hashlib
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, converge, ergodic, model, noise, oracle1d, stein_check
from .config import ConfigError, RunConfig, parse_config, parse_config_file
from .model import SampleSpec
from .schemes import SchemeSpec

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_INCONCLUSIVE = 2
EXIT_USAGE = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and math.isnan(obj):
        return "nan"
    return obj


def _write_report(out_dir: Path, name: str, payload: dict) -> Path:
    payload = _jsonable(payload)
    body = json.dumps(payload, sort_keys=True, indent=1)
    payload["digest"] = hashlib.sha256(body.encode()).hexdigest()
    path = out_dir / f"{name}.json"
    path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")
    return path


def _base_payload(command, cfg: RunConfig, seed: int):
    return {
        "command": command,
        "config": cfg.resolved(),
        "seed": seed,
        "config_digest": cfg.digest(seed),
        "version": __version__,
    }


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_check_assumptions(cfg, seed, out_dir, fmt, workers):
    problem = cfg.build_problem()
    sampler = SampleSpec(n_samples=cfg.get_int("budget", "n_mc", 10_000), seed=seed)
    reports = [
        model.check_monotonicity(problem, sampler),
        model.check_coercivity(problem, sampler),
        model.check_growth_bounds(problem, sampler),
    ]
    ok = all(r.worst_margin >= -1e-9 for r in reports)
    payload = _base_payload("check-assumptions", cfg, seed)
    payload["problem"] = problem.name
    payload["notes"] = problem.notes
    payload["reports"] = [asdict(r) for r in reports]
    payload["no_violation_found"] = ok
    path = _write_report(out_dir, "check_assumptions", payload)
    for r in reports:
        print(r.summary())
    print(f"report: {path}")
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_simulate(cfg, seed, out_dir, fmt, workers):
    problem = cfg.build_problem()
    phi = cfg.build_phi()
    scheme = SchemeSpec(cfg.scheme_kind(), cfg.tau(), **cfg.scheme_opts())
    n_steps = cfg.get_int("budget", "n_steps", 100_000)
    thin = cfg.get_int("budget", "thin", max(1, n_steps // 100_000))
    burn = cfg.get_int("budget", "burn_in", n_steps // 5)
    x0 = np.full(problem.dim_state, cfg.get_float("budget", "x0", 0.0))
    traj = ergodic.simulate_chain(
        problem, scheme, x0, n_steps, noise.NoiseStream(seed, 0), thin=thin
    )
    est = ergodic.time_average(
        phi, traj, burn_in=burn, n_batches=cfg.get_int("budget", "n_batches", 32)
    )
    if fmt in ("csv", "both"):
        with open(out_dir / "trace.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["k", "t"] + [f"y{i}" for i in range(problem.dim_state)])
            for k, state in zip(traj.ks, traj.states):
                writer.writerow([int(k), repr(float(k * scheme.tau))] + [repr(float(v)) for v in state])
    payload = _base_payload("simulate", cfg, seed)
    payload["estimate"] = asdict(est)
    payload["diverged"] = traj.diverged
    payload["diverged_step"] = traj.diverged_step
    path = _write_report(out_dir, "simulate", payload)
    state = "diverged" if traj.diverged else "ok"
    print(f"{problem.name}/{scheme.kind} tau={scheme.tau}: {state}; "
          f"phi_mean={est.phi_mean:.6g} stderr={est.stderr:.3g}")
    print(f"report: {path}")
    return EXIT_FAIL if traj.diverged else EXIT_PASS


def cmd_stein_verify(cfg, seed, out_dir, fmt, workers):
    problem = cfg.build_problem()
    phi = cfg.build_phi()
    scheme = SchemeSpec(cfg.scheme_kind(), cfg.tau(), **cfg.scheme_opts())
    density = oracle1d.stationary_density(problem)
    f_table = oracle1d.stein_solution(problem, density, phi)
    rep = stein_check.error_representation_check(
        problem,
        scheme,
        phi,
        n_chains=cfg.get_int("budget", "n_chains", 1024),
        n_steps=cfg.get_int("budget", "n_steps", 100_000),
        burn_in=cfg.get_int("budget", "burn_in", None),
        n_sub=cfg.get_int("budget", "n_sub", 16),
        seed=seed,
        density=density,
        f_table=f_table,
    )
    payload = _base_payload("stein-verify", cfg, seed)
    payload["stein_residual_sup"] = f_table.residual_sup
    payload["report"] = asdict(rep)
    path = _write_report(out_dir, "stein_verify", payload)
    print(
        f"{rep.problem}/{rep.scheme} tau={rep.tau} phi={rep.phi}: {rep.verdict}\n"
        f"  lhs  = {rep.lhs:+.6e} +- {rep.lhs_stderr:.2e}\n"
        f"  rhs  = {rep.rhs_signed:+.6e} +- {rep.rhs_stderr:.2e}\n"
        f"  A-term = {rep.a_term:+.3e} +- {rep.a_term_stderr:.2e}"
    )
    print(f"report: {path}")
    return {"pass": EXIT_PASS, "fail": EXIT_FAIL}.get(rep.verdict, EXIT_INCONCLUSIVE)


def _converge_row_worker(args):
    config_text, seed, kind, tau, total_steps, traj_start = args
    cfg = parse_config(config_text)
    problem = cfg.build_problem()
    phi = cfg.build_phi()
    budget = _study_budget(cfg, seed)
    return converge.run_study_row(
        problem, kind, cfg.scheme_opts(), phi, tau, total_steps,
        budget.n_chains, budget.burn_time, seed, traj_start,
    )


def _study_budget(cfg, seed):
    return converge.StudyBudget(
        n_chains=cfg.get_int("budget", "n_chains", 2048),
        pilot_steps=cfg.get_int("budget", "pilot_steps", 60_000_000),
        stderr_factor=cfg.get_float("budget", "stderr_factor", 5.0),
        row_factors=cfg.row_factors(),
        max_row_steps=cfg.get_float("budget", "max_row_steps", 2.5e9),
        min_row_steps=cfg.get_float("budget", "min_row_steps", 2.0e7),
        burn_time=cfg.get_float("budget", "burn_time", 40.0),
        seed=seed,
    )


def cmd_converge(cfg, seed, out_dir, fmt, workers):
    problem = cfg.build_problem()
    phi = cfg.build_phi()
    kind = cfg.scheme_kind()
    budget = _study_budget(cfg, seed)
    config_text = cfg.to_ini()
    row_mapper = None
    if workers > 1:
        def row_mapper(tasks):
            args = [
                (config_text, seed, kind, tau, total, start)
                for tau, total, start in tasks
            ]
            with ProcessPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(_converge_row_worker, args))

    report = converge.ergodic_error_study(
        problem, kind, phi, tau_grid=cfg.tau_grid(), budget=budget,
        scheme_opts=cfg.scheme_opts(), row_mapper=row_mapper,
    )
    if fmt in ("csv", "both"):
        with open(out_dir / "convergence.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["tau", "error", "stderr", "included", "n_steps"])
            for r in report.rows:
                writer.writerow(
                    [repr(r.tau), repr(r.abs_error), repr(r.stderr), int(r.included), r.n_steps_total]
                )
    if cfg.get_bool("output", "gnuplot", False):
        _write_gnuplot(out_dir, report)
    payload = _base_payload("converge", cfg, seed)
    payload["report"] = asdict(report)
    path = _write_report(out_dir, "converge", payload)
    print(report.summary())
    print(f"report: {path}")
    return EXIT_PASS if report.status == "ok" else EXIT_INCONCLUSIVE


def _write_gnuplot(out_dir, report):
    script = [
        "set logscale xy",
        "set xlabel 'tau'",
        "set ylabel '|pi_tau(phi) - pi(phi)|'",
        f"set title '{report.problem}/{report.scheme} phi={report.phi} slope={report.slope:.3f}'",
        "plot 'convergence.csv' every ::1 using 1:2:3 with yerrorbars title 'measured', \\",
        f"     x**{report.slope:.4f} * {math.exp(0.0):.4g} title 'fitted order' with lines",
    ]
    (out_dir / "convergence.gp").write_text("\n".join(script) + "\n")


def _blowup_scheme_worker(args):
    config_text, seed, kind = args
    cfg = parse_config(config_text)
    problem = cfg.build_problem()
    tau = cfg.get_float("scheme", "tau", 0.1)
    x0 = cfg.get_float("budget", "x0", 3.0)
    n_seeds = cfg.get_int("budget", "n_seeds", 200)
    n_steps = cfg.get_int("budget", "n_steps", 1000)
    scheme = SchemeSpec(kind, tau, **cfg.scheme_opts())
    final, active, div = ergodic.run_ensemble(
        problem, scheme, np.full(problem.dim_state, x0), n_seeds, n_steps, seed
    )
    out = {
        "scheme": kind,
        "diverged_fraction": float((~active).mean()),
        "first_divergence_step": int(div[div >= 0].min()) if (div >= 0).any() else None,
        "n_seeds": n_seeds,
        "n_steps": n_steps,
    }
    if kind != "em":
        mt = ergodic.moment_trace(
            problem, scheme, 1.0,
            n_traj=min(n_seeds, 200),
            n_steps=cfg.get_int("budget", "moment_steps", 100_000),
            seed=seed,
            y0=np.full(problem.dim_state, x0),
        )
        out["moment_trace_sup"] = mt.running_sup
        out["moment_trace_finite"] = mt.finite
    return out


def cmd_blowup_demo(cfg, seed, out_dir, fmt, workers):
    config_text = cfg.to_ini()
    kinds = ["em", "tem", "pem", "bem"]
    args = [(config_text, seed, k) for k in kinds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_blowup_scheme_worker, args))
    else:
        results = [_blowup_scheme_worker(a) for a in args]
    em = results[0]
    modified = results[1:]
    min_frac = cfg.get_float("budget", "min_em_fraction", 0.5)
    contrast = (
        em["diverged_fraction"] > min_frac
        and all(r["diverged_fraction"] == 0.0 for r in modified)
        and all(r["moment_trace_finite"] for r in modified)
    )
    payload = _base_payload("blowup-demo", cfg, seed)
    payload["schemes"] = results
    payload["contrast_demonstrated"] = contrast
    path = _write_report(out_dir, "blowup_demo", payload)
    for r in results:
        extra = ""
        if "moment_trace_sup" in r:
            extra = f"  sup E|Y|^2 = {r['moment_trace_sup']:.4g}"
        print(f"{r['scheme']:>4}: diverged {r['diverged_fraction']:.1%}{extra}")
    print(f"report: {path}")
    return EXIT_PASS if contrast else EXIT_FAIL


# ---------------------------------------------------------------------------


_COMMANDS = {
    "check-assumptions": cmd_check_assumptions,
    "simulate": cmd_simulate,
    "converge": cmd_converge,
    "stein-verify": cmd_stein_verify,
    "blowup-demo": cmd_blowup_demo,
}


def _build_parser():
    parser = _Parser(prog="ergosde", description=__doc__)
    parser.add_argument("--version", action="version", version=f"ergosde {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="INI configuration file")
        p.add_argument("--seed", type=int, default=None, help="overrides [run] seed")
        p.add_argument("--workers", type=int, default=1, help="worker processes")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--format", choices=("csv", "json", "both"), default="both")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = parse_config_file(args.config)
        seed = cfg.seed(args.seed)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](cfg, seed, out_dir, args.format, max(1, args.workers))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
