"""Batch front door: basis / propagate / solve / continue / stability / verify.

Outputs are CSV for traces and JSON for verification reports; every file embeds
the resolved configuration and the package version in its metadata block, and a
fixed seed makes reruns byte-identical.  Exit codes: 0 success, 1 numerical
failure (non-contraction, representability, failed verification), 2 usage error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .grid import GridFunction, load_grid_function, make_grid, save_grid_function
from .hermite import multi_indices, special_hermite
from .spectral import (
    AdmissiblePair,
    RepresentabilityError,
    analyze,
    basis_for,
    is_admissible,
    propagate_eigen,
)
from .twisted import sobolev_norm
from .nls import (
    NonContractionError,
    NonlinearitySpec,
    SolverConfig,
    TimeStepTooLarge,
    continue_maximal,
    estimate_T0,
    picard_solve,
    stability_experiment,
)
from .verify import (
    calibrate_strichartz_constant,
    check_commutation,
    check_dispersive,
    check_equivalence_residual,
    check_nonlinearity_estimates,
    check_retarded,
    check_strichartz_homogeneous,
    check_strichartz_inhomogeneous,
)

THREADS_ENV = "TWISTED_NLS_THREADS"


class UsageError(ValueError):
    """Configuration rejected before any compute."""


@dataclasses.dataclass
class RunConfig:
    command: str
    n: int = 1
    R: float = 12.0
    N: int = 256
    K: int = 8
    alpha: float = 2.0
    lambda_re: float = 1.0
    lambda_im: float = 0.0
    f: str = "gauss:0.1"
    T: float = 0.1
    Mt: int = 16
    q: float = 4.0
    tol: float = 1e-10
    C_cal: float | None = None
    horizon: float = 1.0
    eps: tuple[float, ...] = (0.1, 0.05, 0.025)
    suite: str = "all"
    seed: int = 0
    out: str = "run"
    t_max: float = 3.0
    threads: int | None = None

    def to_json(self) -> str:
        d = dataclasses.asdict(self)
        d["version"] = __version__
        return json.dumps(d, sort_keys=True)


_FIELD_TYPES = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(name: str, value):
    if name not in _FIELD_TYPES:
        raise UsageError(f"unknown configuration key {name!r}; known keys: "
                         + ", ".join(sorted(_FIELD_TYPES)))
    if name == "eps":
        if isinstance(value, str):
            value = [float(v) for v in value.split(",") if v]
        return tuple(float(v) for v in value)
    ftype = _FIELD_TYPES[name].type
    if name in ("threads", "C_cal"):
        return None if value in (None, "", "none") else (int(value) if name == "threads" else float(value))
    if ftype == "int":
        return int(value)
    if ftype == "float":
        return float(value)
    return str(value) if not isinstance(value, str) else value


def _load_config_file(path: str) -> dict:
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        return json.loads(text)
    out = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"config line {line!r} is not key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twisted-nls",
        description="Spectral solver and estimate verification for the magnetic NLS "
                    "of the twisted Laplacian.",
    )
    sub = parser.add_subparsers(dest="command")

    def add_common(p):
        p.add_argument("--config", help="JSON or key=value config file; flags override it")
        p.add_argument("--n", type=int)
        p.add_argument("--R", type=float)
        p.add_argument("--N", type=int)
        p.add_argument("--K", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output file prefix")
        p.add_argument("--threads", type=int,
                       help=f"worker-thread cap (fallback: ${THREADS_ENV})")

    def add_solver(p):
        p.add_argument("--alpha", type=float)
        p.add_argument("--lambda-re", dest="lambda_re", type=float)
        p.add_argument("--lambda-im", dest="lambda_im", type=float)
        p.add_argument("--f", help="initial data: file path or builtin "
                                   "gauss:<amplitude> / phi:<mu>,<nu>")
        p.add_argument("--T", type=float)
        p.add_argument("--Mt", type=int)
        p.add_argument("--q", type=float)
        p.add_argument("--tol", type=float)
        p.add_argument("--C-cal", dest="C_cal", type=float)

    p = sub.add_parser("basis", help="dump basis functions to files")
    add_common(p)
    p = sub.add_parser("propagate", help="linear flow diagnostics (CSV)")
    add_common(p)
    p.add_argument("--f")
    p.add_argument("--t-max", dest="t_max", type=float)
    p.add_argument("--Mt", type=int)
    p = sub.add_parser("solve", help="Picard fixed-point solve")
    add_common(p)
    add_solver(p)
    p = sub.add_parser("continue", help="maximal-interval continuation")
    add_common(p)
    add_solver(p)
    p.add_argument("--horizon", type=float)
    p = sub.add_parser("stability", help="perturbation stability table")
    add_common(p)
    add_solver(p)
    p.add_argument("--horizon", type=float)
    p.add_argument("--eps", help="comma-separated perturbation sizes")
    p = sub.add_parser("verify", help="estimate verification suites")
    add_common(p)
    p.add_argument("--suite", choices=["dispersive", "strichartz", "commutation",
                                       "nonlinearity", "equivalence", "all"])
    return parser


def parse_config(argv: list[str]) -> RunConfig:
    parser = build_parser()
    if not argv:
        parser.print_help()
        raise SystemExit(2)
    ns = parser.parse_args(argv)
    if ns.command is None:
        parser.print_help()
        raise SystemExit(2)
    values: dict = {}
    if getattr(ns, "config", None):
        for k, v in _load_config_file(ns.config).items():
            values[k] = _coerce(k, v)
    for k, v in vars(ns).items():
        if k in ("config", "command") or v is None:
            continue
        values[k] = _coerce(k, v)
    if "threads" not in values and os.environ.get(THREADS_ENV):
        values["threads"] = int(os.environ[THREADS_ENV])
    config = RunConfig(command=ns.command, **values)
    _validate(config)
    return config


def _validate(config: RunConfig) -> None:
    if config.command in ("solve", "continue", "stability"):
        if config.q <= 2:
            raise UsageError("q must exceed 2 (admissible pairs require 2 < q < infinity)")
        p = config.alpha + 2.0
        ok, reason = is_admissible(config.q, p, config.n)
        if not ok:
            raise UsageError(f"(q={config.q}, p=alpha+2={p}) is not admissible: {reason}")
    if config.N < 8 or config.N % 2:
        raise UsageError("N must be even and at least 8")
    if config.K < 0:
        raise UsageError("K must be nonnegative")


# ---------------------------------------------------------------------------
# initial data and outputs
# ---------------------------------------------------------------------------

def _initial_data(config: RunConfig, grid) -> GridFunction:
    spec = config.f
    if spec.startswith("gauss:"):
        amp = float(spec.split(":", 1)[1])
        return GridFunction(grid, amp * np.exp(-grid.radius_sq / 4.0).astype(np.complex128))
    if spec.startswith("phi:"):
        parts = spec.split(":", 1)[1].split(",")
        half = len(parts) // 2
        if len(parts) == 2 and grid.n == 1:
            mu, nu = int(parts[0]), int(parts[1])
        else:
            mu = tuple(int(v) for v in parts[:half])
            nu = tuple(int(v) for v in parts[half:])
        return special_hermite(mu, nu, grid)
    path = Path(spec)
    if not path.exists():
        raise UsageError(f"initial data {spec!r}: not a builtin (gauss:/phi:) and no such file")
    return load_grid_function(path, grid)


def _meta_lines(config: RunConfig) -> list[str]:
    return [f"version={__version__}", f"config={config.to_json()}"]


def _write_csv(path: Path, config: RunConfig, header: str, rows: list[str]) -> None:
    with path.open("w") as fh:
        for line in _meta_lines(config):
            fh.write(f"# {line}\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(row + "\n")


def _spec_from(config: RunConfig) -> NonlinearitySpec:
    return NonlinearitySpec.power(config.alpha, complex(config.lambda_re, config.lambda_im))


def _solver_config(config: RunConfig, grid) -> SolverConfig:
    C = config.C_cal
    if C is None:
        C = calibrate_strichartz_constant(grid, AdmissiblePair(config.q, config.alpha + 2.0, grid.n),
                                          seed=config.seed, K=min(config.K, 6))
    return SolverConfig(grid=grid, K=config.K, T=config.T, Mt=config.Mt, q=config.q,
                        p=config.alpha + 2.0, picard_tol=config.tol, C_cal=C)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _cmd_basis(config: RunConfig) -> int:
    grid = make_grid(config.n, config.R, config.N)
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    idxs = multi_indices(grid.n, config.K)
    for mu in idxs:
        for nu in idxs:
            f = special_hermite(mu, nu, grid)
            tag_mu = "-".join(map(str, mu))
            tag_nu = "-".join(map(str, nu))
            save_grid_function(f, out_dir / f"phi_mu{tag_mu}_nu{tag_nu}.dat",
                               header_comments=_meta_lines(config))
    defect = basis_for(grid, config.K).gram_defect()
    print(f"wrote {len(idxs)**2} basis functions to {out_dir}; gram defect {defect:.3e}")
    return 0


def _cmd_propagate(config: RunConfig) -> int:
    grid = make_grid(config.n, config.R, config.N)
    f = _initial_data(config, grid)
    coeffs = analyze(f, config.K)
    rows = []
    times = np.linspace(0.0, config.t_max, 2 * config.Mt + 1)
    for t in times:
        u = propagate_eigen(coeffs, float(t), K=config.K)
        mass = np.sqrt((np.abs(u.values) ** 2).sum() * grid.weight)
        linf = np.abs(u.values).max()
        rows.append(f"{t!r},{mass!r},{linf!r},{coeffs.parseval_residual!r}")
    _write_csv(Path(f"{config.out}_propagate.csv"), config, "t,l2,linf,parseval_residual", rows)
    print(f"wrote {config.out}_propagate.csv ({len(rows)} rows)")
    return 0


def _cmd_solve(config: RunConfig) -> int:
    grid = make_grid(config.n, config.R, config.N)
    f = _initial_data(config, grid)
    spec = _spec_from(config)
    solver_cfg = _solver_config(config, grid)
    try:
        report = picard_solve(f, spec, solver_cfg)
    except TimeStepTooLarge as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        print(f"suggestion: rerun with --T {exc.suggestion:.6g}", file=sys.stderr)
        return 1
    except (NonContractionError, RepresentabilityError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    times = report.u.times
    trace_rows = [
        f"{times[m]!r},{report.mass_trace[m]!r},{report.sobolev_trace[m]!r},"
        f"{np.abs(report.u.values[m]).max()!r}"
        for m in range(times.size)
    ]
    _write_csv(Path(f"{config.out}_trace.csv"), config, "t,mass,sobolev,linf", trace_rows)
    picard_rows = [
        f"{i + 2},{r!r}" for i, r in enumerate(report.contraction_ratios)
    ]
    picard_rows.insert(0, f"1,{float('nan')!r}")
    _write_csv(Path(f"{config.out}_picard.csv"), config, "iter,ratio", picard_rows)
    np.savez_compressed(
        f"{config.out}_final.npz",
        values=report.u.values, times=times, n=grid.n, R=grid.R, N=grid.N,
        t0=solver_cfg.t0, T=solver_cfg.T,
        config=config.to_json(), version=__version__,
    )
    print(f"converged={report.converged} iterates={report.iterates} "
          f"final_residual={report.final_residual:.3e}")
    return 0 if report.converged else 1


def _cmd_continue(config: RunConfig) -> int:
    grid = make_grid(config.n, config.R, config.N)
    f = _initial_data(config, grid)
    spec = _spec_from(config)
    solver_cfg = _solver_config(config, grid)
    try:
        report = continue_maximal(f, spec, solver_cfg, horizon=config.horizon)
    except (NonContractionError, RepresentabilityError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    rows = [f"{s.t_start!r},{s.t_end!r},{s.sobolev_end!r},{int(s.capped)}"
            for s in report.segments]
    _write_csv(Path(f"{config.out}_segments.csv"), config,
               "t_start,t_end,sobolev_end,capped", rows)
    curve_rows = [f"{t!r},{s!r}" for t, s in report.growth_curve]
    _write_csv(Path(f"{config.out}_growth.csv"), config, "t,sobolev", curve_rows)
    print(f"verdict={report.verdict} segments={len(report.segments)}")
    if report.detail:
        print(report.detail)
    return 0 if report.verdict != "representability_failure" else 1


def _cmd_stability(config: RunConfig) -> int:
    grid = make_grid(config.n, config.R, config.N)
    f = _initial_data(config, grid)
    spec = _spec_from(config)
    solver_cfg = _solver_config(config, grid)
    try:
        result = stability_experiment(f, list(config.eps), spec, solver_cfg,
                                      interval=(0.0, config.horizon), seed=config.seed)
    except (NonContractionError, RepresentabilityError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    rows = [f"{r['eps']!r},{r['sup_deviation']!r},{int(r['covered'])},{r['detail']}"
            for r in result.rows]
    _write_csv(Path(f"{config.out}_stability.csv"), config,
               "eps,sup_deviation,covered,detail", rows)
    print(f"wrote {config.out}_stability.csv ({len(rows)} rows)")
    return 0


def _cmd_verify(config: RunConfig) -> int:
    grid = make_grid(config.n, config.R, config.N)
    reports = []
    suite = config.suite
    if suite in ("dispersive", "all"):
        reports.append(check_dispersive(grid, seed=config.seed))
    if suite in ("strichartz", "all"):
        pair = AdmissiblePair(4.0, 4.0, grid.n)
        reports.append(check_strichartz_homogeneous(pair, np.pi, seed=config.seed, grid=grid))
        reports.append(check_strichartz_inhomogeneous(pair, np.pi, seed=config.seed, grid=grid))
        reports.append(check_retarded(pair, np.pi, seed=config.seed, grid=grid))
    if suite in ("commutation", "all"):
        reports.append(check_commutation(grid, seed=config.seed))
    if suite in ("nonlinearity", "all"):
        spec = NonlinearitySpec.power(2.0, 1.0)
        reports.append(check_nonlinearity_estimates(spec, grid=grid, seed=config.seed))
    if suite in ("equivalence", "all"):
        spec = NonlinearitySpec.power(2.0, 1.0)
        f = GridFunction(grid, 0.1 * np.exp(-grid.radius_sq / 4.0).astype(np.complex128))
        base = SolverConfig(grid=grid, K=config.K, T=0.1, Mt=16, q=4.0, p=4.0, C_cal=2.0)
        rep_full = picard_solve(f, spec, base, enforce_step_gate=False)
        rep_half = picard_solve(f, spec, base.replace(Mt=32), enforce_step_gate=False)
        reports.append(check_equivalence_residual(rep_full, spec, rep_half))
    payload = {
        "meta": {"version": __version__, "config": json.loads(config.to_json())},
        "reports": [r.to_json_dict() for r in reports],
    }
    out = Path(config.out if config.out.endswith(".json") else f"{config.out}_report.json")
    out.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    all_pass = all(r.passed for r in reports)
    for r in reports:
        print(f"{r.name}: max_quotient={r.max_quotient:.6g} pass={r.passed}")
    print(f"wrote {out}")
    return 0 if all_pass else 1


def run(config: RunConfig) -> int:
    handlers = {
        "basis": _cmd_basis,
        "propagate": _cmd_propagate,
        "solve": _cmd_solve,
        "continue": _cmd_continue,
        "stability": _cmd_stability,
        "verify": _cmd_verify,
    }
    handler = handlers[config.command]
    if config.threads:
        try:
            from threadpoolctl import threadpool_limits
        except ImportError:
            return handler(config)
        with threadpool_limits(limits=config.threads):
            return handler(config)
    return handler(config)


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        config = parse_config(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return run(config)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NonContractionError, RepresentabilityError, TimeStepTooLarge) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
