"""``gcalc`` command line: solve, expect, moments, simulate, sde and verify."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from collections.abc import Sequence
from dataclasses import dataclass

from . import gexpectation as gx
from . import gnormal as gn
from . import gpaths as gp
from . import gsde
from . import payoff as pay
from .errors import (
    ConfigurationError,
    ExtrapolationError,
    NumericError,
    ParameterError,
    SchemaError,
    ShapeError,
)
from .pde import GParams, Resolution, SpaceGrid, default_half_width, lattice_value, make_grid, solve_gheat, write_solution_csv
from .verify import SUITES, TOLERANCES, SuiteConfig, atomic_write, emit_report, run_suite

USAGE_ERRORS = (SchemaError, ParameterError, ShapeError)
RUN_ERRORS = (NumericError, ConfigurationError, ExtrapolationError, OSError)


class UsageError(Exception):
    """Bad input detected after argument parsing."""


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    sigma0: float
    resolution: Resolution
    seed: int | None
    out: str | None
    suite: str | None = None

    @classmethod
    def from_args(cls, a: argparse.Namespace) -> RunConfig:
        GParams(a.sigma0)
        res = Resolution(getattr(a, "dx", 1.0 / 128), getattr(a, "dt", None), getattr(a, "half_width", None))
        return cls(a.cmd, a.sigma0, res, getattr(a, "seed", None), getattr(a, "out", None), getattr(a, "suite", None))

    @property
    def params(self) -> GParams:
        return GParams(self.sigma0)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _read(path: str) -> str:
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _positive(kind):
    def conv(text: str):
        v = kind(text)
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v

    return conv


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gcalc", description="Numerical G-expectation toolkit.")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    def common(sp: argparse.ArgumentParser, grid: bool = True) -> None:
        sp.add_argument("--sigma0", type=float, default=0.5, help="lower volatility bound in [0, 1]")
        if grid:
            sp.add_argument("--dx", type=_positive(float), default=1.0 / 128)
            sp.add_argument("--dt", type=_positive(float), default=None, help="time step, at most dx^2 (default dx^2/2)")

    s = sub.add_parser("solve", help="solve the G-heat equation for a payoff")
    common(s)
    s.add_argument("--payoff", required=True, help="payoff JSON file")
    s.add_argument("--t", type=_positive(float), default=1.0)
    s.add_argument("--x", type=float, default=0.0)
    s.add_argument("--half-width", type=_positive(float), default=None)
    s.add_argument("--scheme", choices=("fd", "lattice"), default="fd")
    s.add_argument("--lattice-steps", type=_positive(int), default=4096)
    s.add_argument("--levels", type=_positive(int), default=65, help="time levels kept in the CSV")
    s.add_argument("--out", default=None, help="CSV with columns t,x,u")

    e = sub.add_parser("expect", help="G-expectation of a cylinder random variable")
    common(e, grid=False)
    e.add_argument("--rv", required=True, help="random variable JSON file")
    e.add_argument("--dx", type=_positive(float), default=1.0 / 32, help="inner PDE spacing of the dynamic program")
    e.add_argument("--state-step", type=_positive(float), default=0.05)
    e.add_argument("--samples", type=_positive(int), default=4096)
    e.add_argument("--seed", type=int, default=0, help="seed for the reachable-box sampler")
    e.add_argument("--out", default=None, help="JSON result file")

    m = sub.add_parser("moments", help="moment table against closed forms")
    common(m)
    m.add_argument("--t", type=_positive(float), default=1.0)
    m.add_argument("--tol-scale", type=_positive(float), default=1.0)
    m.add_argument("--out", required=True)

    si = sub.add_parser("simulate", help="simulate controlled scenario paths")
    common(si, grid=False)
    si.add_argument("--policy", default="random", help="sigma0 | one | random | constant:<s> | bangbang")
    si.add_argument("--payoff", default=None, help="payoff JSON driving the bangbang control (default |x|)")
    si.add_argument("--paths", type=_positive(int), default=100)
    si.add_argument("--steps", type=_positive(int), default=512)
    si.add_argument("--T", type=_positive(float), default=1.0)
    si.add_argument("--seed", type=int, required=True)
    si.add_argument("--out", required=True, help="CSV with columns seed,t,B,qv,sigma")

    sd = sub.add_parser("sde", help="Euler and Picard solutions of an SDE on a scenario ensemble")
    common(sd, grid=False)
    sd.add_argument("--spec", required=True, help="SDE spec JSON file")
    sd.add_argument("--steps", type=_positive(int), default=1024)
    sd.add_argument("--ensemble", type=_positive(int), default=64)
    sd.add_argument("--seed", type=int, required=True)
    sd.add_argument("--out", required=True, help="CSV with columns path_id,t,X0..")
    sd.add_argument("--history", default=None, help="Picard history CSV (default <out>.history.csv)")

    v = sub.add_parser("verify", help="run verification suites")
    common(v)
    v.add_argument("--suite", choices=("all", *SUITES), default="all")
    v.add_argument("--tol-scale", type=_positive(float), default=1.0)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", default=None, help="report CSV (default stdout)")
    return p


# --------------------------------------------------------------------------
# subcommands


def cmd_solve(a: argparse.Namespace, cfg: RunConfig) -> int:
    phi = pay.from_json(_read(a.payoff))
    p = cfg.params
    if a.scheme == "lattice":
        hw = a.half_width or default_half_width(a.t, phi, a.x)
        grid = SpaceGrid.from_dx(a.x, hw, cfg.resolution.dx)
        u = lattice_value(phi, a.t, p, grid, a.lattice_steps)
        if a.out:
            atomic_write(a.out, f"t,x,u\n{a.t!r},{float(a.x)!r},{u!r}\n")
        print(repr(u))
        return 0
    grid = make_grid(a.t, phi, a.x, cfg.resolution)
    sol = solve_gheat(phi, a.t, p, grid, cfg.resolution.step, max_levels=max(2, a.levels))
    u = gn.evaluate(sol, -1, a.x)
    if a.out:
        write_solution_csv(sol, a.out)
    print(repr(u))
    return 0


def cmd_expect(a: argparse.Namespace, cfg: RunConfig) -> int:
    X = gx.rv_from_json(_read(a.rv))
    res = gx.DPResolution(dx=a.dx, state_step=a.state_step, samples=a.samples, seed=a.seed)
    value = gx.expect(X, cfg.params, res)
    if a.out:
        atomic_write(a.out, json.dumps({"sigma0": a.sigma0, "value": value}, sort_keys=True) + "\n")
    print(repr(value))
    return 0


def moments_rows(params: GParams, t: float, res: Resolution, tol_scale: float = 1.0) -> list[tuple[str, float, float, float]]:
    """``(quantity, expected, computed, tol)`` for the moment table at scale ``t``."""
    rows = []
    for n in (2, 4, 6, 8):
        exp = gn.moment(n, "plus", t, params)
        tol = TOLERANCES["moment_wide"] * exp if n == 8 else TOLERANCES["moment"] * (1 + exp)
        rows.append((f"E[B^{n}]", exp, gn.pg(pay.power(n), t, params, resolution=res), tol * tol_scale))
    exp = -params.s0sq * t
    rows.append(("E[-B^2]", exp, gn.pg(-pay.power(2), t, params, resolution=res), TOLERANCES["moment"] * (1 + abs(exp)) * tol_scale))
    for n in (1, 3, 5):
        exp = gn.moment(n, "plus", t, params)
        rows.append((f"E[|B|^{n}]", exp, gn.pg(pay.abs_power(n), t, params, resolution=res), TOLERANCES["moment"] * (1 + exp) * tol_scale))
    for n in (1, 2, 3, 4):
        exp = gn.moment(n, "minus", t, params)
        rows.append((f"E[-|B|^{n}]", exp, gn.pg(-pay.abs_power(n), t, params, resolution=res), TOLERANCES["moment"] * (1 + abs(exp)) * tol_scale))
    return rows


def cmd_moments(a: argparse.Namespace, cfg: RunConfig) -> int:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["quantity", "expected", "computed", "abs_error", "tol", "pass"])
    failed = 0
    for q, exp, got, tol in moments_rows(cfg.params, a.t, cfg.resolution, a.tol_scale):
        err = abs(got - exp)
        ok = err <= tol
        failed += not ok
        w.writerow([q, *(format(x, ".12g") for x in (exp, got, err, tol)), str(ok).lower()])
    if failed:
        buf.write(f"# failed={failed}\n")
    atomic_write(a.out, buf.getvalue())
    return 1 if failed else 0


def cmd_simulate(a: argparse.Namespace, cfg: RunConfig) -> int:
    value = pay.from_json(_read(a.payoff)) if a.payoff else None
    if a.policy == "bangbang" and value is None:
        value = pay.abs_power(1)
    try:
        policy = gp.parse_policy(a.policy, cfg.params, value)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    seeds = [a.seed + i for i in range(a.paths)]
    paths = gp.simulate_paths(policy, a.T, a.steps, cfg.params, seeds)
    gp.write_paths_csv(paths, a.out)
    return 0


def cmd_sde(a: argparse.Namespace, cfg: RunConfig) -> int:
    spec = gsde.spec_from_json(_read(a.spec))
    ens = gsde.default_ensemble(cfg.params, spec.T, a.steps, a.ensemble, a.seed)
    result = gsde.picard_solve(spec, ens)
    if not result.converged:
        raise NumericError(f"Picard iteration did not converge in {len(result.history)} iterations")
    gsde.write_trajectories_csv(ens, result.trajectory, a.out)
    hist = a.history or f"{a.out}.history.csv"
    lines = ["iteration,increment_sq,ratio"]
    ratios = [math.nan] + result.ratios
    for i, (h, r) in enumerate(zip(result.history, ratios), start=1):
        lines.append(f"{i},{h:.12g},{'' if math.isnan(r) else format(r, '.12g')}")
    atomic_write(hist, "\n".join(lines) + "\n")
    return 0


def cmd_verify(a: argparse.Namespace, cfg: RunConfig) -> int:
    scfg = SuiteConfig(cfg.params, dx=cfg.resolution.dx, tol_scale=a.tol_scale, seed=a.seed)
    rep = run_suite(a.suite, scfg)
    if a.out:
        emit_report(rep, a.out)
    else:
        sys.stdout.write(rep.to_csv())
    s = rep.summary()
    print(f"{a.suite}: {s['passed']}/{s['rows']} rows passed", file=sys.stderr)
    return 0 if rep.passed else 1


COMMANDS = {
    "solve": cmd_solve,
    "expect": cmd_expect,
    "moments": cmd_moments,
    "simulate": cmd_simulate,
    "sde": cmd_sde,
    "verify": cmd_verify,
}


def run(argv: Sequence[str] | None = None) -> int:
    """Parse ``argv`` and run one subcommand; returns the exit code."""
    try:
        a = build_parser().parse_args(argv)
        cfg = RunConfig.from_args(a)
        return COMMANDS[a.cmd](a, cfg)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"gcalc: error: {exc}", file=sys.stderr)
        return 2
    except USAGE_ERRORS as exc:
        print(f"gcalc: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except RUN_ERRORS as exc:
        print(f"gcalc: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
