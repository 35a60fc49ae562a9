"""Verification suites and the CSV report they emit.

Each suite returns a :class:`VerifyReport` whose rows compare an expected
value against a computed one. For inequalities the expected column holds
the bound and ``abs_error`` holds the size of the violation (0 when the
inequality holds). Every tolerance is read from :data:`TOLERANCES`; the
``tol_scale`` argument multiplies the absolute ones.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import gexpectation as gx
from . import gnormal as gn
from . import gpaths as gp
from . import gsde
from . import payoff as pay
from . import sublinear
from .pde import GParams, Resolution, SpaceGrid, default_half_width, lattice_value

TOLERANCES: dict[str, float] = {
    "moment": 5e-3,  # times (1 + |expected|)
    "moment_wide": 2e-2,  # relative, for the eighth moment
    "convexity": 5e-3,
    "chapman": 1e-2,
    "oracle": 1e-2,
    "domination": 5e-3,
    "dp_domination": 2e-2,
    "conditional": 2e-2,
    "qv": 2e-2,
    "isometry": 2e-2,
    "ito_exact": 1e-12,
    "rate_min": 0.45,
    "sde_ratio": 0.6,
    "sde_starts": 1e-8,
    "sde_exact": 0.0,
    "axioms": 1e-10,
    "g_axioms": 2e-2,
}

# thresholds that are not scaled by tol_scale
UNSCALED = ("rate_min", "sde_ratio", "sde_exact")

LATTICE_STEPS = 4096


@dataclass
class Row:
    check_id: str
    quantity: str
    expected: float
    computed: float
    abs_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.abs_error <= self.tolerance)


@dataclass
class VerifyReport:
    rows: list[Row] = field(default_factory=list)

    def add(self, check_id: str, quantity: str, expected: float, computed: float, tol: float, abs_error: float | None = None) -> Row:
        err = abs(computed - expected) if abs_error is None else abs_error
        row = Row(check_id, quantity, float(expected), float(computed), float(max(err, 0.0)), float(tol))
        self.rows.append(row)
        return row

    def at_most(self, check_id: str, quantity: str, bound: float, computed: float, tol: float) -> Row:
        """Row for ``computed <= bound`` with slack ``tol``."""
        return self.add(check_id, quantity, bound, computed, tol, max(0.0, computed - bound))

    def at_least(self, check_id: str, quantity: str, bound: float, computed: float, tol: float) -> Row:
        return self.add(check_id, quantity, bound, computed, tol, max(0.0, bound - computed))

    def extend(self, other: VerifyReport) -> VerifyReport:
        self.rows.extend(other.rows)
        return self

    @property
    def failed(self) -> int:
        return sum(not r.passed for r in self.rows)

    @property
    def passed(self) -> bool:
        return self.failed == 0

    def summary(self) -> dict[str, int]:
        return {"rows": len(self.rows), "passed": len(self.rows) - self.failed, "failed": self.failed}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["check_id", "quantity", "expected", "computed", "abs_error", "tolerance", "pass"])
        for r in self.rows:
            w.writerow([r.check_id, r.quantity, _num(r.expected), _num(r.computed), _num(r.abs_error), _num(r.tolerance), str(r.passed).lower()])
        if self.failed:
            buf.write(f"# failed={self.failed}\n")
        return buf.getvalue()


def _num(x: float) -> str:
    return format(x, ".12g")


def atomic_write(path: str | os.PathLike, text: str) -> None:
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def emit_report(report: VerifyReport, path: str | os.PathLike) -> None:
    atomic_write(path, report.to_csv())


@dataclass(frozen=True)
class SuiteConfig:
    params: GParams
    dx: float = 1.0 / 128
    tol_scale: float = 1.0
    seed: int = 0
    dp: gx.DPResolution = field(default_factory=gx.DPResolution)

    def tol(self, key: str) -> float:
        t = TOLERANCES[key]
        return t if key in UNSCALED else t * self.tol_scale

    @property
    def res(self) -> Resolution:
        return Resolution(self.dx)

    @property
    def tag(self) -> str:
        return f"s0={self.params.sigma0:g}"


# --------------------------------------------------------------------------
# suites


def suite_moments(cfg: SuiteConfig) -> VerifyReport:
    rep = VerifyReport()
    p, r = cfg.params, cfg.res
    for n in (2, 4, 6, 8):
        exp = gn.moment(n, "plus", 1.0, p)
        tol = cfg.tol("moment_wide") * exp if n == 8 else cfg.tol("moment") * (1 + exp)
        rep.add(f"M{n}", f"E[B^{n}]", exp, gn.pg(pay.power(n), 1.0, p, resolution=r), tol)
    rep.add("M2-", "E[-B^2]", -p.s0sq, gn.pg(-pay.power(2), 1.0, p, resolution=r), cfg.tol("moment") * (1 + p.s0sq))
    for n in (1, 3, 5):
        exp = gn.moment(n, "plus", 1.0, p)
        rep.add(f"A{n}", f"E[|B|^{n}]", exp, gn.pg(pay.abs_power(n), 1.0, p, resolution=r), cfg.tol("moment") * (1 + exp))
    for n in (1, 2, 3, 4):
        exp = gn.moment(n, "minus", 1.0, p)
        rep.add(f"A{n}-", f"E[-|B|^{n}]", exp, gn.pg(-pay.abs_power(n), 1.0, p, resolution=r), cfg.tol("moment") * (1 + abs(exp)))
    return rep


def convexity_payoffs() -> list[tuple[str, pay.Payoff]]:
    out = []
    for K in (0.0, 0.5, -0.5):
        out.append((f"call:{K:g}", pay.call(K)))
        out.append((f"put:{K:g}", pay.put(K)))
    out += [("|x|", pay.abs_power(1)), ("-|x|", -pay.abs_power(1)), ("x^2", pay.power(2)), ("-x^2", -pay.power(2))]
    return out


def suite_convexity(cfg: SuiteConfig) -> VerifyReport:
    rep = VerifyReport()
    for name, phi in convexity_payoffs():
        exp = gn.convex_concave_value(phi, phi.shape, 1.0, cfg.params)
        rep.add("CC", f"{phi.shape}:{name}", exp, gn.pg(phi, 1.0, cfg.params, resolution=cfg.res), cfg.tol("convexity"))
    return rep


CHAPMAN_CASES = [
    ("x^2", pay.power(2), 0.5, 0.5),
    ("call:0.5", pay.call(0.5), 0.25, 0.75),
    ("|x|", pay.abs_power(1), 0.5, 0.5),
    ("sin", pay.sin(1.0), 0.3, 0.7),
    ("put:-0.5", pay.put(-0.5), 0.75, 0.25),
    ("x^3", pay.power(3), 0.5, 0.5),
]


def suite_chapman(cfg: SuiteConfig) -> VerifyReport:
    rep = VerifyReport()
    for name, phi, s, t in CHAPMAN_CASES:
        res = gn.check_chapman(phi, s, t, cfg.params, cfg.res)
        rep.add("CK", f"{name} s={s:g} t={t:g}", 0.0, res, cfg.tol("chapman"))
    return rep


def suite_oracle(cfg: SuiteConfig) -> VerifyReport:
    rep = VerifyReport()
    for name, phi in pay.catalog().items():
        fd = gn.pg(phi, 1.0, cfg.params, resolution=cfg.res)
        grid = SpaceGrid.from_dx(0.0, default_half_width(1.0, phi), cfg.dx)
        lat = lattice_value(phi, 1.0, cfg.params, grid, LATTICE_STEPS)
        rep.add("OR", f"fd-vs-lattice:{name}", lat, fd, cfg.tol("oracle"))
    return rep


def domination_rvs() -> list[tuple[str, gx.CylinderRV]]:
    half = (0.0, 0.5, 1.0)
    return [
        ("B1^4", gx.simple_rv(half, pay.power(4))),
        ("-B1^2", gx.simple_rv(half, -pay.power(2))),
        ("sum dB^2", gx.simple_rv((0.0, 0.25, 0.5, 0.75, 1.0), pay.identity(), gx.add_square())),
        ("-|B1|", gx.simple_rv(half, -pay.abs_power(1))),
        ("sin B1", gx.simple_rv(half, pay.sin(1.0))),
    ]


def suite_domination(cfg: SuiteConfig) -> VerifyReport:
    rep = VerifyReport()
    for name, phi in pay.catalog().items():
        rep.at_least("DOM", f"pde>=gauss:{name}", gn.gaussian_value(phi, 1.0), gn.pg(phi, 1.0, cfg.params, resolution=cfg.res), cfg.tol("domination"))
    for name, X in domination_rvs():
        rep.at_least("DOM-DP", f"dp>=wiener:{name}", gx.classical_expect(X), gx.expect(X, cfg.params, cfg.dp), cfg.tol("dp_domination"))
    return rep


def _square_increment_rv() -> gx.CylinderRV:
    """``B_1^2 - B_0.5^2 = 2 B_0.5 dB + dB^2`` with ``a0 = B``."""
    steps = ((gx.add_increment(0),), (gx.add_increment(0), gx.add_product(1, 0, coef=2.0), gx.add_square(1)))
    return gx.CylinderRV(gx.Partition((0.0, 0.5, 1.0)), gx.AccumulatorSpec(2, (0.0, 0.0), steps, gx.Terminal.of(pay.identity(), 1)))


def _weighted_sq_increment_rv(xi: pay.Payoff) -> gx.CylinderRV:
    """``xi(B_0.5) (B_1 - B_0.5)^2``."""
    steps = ((gx.add_increment(0),), (gx.add_square(1),))
    term = gx.Terminal(((1.0, ((0, xi), (1, pay.identity()))),))
    return gx.CylinderRV(gx.Partition((0.0, 0.5, 1.0)), gx.AccumulatorSpec(2, (0.0, 0.0), steps, term))


def suite_conditional(cfg: SuiteConfig) -> VerifyReport:
    rep = VerifyReport()
    p, dp = cfg.params, cfg.dp
    tol = cfg.tol("conditional")
    v = gx.conditional(_square_increment_rv(), 1, p, dp)
    rep.add("C411", "sup|E[B1^2-B.5^2|F.5]-0.5|", 0.0, float(np.abs(v.values[v.core_mask()] - 0.5).max()), tol)
    xi = pay.sin(2.0)
    X = _weighted_sq_increment_rv(xi)
    tabs = gx.solve_dp(X, p, dp)
    v = tabs[1]
    mask = v.core_mask()
    e = xi(v.points[mask.reshape(-1), 0])
    target = 0.5 * (np.maximum(e, 0) - p.s0sq * np.maximum(-e, 0))
    rep.add("C48", "sup|E[xi dB^2|F.5]-(xi+ - s0^2 xi-)/2|", 0.0, float(np.abs(v.values[mask] - target).max()), tol)
    xs = np.linspace(-12.0, 12.0, 24001)
    fold = pay.table(xs, 0.5 * (np.maximum(xi(xs), 0) - p.s0sq * np.maximum(-xi(xs), 0)))
    rep.add("C48E", "E[xi dB^2]", gn.pg(fold, 0.5, p, resolution=cfg.res), float(tabs[0].values.reshape(-1)[0]), tol)
    B4 = gx.simple_rv((0.0, 0.5, 1.0), pay.power(4))
    rep.add("TOW", "tower B1^4 s=0 t=.5", 0.0, gx.check_tower(B4, 0, 1, p, dp), tol)
    rep.add("TOW", "tower B1^4 s=t=.5", 0.0, gx.check_tower(B4, 1, 1, p, dp), tol)
    if p.sigma0 == 1.0:
        v = gx.conditional(B4, 1, p, dp)
        a = v.points[v.core_mask().reshape(-1), 0]
        exact = a**4 + 6 * a**2 * 0.5 + 3 * 0.25
        rep.add("TOW1", "sup|E[B1^4|F.5]-classical|", 0.0, float(np.abs(v(a[:, None]) - exact).max()), tol)
    return rep


def suite_qv(cfg: SuiteConfig) -> VerifyReport:
    rep = VerifyReport()
    p, dp = cfg.params, cfg.dp
    tol = cfg.tol("qv")
    for K in (4, 8, 16):
        m = gp.qv_moments(1.0, K, p, dp)
        rep.add("QV1", f"E[A_{K}]", 1.0, m["m1"], tol)
        rep.add("QV1-", f"E[-A_{K}]", -p.s0sq, m["m1_neg"], tol)
        rep.add("QV2", f"E[A_{K}^2]", 1.0, m["m2"], 3.0 / K + tol)
        if p.sigma0 == 1.0:
            rep.add("QV2C", f"E[A_{K}^2] classical", 1.0 + 2.0 / K, m["m2"], tol)
    rep.add("QVI", "independence of qv increments", 0.0, gp.qv_independence_residual(0.5, 0.5, 4, p, dp), tol)
    rep.add("QVI2", "independence of squared qv increments", 0.0, gp.qv_independence_residual(0.5, 0.5, 4, p, dp, power=2), tol)
    return rep


def isometry_integrands() -> list[tuple[str, gp.SimpleProcess]]:
    return [
        ("1", gp.SimpleProcess.uniform(1.0, 4, pay.const(1.0))),
        ("B", gp.SimpleProcess.uniform(1.0, 4, pay.identity())),
        ("sin B", gp.SimpleProcess.uniform(1.0, 4, pay.sin(1.0))),
    ]


def suite_isometry(cfg: SuiteConfig) -> VerifyReport:
    rep = VerifyReport()
    p, dp = cfg.params, cfg.dp
    tol = cfg.tol("isometry")
    for name, eta in isometry_integrands():
        f = gp.expect_ito_functionals(eta, p, dp)
        rep.add("E1", f"E[int {name} dB]", 0.0, f["mean"], tol)
        rep.add("E1-", f"E[-int {name} dB]", 0.0, f["mean_neg"], tol)
        rep.add("ISO", f"isometry {name}", f["qv_second_form"], f["second_moment"], tol)
        rep.at_most("E2", f"e2 {name}", f["e2_bound"], f["second_moment"], tol)
    eta = isometry_integrands()[2][1]
    rep.add("TR", "E[B.5^2 + int_.5 sin B dB] vs E[B.5^2]", 0.0, gp.integral_translation_residual(pay.power(2), eta, 2, 0, p, dp), tol)
    rep.add("TR", "conditional at .25", 0.0, gp.integral_translation_residual(pay.power(2), eta, 2, 1, p, dp), tol)
    rep.at_most("DT", "E|int eta dt| - int E|eta| dt", 0.0, gp.dt_inequality_gap(eta, p, dp), tol)
    rep.at_most("DQ", "E|int eta d<B>| - int E|eta| dt", 0.0, gp.qv_inequality_gap(eta, p, dp), tol)
    return rep


def suite_ito(cfg: SuiteConfig) -> VerifyReport:
    rep = VerifyReport()
    p = cfg.params
    seeds = [cfg.seed * 1000 + i for i in range(32)]
    paths = gp.simulate_paths(gp.random_policy(), 1.0, 1024, p, seeds[:8])
    sq = gp.ItoProcessSpec(pay.power(2))
    worst = max(gp.ito_formula_residual(sq, path) for path in paths)
    rep.add("IT0", "x^2 residual, X = B", 0.0, worst, cfg.tol("ito_exact"))
    lin = gp.ItoProcessSpec(pay.affine(2.0, 1.0), alpha=pay.sin(1.0), eta=pay.const(0.5), beta=pay.const(1.0))
    worst = max(gp.ito_formula_residual(lin, path) for path in paths)
    rep.add("IT1", "affine Phi residual", 0.0, worst, cfg.tol("ito_exact"))
    for name, phi in (("x^3", pay.power(3)), ("sin", pay.sin(1.0))):
        _, _, rate = gp.ito_self_convergence(gp.ItoProcessSpec(phi), p, seeds=seeds)
        rep.at_least("ITR", f"rate {name}", cfg.tol("rate_min"), rate, 0.0)
    return rep


def suite_sde(cfg: SuiteConfig) -> VerifyReport:
    rep = VerifyReport()
    p = cfg.params
    ens = gsde.default_ensemble(p, 1.0, 1024, 64, cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    lin = gsde.SdeSpec(gsde.affine([[-0.5]], [0.2]), gsde.affine([[0.3]]), gsde.affine([[0.8]], [0.1]), 0.8, [1.0], 1.0)
    specs = [("linear", lin)] + [(f"random{i}", gsde.random_spec(rng)) for i in range(10)]
    worst_decay, worst_contr, worst_gap, worst_exact, worst_starts = 0.0, 0.0, 0.0, 0.0, 0.0
    for name, spec in specs:
        r1 = gsde.picard_solve(spec, ens)
        r2 = gsde.picard_solve(spec, ens, start=gsde.perturbation(ens, spec.n, rng))
        X = gsde.euler_solve(spec, ens)
        dr = r1.decay_ratios()[2:]
        worst_decay = max([worst_decay] + dr)
        worst_starts = max(worst_starts, ens.norm_sq(r1.trajectory - r2.trajectory, spec.C))
        worst_exact = max(worst_exact, float(np.abs(r1.trajectory - X).max()))
        Y, Y2 = gsde.perturbation(ens, spec.n, rng), gsde.perturbation(ens, spec.n, rng)
        worst_contr = max(worst_contr, gsde.contraction_ratio(spec, ens, Y, Y2))
        worst_gap = max(worst_gap, gsde.lemma_gap(spec, ens, Y, Y2))
    rep.at_most("SDE1", "Picard decay ratio after iteration 2", 0.5, worst_decay, cfg.tol("sde_ratio") - 0.5)
    rep.at_most("SDE2", "contraction ratio, random inputs", 0.5, worst_contr, cfg.tol("sde_ratio") - 0.5)
    rep.add("SDE3", "two Picard starts, ensemble norm", 0.0, worst_starts, cfg.tol("sde_starts"))
    rep.add("SDE4", "Picard limit vs Euler", 0.0, worst_exact, cfg.tol("sde_exact"))
    rep.at_most("SDE5", "lemma gap, C = 3K^2(2T+1) (relative)", 0.0, worst_gap, cfg.tol("isometry"))
    _, _, rate = gsde.exponential_self_convergence(p, seeds=[cfg.seed * 100000 + i for i in range(4096)])
    rep.at_least("SDE6", "exponential SDE rate", cfg.tol("rate_min"), rate, 0.0)
    ode = gsde.SdeSpec(gsde.affine([[-1.0]]), gsde.zero(), gsde.zero(), 1.0, [1.0], 1.0)
    Xo = gsde.euler_solve(ode, gsde.default_ensemble(p, 1.0, 4096, 4, cfg.seed))
    rep.add("SDE7", "dX = -X dt at 4096 steps", math.exp(-1.0), float(Xo[0, -1, 0]), 1e-3 * cfg.tol_scale)
    return rep


def suite_axioms(cfg: SuiteConfig) -> VerifyReport:
    rep = VerifyReport()
    fin = sublinear.run_trials(1000, cfg.seed, tol=cfg.tol("axioms"))
    for c in fin.checks:
        rep.add(f"AX-{c.check_id}", f"finite:{c.axiom}", 0.0, c.worst_violation, cfg.tol("axioms"))
    g = gx.check_properties(gx.standard_samples(), cfg.params, cfg.dp, tol=cfg.tol("g_axioms"))
    for c in g.checks:
        rep.add(f"GX-{c.check_id}", f"G:{c.axiom}", 0.0, c.worst_violation, cfg.tol("g_axioms"))
    return rep


SUITES: dict[str, Callable[[SuiteConfig], VerifyReport]] = {
    "moments": suite_moments,
    "convexity": suite_convexity,
    "chapman": suite_chapman,
    "oracle": suite_oracle,
    "domination": suite_domination,
    "conditional": suite_conditional,
    "qv": suite_qv,
    "isometry": suite_isometry,
    "ito": suite_ito,
    "sde": suite_sde,
    "axioms": suite_axioms,
}


def run_suite(name: str, cfg: SuiteConfig) -> VerifyReport:
    if name == "all":
        rep = VerifyReport()
        for fn in SUITES.values():
            rep.extend(fn(cfg))
        return rep
    if name not in SUITES:
        raise KeyError(name)
    return SUITES[name](cfg)
