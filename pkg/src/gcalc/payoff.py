"""Catalog of scalar payoff functions.

Every payoff is a small, serializable description (``kind`` plus ``params``)
that evaluates vectorized over numpy arrays and carries the metadata the
solvers need: declared convexity, kink locations, a Lipschitz bound on a
truncated domain and a growth class.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import SchemaError

KINDS = (
    "const",
    "identity",
    "affine",
    "power",
    "abs_power",
    "neg",
    "call",
    "put",
    "sin",
    "exp_clip",
    "sum",
    "rescale",
    "table",
)


def _freeze(value: Any) -> Any:
    if isinstance(value, Mapping):
        return tuple(sorted((k, _freeze(v)) for k, v in value.items()))
    if isinstance(value, (list, tuple)):
        return tuple(_freeze(v) for v in value)
    if isinstance(value, np.ndarray):
        return tuple(value.tolist())
    return value


@dataclass(frozen=True, eq=False)
class Payoff:
    """A payoff ``x -> phi(x)`` drawn from a closed catalog.

    Use the module-level constructors (:func:`power`, :func:`call`, ...)
    rather than building instances by hand; they validate parameters.
    """

    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise SchemaError(f"unknown payoff kind {self.kind!r}")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Payoff):
            return NotImplemented
        return self.kind == other.kind and _freeze(self.params) == _freeze(other.params)

    def __hash__(self) -> int:
        return hash((self.kind, _freeze(self.params)))

    def __repr__(self) -> str:
        if self.kind == "table":
            return f"Payoff(table, n={len(self.params['xs'])})"
        return f"Payoff({self.kind}, {dict(self.params)})"

    # evaluation ----------------------------------------------------------

    def __call__(self, x: Any) -> Any:
        x = np.asarray(x, dtype=float)
        k, p = self.kind, self.params
        if k == "const":
            return np.full_like(x, float(p["c"]))
        if k == "identity":
            return x.copy()
        if k == "affine":
            return p["a"] * x + p["b"]
        if k == "power":
            return x ** p["n"]
        if k == "abs_power":
            return np.abs(x) ** p["n"]
        if k == "neg":
            return -p["of"](x)
        if k == "call":
            return np.maximum(x - p["K"], 0.0)
        if k == "put":
            return np.maximum(p["K"] - x, 0.0)
        if k == "sin":
            return np.sin(p["omega"] * x)
        if k == "exp_clip":
            return np.exp(np.clip(x, p["lo"], p["hi"]))
        if k == "sum":
            out = np.zeros_like(x)
            for w, term in p["terms"]:
                out = out + w * term(x)
            return out
        if k == "rescale":
            return p["of"](p["shift"] + p["scale"] * x)
        if k == "table":
            return _table_eval(p["xs"], p["values"], x)
        raise AssertionError(k)

    def deriv(self, x: Any, order: int = 1) -> Any:
        """Derivative of the given order, for the smooth part of the catalog."""
        x = np.asarray(x, dtype=float)
        k, p = self.kind, self.params
        if order == 0:
            return self(x)
        if k == "const":
            return np.zeros_like(x)
        if k == "identity":
            return np.ones_like(x) if order == 1 else np.zeros_like(x)
        if k == "affine":
            return np.full_like(x, p["a"]) if order == 1 else np.zeros_like(x)
        if k == "power":
            n = p["n"]
            if order > n:
                return np.zeros_like(x)
            coef = math.perm(n, order)
            return coef * x ** (n - order)
        if k == "sin":
            w = p["omega"]
            phase = [np.sin, np.cos, lambda z: -np.sin(z), lambda z: -np.cos(z)][order % 4]
            return w**order * phase(w * x)
        if k == "neg":
            return -p["of"].deriv(x, order)
        if k == "sum":
            out = np.zeros_like(x)
            for w, term in p["terms"]:
                out = out + w * term.deriv(x, order)
            return out
        if k == "rescale":
            return p["scale"] ** order * p["of"].deriv(p["shift"] + p["scale"] * x, order)
        raise ValueError(f"payoff kind {k!r} has no closed-form derivative")

    # metadata ------------------------------------------------------------

    @property
    def shape(self) -> str | None:
        """Declared shape: ``"affine"``, ``"convex"``, ``"concave"`` or ``None``."""
        k, p = self.kind, self.params
        if k in ("const", "identity", "affine"):
            return "affine"
        if k == "power":
            n = p["n"]
            if n == 1:
                return "affine"
            return "convex" if n % 2 == 0 else None
        if k in ("abs_power", "call", "put"):
            return "convex"
        if k == "neg":
            inner = p["of"].shape
            return {"convex": "concave", "concave": "convex"}.get(inner, inner)
        if k == "rescale":
            return p["of"].shape
        if k == "sum":
            shapes = set()
            for w, term in p["terms"]:
                s = term.shape
                if s is None:
                    return None
                if s != "affine" and w < 0:
                    s = "concave" if s == "convex" else "convex"
                if s != "affine" and w != 0:
                    shapes.add(s)
            if not shapes:
                return "affine"
            return shapes.pop() if len(shapes) == 1 else None
        return p.get("shape") if k == "table" else None

    @property
    def kinks(self) -> tuple[float, ...]:
        """Points where the payoff is not twice differentiable."""
        k, p = self.kind, self.params
        if k in ("call", "put"):
            return (float(p["K"]),)
        if k == "abs_power":
            return (0.0,)
        if k == "exp_clip":
            return (float(p["lo"]), float(p["hi"]))
        if k == "neg":
            return p["of"].kinks
        if k == "sum":
            pts: set[float] = set()
            for _, term in p["terms"]:
                pts.update(term.kinks)
            return tuple(sorted(pts))
        if k == "rescale":
            return tuple(sorted((c - p["shift"]) / p["scale"] for c in p["of"].kinks))
        return ()

    @property
    def growth(self) -> str:
        k, p = self.kind, self.params
        if k in ("const", "sin", "exp_clip"):
            return "bounded"
        if k in ("identity", "affine", "call", "put", "table"):
            return "linear"
        if k in ("power", "abs_power"):
            return "linear" if p["n"] == 1 else f"polynomial:{p['n']}"
        if k in ("neg", "rescale"):
            return p["of"].growth
        order = {"bounded": 0, "linear": 1}
        best, rank = "bounded", 0
        for _, term in p["terms"]:
            g = term.growth
            r = order.get(g, int(g.split(":")[1]) if ":" in g else 1)
            if r > rank:
                best, rank = g, r
        return best

    @property
    def degree(self) -> int:
        """Polynomial growth exponent (0 for bounded payoffs)."""
        g = self.growth
        return {"bounded": 0, "linear": 1}.get(g) or int(g.split(":")[1])

    def lipschitz(self, radius: float) -> float:
        """Upper bound on the Lipschitz constant on ``[-radius, radius]``."""
        k, p = self.kind, self.params
        r = abs(radius)
        if k == "const":
            return 0.0
        if k == "identity":
            return 1.0
        if k == "affine":
            return abs(p["a"])
        if k in ("power", "abs_power"):
            n = p["n"]
            return n * r ** (n - 1) if n > 1 else 1.0
        if k in ("call", "put"):
            return 1.0
        if k == "sin":
            return abs(p["omega"])
        if k == "exp_clip":
            return math.exp(p["hi"])
        if k == "neg":
            return p["of"].lipschitz(r)
        if k == "sum":
            return sum(abs(w) * term.lipschitz(r) for w, term in p["terms"])
        if k == "rescale":
            s = abs(p["scale"])
            return s * p["of"].lipschitz(abs(p["shift"]) + s * r)
        xs, vs = np.asarray(p["xs"]), np.asarray(p["values"])
        return float(np.max(np.abs(np.diff(vs) / np.diff(xs)))) if len(xs) > 1 else 0.0

    # composition ---------------------------------------------------------

    def __neg__(self) -> Payoff:
        if self.kind == "neg":
            return self.params["of"]
        return Payoff("neg", {"of": self})

    def rescaled(self, scale: float = 1.0, shift: float = 0.0) -> Payoff:
        """Return ``x -> self(shift + scale * x)``."""
        if scale == 0:
            raise SchemaError("rescale needs a nonzero scale")
        return Payoff("rescale", {"of": self, "scale": float(scale), "shift": float(shift)})

    # serialization -------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        k, p = self.kind, self.params
        if k in ("neg",):
            return {"kind": k, "params": {"of": p["of"].to_dict()}}
        if k == "rescale":
            return {
                "kind": k,
                "params": {"of": p["of"].to_dict(), "scale": p["scale"], "shift": p["shift"]},
            }
        if k == "sum":
            terms = [{"weight": w, "payoff": t.to_dict()} for w, t in p["terms"]]
            return {"kind": k, "params": {"terms": terms}}
        if k == "table":
            return {
                "kind": k,
                "params": {"xs": list(map(float, p["xs"])), "values": list(map(float, p["values"]))},
            }
        return {"kind": k, "params": dict(p)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _table_eval(xs: np.ndarray, values: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Piecewise-linear interpolation with linear extrapolation at both ends."""
    xs = np.asarray(xs, dtype=float)
    vs = np.asarray(values, dtype=float)
    if xs.size == 1:
        return np.full_like(x, vs[0])
    i = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, xs.size - 2)
    x0, x1 = xs[i], xs[i + 1]
    w = (x - x0) / (x1 - x0)
    return vs[i] + w * (vs[i + 1] - vs[i])


# constructors ---------------------------------------------------------------


def const(c: float) -> Payoff:
    return Payoff("const", {"c": float(c)})


def identity() -> Payoff:
    return Payoff("identity", {})


def affine(a: float, b: float = 0.0) -> Payoff:
    return Payoff("affine", {"a": float(a), "b": float(b)})


def power(n: int) -> Payoff:
    if int(n) != n or n < 1:
        raise SchemaError(f"power needs an integer n >= 1, got {n!r}")
    return Payoff("power", {"n": int(n)})


def abs_power(n: float = 1) -> Payoff:
    if n < 1:
        raise SchemaError(f"abs_power needs n >= 1, got {n!r}")
    return Payoff("abs_power", {"n": int(n) if float(n).is_integer() else float(n)})


def call(K: float = 0.0) -> Payoff:
    return Payoff("call", {"K": float(K)})


def put(K: float = 0.0) -> Payoff:
    return Payoff("put", {"K": float(K)})


def sin(omega: float = 1.0) -> Payoff:
    return Payoff("sin", {"omega": float(omega)})


def exp_clip(lo: float = -2.0, hi: float = 2.0) -> Payoff:
    if not lo < hi:
        raise SchemaError("exp_clip needs lo < hi")
    return Payoff("exp_clip", {"lo": float(lo), "hi": float(hi)})


def total(terms: Sequence[tuple[float, Payoff]]) -> Payoff:
    """Weighted sum of at most three catalog payoffs."""
    terms = tuple((float(w), t) for w, t in terms)
    if not 1 <= len(terms) <= 3:
        raise SchemaError("sum payoffs take between 1 and 3 terms")
    return Payoff("sum", {"terms": terms})


def table(xs: Sequence[float], values: Sequence[float], shape: str | None = None) -> Payoff:
    xs = np.asarray(xs, dtype=float)
    values = np.asarray(values, dtype=float)
    if xs.ndim != 1 or xs.shape != values.shape or xs.size < 1:
        raise SchemaError("table payoff needs matching 1-D xs and values")
    if xs.size > 1 and np.any(np.diff(xs) <= 0):
        raise SchemaError("table xs must be strictly increasing")
    params: dict[str, Any] = {"xs": xs, "values": values}
    if shape is not None:
        params["shape"] = shape
    return Payoff("table", params)


def from_dict(data: Mapping[str, Any]) -> Payoff:
    """Build a payoff from its JSON form, e.g. ``{"kind": "call", "params": {"K": 0.0}}``."""
    if not isinstance(data, Mapping) or "kind" not in data:
        raise SchemaError("payoff must be an object with a 'kind' field")
    kind = data["kind"]
    params = data.get("params", {})
    if not isinstance(params, Mapping):
        raise SchemaError("payoff 'params' must be an object")
    try:
        if kind == "const":
            return const(params["c"])
        if kind == "identity":
            return identity()
        if kind == "affine":
            return affine(params["a"], params.get("b", 0.0))
        if kind == "power":
            return power(params["n"])
        if kind in ("abs_power", "abs"):
            return abs_power(params.get("n", 1))
        if kind == "neg":
            return -from_dict(params["of"])
        if kind == "call":
            return call(params.get("K", 0.0))
        if kind == "put":
            return put(params.get("K", 0.0))
        if kind == "sin":
            return sin(params.get("omega", 1.0))
        if kind == "exp_clip":
            return exp_clip(params.get("lo", -2.0), params.get("hi", 2.0))
        if kind == "sum":
            return total([(t.get("weight", 1.0), from_dict(t["payoff"])) for t in params["terms"]])
        if kind == "rescale":
            return from_dict(params["of"]).rescaled(params.get("scale", 1.0), params.get("shift", 0.0))
        if kind == "table":
            return table(params["xs"], params["values"])
    except KeyError as exc:
        raise SchemaError(f"payoff {kind!r} is missing parameter {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(f"bad parameters for payoff {kind!r}: {exc}") from None
    raise SchemaError(f"unknown payoff kind {kind!r}")


def from_json(text: str) -> Payoff:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"payoff is not valid JSON: {exc}") from None
    return from_dict(data)


def catalog() -> dict[str, Payoff]:
    """Named payoffs used by the verification suites."""
    return {
        "x": identity(),
        "x^2": power(2),
        "-x^2": -power(2),
        "x^3": power(3),
        "x^4": power(4),
        "|x|": abs_power(1),
        "-|x|": -abs_power(1),
        "call:0": call(0.0),
        "call:0.5": call(0.5),
        "put:-0.5": put(-0.5),
        "sin": sin(1.0),
        "exp_clip": exp_clip(),
        "mix": total([(1.0, call(0.0)), (-0.5, power(2))]),
    }
