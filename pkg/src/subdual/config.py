"""TOML run configuration: strict parsing, validation with aggregated
errors, and construction of solver objects."""
from __future__ import annotations

import ast
import copy
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError

ESTIMATES = ("basic", "basic-alt", "triple", "galpha", "pme", "entropy", "spectral", "uniqueness")

_FUNCTIONS = {
    name: getattr(np, name)
    for name in ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "tanh", "sinh", "cosh", "arctan",
                 "minimum", "maximum", "where", "heaviside", "sign", "floor", "log1p", "expm1")
}
_CONSTANTS = {"pi": math.pi, "e": math.e}
_NODES = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant, ast.Compare,
          ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.Mod, ast.USub, ast.UAdd,
          ast.Lt, ast.LtE, ast.Gt, ast.GtE, ast.Eq, ast.NotEq)


class Expression:
    """A numpy expression in the allowed variables, e.g. ``"sin(pi*x)"``."""

    def __init__(self, text: str, variables):
        self.text = str(text)
        self.variables = tuple(variables)
        try:
            tree = ast.parse(self.text, mode="eval")
        except SyntaxError as exc:
            raise ValueError(f"cannot parse expression {self.text!r}: {exc.msg}") from None
        for node in ast.walk(tree):
            if not isinstance(node, _NODES):
                raise ValueError(f"expression {self.text!r} uses unsupported syntax {type(node).__name__}")
            if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in _FUNCTIONS):
                raise ValueError(f"expression {self.text!r} calls an unknown function")
            if isinstance(node, ast.Name) and node.id not in _FUNCTIONS and node.id not in _CONSTANTS \
                    and node.id not in self.variables:
                raise ValueError(f"expression {self.text!r} uses unknown name {node.id!r}")
            if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
                raise ValueError(f"expression {self.text!r} contains a non-numeric constant")
        self._code = compile(tree, "<expression>", "eval")

    def __call__(self, *args):
        scope = dict(_FUNCTIONS)
        scope.update(_CONSTANTS)
        scope.update(zip(self.variables, args))
        return eval(self._code, {"__builtins__": {}}, scope)

    def __repr__(self):
        return f"Expression({self.text!r})"


class TableFunction:
    """Interpolant of a CSV whose last column holds values and whose other
    columns are tensor-grid coordinates (e.g. ``t, x, a``)."""

    def __init__(self, path: Path, variables):
        from scipy.interpolate import RegularGridInterpolator

        data = np.loadtxt(path, delimiter=",", ndmin=2, comments="#")
        nvar = len(variables)
        if data.shape[1] != nvar + 1:
            raise ValueError(f"{path}: expected {nvar + 1} columns ({', '.join(variables)}, value)")
        axes = [np.unique(data[:, i]) for i in range(nvar)]
        shape = tuple(a.size for a in axes)
        if int(np.prod(shape)) != data.shape[0]:
            raise ValueError(f"{path}: samples do not form a full tensor grid")
        order = np.lexsort(tuple(data[:, i] for i in reversed(range(nvar))))
        values = data[order, -1].reshape(shape)
        if nvar == 1:
            self._interp = lambda *pts: np.interp(pts[0], axes[0], values)
        else:
            rgi = RegularGridInterpolator(axes, values, bounds_error=False, fill_value=None)
            self._interp = lambda *pts: rgi(np.stack(np.broadcast_arrays(*pts), axis=-1))
        self.path = path

    def __call__(self, *args):
        return self._interp(*[np.asarray(a, dtype=float) for a in args])


# -- schema -------------------------------------------------------------------

def _num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _int(v):
    return isinstance(v, int) and not isinstance(v, bool)


SCHEMA = {
    "": {
        "name": (str, "run"), "seed": (_int, 0), "output": (str, "out"), "workers": (_int, 1),
        "verify": (list, ["basic"]),
    },
    "kernel": {"type": (str, "standard"), "alpha": (_num, 0.5), "terms": (list, None), "mu": (_num, 0.0),
               "file": (str, None)},
    "grid": {"T": (_num, 1.0), "steps": (_int, 64), "length": (_num, 1.0), "points": (_int, 32),
             "bc": (str, "dirichlet"), "dimension": (_int, 1)},
    "problem": {"nonlinearity": (str, "power"), "m": (_num, 1.0), "table": (str, None), "a": (None, "1"),
                "a_bounds": (list, None), "u0": (None, "0"), "f": (None, "0"), "exact": (str, None),
                "nonnegative": (bool, True), "method": (str, "newton")},
    "operator": {"type": (str, "fractional"), "beta": (_num, 1.0), "modes": (_int, None)},
    "reaction": {"stoichiometry": (list, [1, 1, 1, 1]), "nu_f": (_num, 1.0), "nu_b": (_num, 1.0),
                 "diffusion": (list, [1.0, 1.0, 1.0, 1.0]), "m": (_num, 1.0), "c0": (list, ["1", "1", "1", "1"])},
    "tolerances": {"newton": (_num, 1e-11), "max_newton": (_int, 50), "max_armijo": (_int, 30),
                   "max_fixed_point": (_int, 500), "eps_deg": (_num, 1e-14)},
    "estimates": {"companion": (str, "discrete"), "galpha_samples": (_int, 1000)},
}
OPTIONAL_SECTIONS = ("operator", "reaction")
SWEEP_ALIASES = {"alpha": "kernel.alpha", "m": "problem.m", "steps": "grid.steps", "points": "grid.points",
                 "beta": "operator.beta", "T": "grid.T", "mu": "kernel.mu"}


@dataclass
class RunConfig:
    """Validated configuration.  ``data`` holds every section with
    defaults filled in; ``base_dir`` resolves relative file paths."""

    data: dict
    base_dir: Path = field(default_factory=Path.cwd)
    sweep: dict = field(default_factory=dict)
    sweep_zip: dict = field(default_factory=dict)

    def section(self, name: str) -> dict:
        return self.data[name] if name else self.data

    @property
    def seed(self) -> int:
        return self.data["seed"]

    @property
    def verify(self) -> list:
        return list(self.data["verify"])

    @property
    def kind(self) -> str:
        if "reaction" in self.data:
            return "reaction"
        if "operator" in self.data:
            return "spectral"
        return "stencil"

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def with_overrides(self, overrides: dict) -> "RunConfig":
        raw = copy.deepcopy(self.data)
        for dotted, value in overrides.items():
            set_dotted(raw, dotted, value)
        return validate(raw, self.base_dir)


def set_dotted(raw: dict, dotted: str, value):
    dotted = SWEEP_ALIASES.get(dotted, dotted)
    parts = dotted.split(".")
    node = raw
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value


def _split_sweep(raw: dict, errors: list):
    sweep = raw.pop("sweep", {}) or {}
    if not isinstance(sweep, dict):
        errors.append("sweep must be a table")
        return {}, {}
    zipped = sweep.pop("zip", {}) or {}
    axes = {}
    for table, target in ((sweep, axes), (zipped, None)):
        for key, values in table.items():
            if not isinstance(values, list) or not values:
                errors.append(f"sweep axis {key!r} must be a nonempty list")
    lengths = {len(v) for v in zipped.values() if isinstance(v, list)}
    if len(lengths) > 1:
        errors.append("sweep.zip axes must all have the same length")
    return dict(sweep), dict(zipped)


def _check_sections(raw: dict, errors: list) -> dict:
    data = {}
    for key in raw:
        if key not in SCHEMA and key != "sweep" and key not in SCHEMA[""]:
            errors.append(f"unknown key {key!r}")
    for section, fields in SCHEMA.items():
        if section == "":
            src = {k: v for k, v in raw.items() if k in fields}
        else:
            if section in OPTIONAL_SECTIONS and section not in raw:
                continue
            src = raw.get(section, {})
            if not isinstance(src, dict):
                errors.append(f"{section} must be a table")
                continue
            for k in src:
                if k not in fields:
                    errors.append(f"unknown key '{section}.{k}'")
        out = {}
        for k, (check, default) in fields.items():
            if k in src:
                v = src[k]
                if v is None and default is None:
                    out[k] = None
                    continue
                if check is not None and not (check(v) if callable(check) and check not in (str, list, bool)
                                              else isinstance(v, check)):
                    where = f"{section}.{k}" if section else k
                    errors.append(f"{where} has invalid type {type(v).__name__}")
                    out[k] = copy.deepcopy(default)
                    continue
                out[k] = float(v) if check is _num else v
            else:
                out[k] = copy.deepcopy(default)
        if section == "":
            data.update(out)
        else:
            data[section] = out
    return data


def _check_expr(value, variables, where, base_dir, errors):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return
    if isinstance(value, dict):
        if set(value) != {"file"} or not isinstance(value["file"], str):
            errors.append(f"{where} table must contain exactly one key 'file'")
            return
        path = Path(value["file"])
        path = path if path.is_absolute() else base_dir / path
        if not path.exists():
            errors.append(f"{where}: file not found: {path}")
        return
    if not isinstance(value, str):
        errors.append(f"{where} must be a number, an expression string or {{file = ...}}")
        return
    try:
        Expression(value, variables)
    except ValueError as exc:
        errors.append(f"{where}: {exc}")


def _positive(data, section, keys, errors):
    for k in keys:
        v = data[section][k]
        if v is not None and not v > 0:
            errors.append(f"{section}.{k} must be positive")


def validate(raw: dict, base_dir: Optional[Path] = None) -> RunConfig:
    base_dir = Path(base_dir or Path.cwd())
    raw = copy.deepcopy(raw)
    errors: list = []
    sweep, zipped = _split_sweep(raw, errors)
    data = _check_sections(raw, errors)

    k = data["kernel"]
    if k["type"] not in ("standard", "multi-term", "exp-shifted", "tabulated"):
        errors.append(f"kernel.type must be standard, multi-term, exp-shifted or tabulated, got {k['type']!r}")
    if k["type"] == "standard" and not 0.0 < k["alpha"] < 1.0:
        errors.append("kernel.alpha must lie in (0, 1)")
    if k["type"] == "exp-shifted" and not 0.0 <= k["alpha"] < 1.0:
        errors.append("kernel.alpha must lie in [0, 1) for an exp-shifted kernel")
    if k["type"] == "exp-shifted" and k["mu"] < 0:
        errors.append("kernel.mu must be nonnegative")
    if k["type"] == "multi-term":
        terms = k["terms"]
        if not terms or not all(isinstance(t, list) and len(t) == 2 and all(_num(x) for x in t) for t in terms):
            errors.append("kernel.terms must be a list of [weight, alpha] pairs")
        elif not all(w > 0 and 0 < a < 1 for w, a in terms):
            errors.append("kernel.terms need positive weights and orders in (0, 1)")
    if k["type"] == "tabulated":
        if not k["file"]:
            errors.append("kernel.file is required for a tabulated kernel")
        elif not (base_dir / k["file"]).exists() and not Path(k["file"]).exists():
            errors.append(f"kernel.file: file not found: {base_dir / k['file']}")

    g = data["grid"]
    _positive(data, "grid", ("T", "steps", "length"), errors)
    if g["points"] < 2:
        errors.append("grid.points must be at least 2")
    if g["bc"] not in ("dirichlet", "neumann", "periodic"):
        errors.append("grid.bc must be dirichlet, neumann or periodic")
    if g["dimension"] not in (1, 2):
        errors.append("grid.dimension must be 1 or 2")
    variables = ("x",) if g["dimension"] == 1 else ("x", "y")

    p = data["problem"]
    if p["nonlinearity"] not in ("power", "linear", "custom-table"):
        errors.append("problem.nonlinearity must be power, linear or custom-table")
    if p["nonlinearity"] == "custom-table":
        if not p["table"]:
            errors.append("problem.table is required for a custom-table nonlinearity")
        elif not (base_dir / p["table"]).exists():
            errors.append(f"problem.table: file not found: {base_dir / p['table']}")
    if not p["m"] >= 1:
        errors.append("problem.m must be >= 1")
    if p["method"] not in ("newton", "newton-only", "picard"):
        errors.append("problem.method must be newton, newton-only or picard")
    if p["a_bounds"] is not None:
        b = p["a_bounds"]
        if len(b) != 2 or not all(_num(x) for x in b):
            errors.append("problem.a_bounds must be [a1, a2]")
        else:
            if not b[0] > 0:
                errors.append("coefficient lower bound must be positive")
            if b[1] < b[0]:
                errors.append("coefficient upper bound must not be below the lower bound")
    _check_expr(p["a"], ("t",) + variables, "problem.a", base_dir, errors)
    _check_expr(p["f"], ("t",) + variables, "problem.f", base_dir, errors)
    _check_expr(p["u0"], variables, "problem.u0", base_dir, errors)
    if p["exact"] is not None:
        _check_expr(p["exact"], ("t",) + variables, "problem.exact", base_dir, errors)

    if "operator" in data:
        o = data["operator"]
        if o["type"] != "fractional":
            errors.append("operator.type must be 'fractional'")
        if not (0 < o["beta"] <= 2):
            errors.append("operator.beta must lie in (0, 2]")
        if o["modes"] is not None and o["modes"] < 2:
            errors.append("operator.modes must be at least 2")
        if g["bc"] != "periodic" and "bc" in raw.get("grid", {}):
            errors.append("the spectral operator needs grid.bc = periodic")
    if "reaction" in data:
        r = data["reaction"]
        st = r["stoichiometry"]
        if len(st) != 4 or not all(_int(a) and a >= 1 for a in st):
            errors.append("reaction.stoichiometry must be four positive integers")
        d = r["diffusion"]
        if len(d) != 4 or not all(_num(x) and x > 0 for x in d):
            errors.append("reaction.diffusion must be four positive numbers")
        if r["nu_f"] < 0 or r["nu_b"] < 0:
            errors.append("reaction rates must be nonnegative")
        if not r["m"] >= 1:
            errors.append("reaction.m must be >= 1")
        if len(r["c0"]) != 4:
            errors.append("reaction.c0 must list four initial concentrations")
        else:
            for i, c in enumerate(r["c0"]):
                _check_expr(c, variables, f"reaction.c0[{i}]", base_dir, errors)
        if g["bc"] != "neumann" and "bc" in raw.get("grid", {}):
            errors.append("the reaction system needs grid.bc = neumann")

    t = data["tolerances"]
    _positive(data, "tolerances", ("newton", "max_newton", "max_fixed_point", "eps_deg"), errors)
    if t["max_armijo"] < 0:
        errors.append("tolerances.max_armijo must be nonnegative")
    e = data["estimates"]
    if e["companion"] not in ("discrete", "analytic"):
        errors.append("estimates.companion must be discrete or analytic")
    if e["galpha_samples"] < 1:
        errors.append("estimates.galpha_samples must be positive")
    if data["workers"] < 1:
        errors.append("workers must be positive")

    kind = "reaction" if "reaction" in data else ("spectral" if "operator" in data else "stencil")
    for name in data["verify"]:
        if name not in ESTIMATES:
            errors.append(f"unknown estimate {name!r}; choose from {', '.join(ESTIMATES)}")
        elif name == "entropy" and kind != "reaction":
            errors.append("the entropy estimate needs a [reaction] block")
        elif name == "spectral" and kind != "spectral":
            errors.append("the spectral estimate needs an [operator] block")
        elif name not in ("entropy", "galpha") and kind == "reaction":
            errors.append(f"estimate {name!r} does not apply to a reaction run")
        elif name in ("pme", "spectral") and p["a_bounds"] is None and kind != "reaction":
            errors.append(f"estimate {name!r} needs problem.a_bounds")
        elif name == "galpha" and k["type"] != "standard":
            errors.append("the galpha estimate needs a standard kernel")
        elif name == "triple" and k["type"] == "tabulated":
            errors.append("the triple estimate needs a completely monotone kernel")
    for key in list(sweep) + list(zipped):
        target = SWEEP_ALIASES.get(key, key)
        sec, _, leaf = target.rpartition(".")
        if sec not in SCHEMA or leaf not in SCHEMA[sec]:
            errors.append(f"sweep axis {key!r} does not name a configuration key")
    if errors:
        raise ConfigError(errors)
    if "reaction" in data and "bc" not in raw.get("grid", {}):
        data["grid"]["bc"] = "neumann"
    if "operator" in data:
        data["grid"]["bc"] = "periodic"
        if data["operator"]["modes"] is not None:
            data["grid"]["points"] = data["operator"]["modes"]
    return RunConfig(data, base_dir, sweep, zipped)


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"file not found: {path}")
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"parse error in {path}: {exc}") from None
    return validate(raw, path.parent)


# -- builders -----------------------------------------------------------------

def _field_function(value, variables, cfg: RunConfig):
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, dict):
        return TableFunction(cfg.resolve(value["file"]), variables)
    return Expression(value, variables)


def build_grids(cfg: RunConfig):
    from .grids import SpaceGrid, TimeGrid

    g = cfg.data["grid"]
    return TimeGrid(g["T"], g["steps"]), SpaceGrid(g["length"], g["points"], g["bc"], g["dimension"])


def build_pair(cfg: RunConfig, time=None):
    from .kernels import ExpShifted, MultiTerm, Tabulated, pair_from_kernel, standard_pair

    k = cfg.data["kernel"]
    if k["type"] == "standard":
        return standard_pair(k["alpha"])
    time = time or build_grids(cfg)[0]
    if k["type"] == "multi-term":
        kernel = MultiTerm(tuple(tuple(t) for t in k["terms"]))
    elif k["type"] == "exp-shifted":
        kernel = ExpShifted(k["alpha"], k["mu"])
    else:
        kernel = Tabulated.from_csv(cfg.resolve(k["file"]))
    return pair_from_kernel(kernel, time)


def build_options(cfg: RunConfig):
    from .solver import SolverOptions

    t = cfg.data["tolerances"]
    return SolverOptions(tol=t["newton"], max_newton=t["max_newton"], max_armijo=t["max_armijo"],
                         max_fixed_point=t["max_fixed_point"], eps_deg=t["eps_deg"],
                         method=cfg.data["problem"]["method"])


def build_problem(cfg: RunConfig):
    from .solver import Nonlinearity, ProblemSpec
    from .spectral import SpectralOperator

    time, space = build_grids(cfg)
    p = cfg.data["problem"]
    variables = ("x",) if space.dimension == 1 else ("x", "y")
    if p["nonlinearity"] == "custom-table":
        phi = Nonlinearity.from_csv(cfg.resolve(p["table"]))
    elif p["nonlinearity"] == "linear":
        phi = Nonlinearity("linear")
    else:
        phi = Nonlinearity.power(p["m"])
    operator = None
    if "operator" in cfg.data:
        operator = SpectralOperator(space.L, space.M, cfg.data["operator"]["beta"], space.dimension)
    return ProblemSpec(
        pair=build_pair(cfg, time), time=time, space=space, nonlinearity=phi,
        a=_field_function(p["a"], ("t",) + variables, cfg),
        u0=_field_function(p["u0"], variables, cfg),
        f=_field_function(p["f"], ("t",) + variables, cfg),
        a_bounds=tuple(p["a_bounds"]) if p["a_bounds"] is not None else None,
        nonnegative=p["nonnegative"], options=build_options(cfg), operator=operator,
    )


def build_exact(cfg: RunConfig):
    p = cfg.data["problem"]
    if p["exact"] is None:
        return None
    variables = ("x",) if cfg.data["grid"]["dimension"] == 1 else ("x", "y")
    return _field_function(p["exact"], ("t",) + variables, cfg)


def build_reaction(cfg: RunConfig):
    from .reaction import ReactionSpec

    time, space = build_grids(cfg)
    r = cfg.data["reaction"]
    variables = ("x",) if space.dimension == 1 else ("x", "y")
    c0 = []
    for c in r["c0"]:
        fn = _field_function(c, variables, cfg)
        c0.append(np.full(space.size, fn) if isinstance(fn, float) else space.sample(fn))
    spec = ReactionSpec(tuple(r["stoichiometry"]), r["nu_f"], r["nu_b"], tuple(r["diffusion"]), np.stack(c0), r["m"])
    return spec, build_pair(cfg, time), time, space, build_options(cfg)
