"""Experiment configuration: dotted ``key = value`` files (TOML syntax).

Example::

    space.kind = "euclidean"
    space.dimension = 1
    mapping.1.kind = "sin_map"
    schedule.kind = "constant"
    schedule.value = 0.5
    run.x1 = [1.0]
    run.n_max = 1000

Every key is checked against ``KEYS`` before anything is built; unknown
keys and bad values raise ConfigError naming the key.
"""

import math
import re
import sys
from dataclasses import dataclass

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from tanfix.analysis import DEFAULT_SUBSEQUENCES, FixedSet, TailSpec
from tanfix.errors import ConfigError
from tanfix.iteration import IterationConfig, make_schedule
from tanfix.mappings import (
    MAPPING_KINDS,
    Composition,
    ScalingFunction,
    Seq,
    TanSequences,
    validate_mapping,
)
from tanfix.spaces import WHOLE_SPACE, ConvexSet, make_space

# documented keys; "<i>" stands for a mapping index 1..m
KEYS = {
    "space.kind": "euclidean | poincare_disk | star_tree",
    "space.dimension": "euclidean dimension (default 1)",
    "space.branches": "star tree branch count (default 3)",
    "domain.kind": "whole_space | interval_box | closed_ball | disk_ball | tree_ball (the set K)",
    "domain.lower": "interval_box lower bounds (list; -inf allowed)",
    "domain.upper": "interval_box upper bounds (list; inf allowed)",
    "domain.center": "closed_ball center",
    "domain.radius": "ball radius",
    "mapping.<i>.kind": "one of " + " | ".join(MAPPING_KINDS),
    "mapping.<i>.factor": "affine_contraction factor",
    "mapping.<i>.center": "affine_contraction / rotation center",
    "mapping.<i>.k": "xsin_inv coefficient in (0, 1)",
    "mapping.<i>.angle": "rotation angle in radians",
    "mapping.<i>.value": "constant_map image point",
    "mapping.<i>.coefficient": "shift_scale4 growth factor (default 4)",
    "mapping.<i>.coefficients": "goebel_kirk_truncated coefficients a_2..a_{d-1}",
    "mapping.<i>.parts": "user_composition: list of parameter-free kinds, applied first to last",
    "mapping.<i>.self_map": "false for a non-self mapping K -> X (default true)",
    "mapping.<i>.verified": "false to skip construction-time checks of the TAN data",
    "mapping.<i>.tan.k.kind": "zero | geometric | power | tabulated",
    "mapping.<i>.tan.k.scale": "sequence scale",
    "mapping.<i>.tan.k.ratio": "geometric ratio / power exponent",
    "mapping.<i>.tan.k.values": "tabulated values",
    "mapping.<i>.tan.phi.kind": "zero | geometric | power | tabulated",
    "mapping.<i>.tan.phi.scale": "sequence scale",
    "mapping.<i>.tan.phi.ratio": "geometric ratio / power exponent",
    "mapping.<i>.tan.phi.values": "tabulated values",
    "mapping.<i>.tan.xi.kind": "identity | affine_capped | tabulated",
    "mapping.<i>.tan.xi.slope": "affine_capped slope below the cap",
    "mapping.<i>.tan.xi.cap": "affine_capped breakpoint",
    "mapping.<i>.tan.xi.tail_slope": "affine_capped slope above the cap",
    "mapping.<i>.tan.xi.knots": "tabulated knots (first 0)",
    "mapping.<i>.tan.xi.values": "tabulated values (first 0)",
    "mapping.<i>.tan.M": "threshold M of the linear growth bound",
    "mapping.<i>.tan.M_star": "slope M* of the linear growth bound",
    "schedule.kind": "constant | seeded_uniform | tabulated",
    "schedule.value": "constant alpha",
    "schedule.lower": "lower bound a > 0",
    "schedule.upper": "upper bound b < 1",
    "schedule.seed": "seed for seeded_uniform",
    "schedule.table": "tabulated alphas, cycled",
    "run.mode": "self | nonself",
    "run.x1": "starting point",
    "run.n_max": "maximum number of steps",
    "run.residual_tol": "stop when every d(x_n, T_i x_n) is below this",
    "run.reference": "known common fixed point p (records dist_p)",
    "run.allow_long": "permit n_max above the generic cap",
    "run.trace_intermediates": "record y_1n..y_(m-1)n",
    "fixed_set.kind": "single_point | finite_list | interval_box",
    "fixed_set.points": "list of points",
    "fixed_set.lower": "interval_box lower bounds",
    "fixed_set.upper": "interval_box upper bounds",
    "analysis.window": "tail window (default: last 25%, min 10)",
    "analysis.subsequences": "list of [stride, offset] pairs",
    "analysis.delta_tol": "max pairwise subsequence-center distance",
    "analysis.strong_tol": "threshold on min d(x_n, F) for strong convergence",
    "analysis.search_tol": "center search tolerance",
    "analysis.budget": "center search evaluation budget",
    "output.trace": "trace CSV path",
    "output.summary": "summary report path",
    "verify.samples": "samples for the space checks",
    "verify.seed": "sampling seed",
    "verify.n_max": "largest power in mapping defect sweeps",
    "verify.pairs": "sample pairs in mapping defect sweeps",
    "verify.radius": "size of the sampling region for unbounded domains",
}

_PATTERNS = {k: re.compile("^" + re.escape(k).replace(re.escape("<i>"), r"([1-9][0-9]*)") + "$") for k in KEYS}

# parameter-free kinds usable as composition parts
_SIMPLE_KINDS = ("sin_map", "xsin_inv", "identity")


def flatten(tree, prefix=""):
    out = {}
    for key, val in tree.items():
        full = f"{prefix}{key}"
        if isinstance(val, dict):
            out.update(flatten(val, full + "."))
        else:
            out[full] = val
    return out


def documented_key(key):
    """Return the documented pattern matching ``key`` or None."""
    for pat, rx in _PATTERNS.items():
        if rx.match(key):
            return pat
    return None


def load(path):
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}", key="config") from None
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"syntax error: {err}", key="config") from None
    return parse(raw)


def loads(text):
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"syntax error: {err}", key="config") from None
    return parse(raw)


def parse(raw):
    flat = flatten(raw)
    for key in flat:
        if documented_key(key) is None:
            raise ConfigError("unknown key", key=key)
    return Settings(flat)


class Settings:
    """Validated flat key/value view of one configuration file."""

    def __init__(self, flat):
        self.flat = dict(flat)

    def __contains__(self, key):
        return key in self.flat

    def get(self, key, default=None, kind=None):
        if key not in self.flat:
            return default
        val = self.flat[key]
        if kind is None:
            return val
        return _coerce(key, val, kind)

    def require(self, key, kind=None):
        if key not in self.flat:
            raise ConfigError("missing required key", key=key)
        return self.get(key, kind=kind)

    def mapping_indices(self):
        idx = sorted({int(k.split(".")[1]) for k in self.flat if k.startswith("mapping.")})
        if idx != list(range(1, len(idx) + 1)):
            raise ConfigError("mappings must be numbered 1..m without gaps", key="mapping")
        return idx


def _coerce(key, val, kind):
    if kind == "int":
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError(f"expected an integer, got {val!r}", key=key)
        return val
    if kind == "float":
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError(f"expected a number, got {val!r}", key=key)
        return float(val)
    if kind == "bool":
        if not isinstance(val, bool):
            raise ConfigError(f"expected true/false, got {val!r}", key=key)
        return val
    if kind == "str":
        if not isinstance(val, str):
            raise ConfigError(f"expected a string, got {val!r}", key=key)
        return val
    if kind == "floats":
        if not isinstance(val, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in val):
            raise ConfigError(f"expected a list of numbers, got {val!r}", key=key)
        return [float(v) for v in val]
    raise AssertionError(kind)


# ---------------------------------------------------------------------------
# Building objects


def build_domain(cfg, prefix="domain"):
    kind = cfg.get(f"{prefix}.kind", "whole_space", "str")
    try:
        if kind == "whole_space":
            return WHOLE_SPACE
        if kind == "interval_box":
            return ConvexSet(kind, lower=tuple(cfg.require(f"{prefix}.lower", "floats")),
                             upper=tuple(cfg.require(f"{prefix}.upper", "floats")))
        if kind == "closed_ball":
            return ConvexSet(kind, center=tuple(cfg.require(f"{prefix}.center", "floats")),
                             radius=cfg.require(f"{prefix}.radius", "float"))
        if kind in ("disk_ball", "tree_ball"):
            return ConvexSet(kind, radius=cfg.require(f"{prefix}.radius", "float"))
    except ConfigError as err:
        if err.key is None:
            raise ConfigError(str(err), key=f"{prefix}.kind") from None
        raise
    raise ConfigError(f"unknown set kind {kind!r}", key=f"{prefix}.kind")


def build_space(cfg):
    kind = cfg.require("space.kind", "str")
    domain = build_domain(cfg)
    try:
        return make_space(kind, dimension=cfg.get("space.dimension", 1, "int"),
                          branches=cfg.get("space.branches", 3, "int"), domain=domain)
    except ConfigError as err:
        if err.key is None:
            raise ConfigError(str(err), key="domain.kind") from None
        raise


def build_point(space, key, val):
    if not isinstance(val, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in val):
        raise ConfigError(f"expected a point as a list of numbers, got {val!r}", key=key)
    try:
        return space.check(space.point(tuple(val)))
    except ValueError as err:
        raise ConfigError(str(err), key=key) from None


def _seq(cfg, base):
    if f"{base}.kind" not in cfg:
        return None
    return Seq(cfg.get(f"{base}.kind", kind="str"), scale=cfg.get(f"{base}.scale", 0.0, "float"),
               ratio=cfg.get(f"{base}.ratio", 0.0, "float"),
               values=tuple(cfg.get(f"{base}.values", [], "floats")))


def _tan(cfg, base, default):
    keys = [k for k in cfg.flat if k.startswith(base + ".")]
    if not keys:
        return None
    xi = default.xi
    if f"{base}.xi.kind" in cfg:
        xi = ScalingFunction(cfg.get(f"{base}.xi.kind", kind="str"),
                             slope=cfg.get(f"{base}.xi.slope", 1.0, "float"),
                             cap=cfg.get(f"{base}.xi.cap", 1.0, "float"),
                             tail_slope=cfg.get(f"{base}.xi.tail_slope", 1.0, "float"),
                             knots=tuple(cfg.get(f"{base}.xi.knots", [], "floats")),
                             values=tuple(cfg.get(f"{base}.xi.values", [], "floats")))
    return TanSequences(k=_seq(cfg, f"{base}.k") or default.k, phi=_seq(cfg, f"{base}.phi") or default.phi,
                        xi=xi, M=cfg.get(f"{base}.M", default.M, "float"),
                        M_star=cfg.get(f"{base}.M_star", default.M_star, "float"))


def build_mapping(cfg, space, i, validate=True):
    base = f"mapping.{i}"
    kind = cfg.require(f"{base}.kind", "str")
    if kind not in MAPPING_KINDS:
        raise ConfigError(f"unknown mapping kind {kind!r}", key=f"{base}.kind")
    common = {"self_map": cfg.get(f"{base}.self_map", True, "bool")}
    if f"{base}.verified" in cfg:
        common["verified"] = cfg.get(f"{base}.verified", kind="bool")
    cls = MAPPING_KINDS[kind]
    try:
        if kind == "sin_map":
            T = cls(space, **common)
        elif kind == "xsin_inv":
            T = cls(cfg.get(f"{base}.k", 0.5, "float"), space, **common)
        elif kind == "shift_scale4":
            T = cls(space, coefficient=cfg.get(f"{base}.coefficient", 4.0, "float"), **common)
        elif kind == "goebel_kirk_truncated":
            coeffs = cfg.get(f"{base}.coefficients", None, "floats")
            T = cls(space, coefficients=coeffs, domain=None if space.domain.kind == "whole_space" else space.domain,
                    **common)
        elif kind == "affine_contraction":
            center = cfg.get(f"{base}.center")
            T = cls(space, factor=cfg.get(f"{base}.factor", 0.5, "float"),
                    center=None if center is None else build_point(space, f"{base}.center", center), **common)
        elif kind == "constant_map":
            T = cls(space, build_point(space, f"{base}.value", cfg.require(f"{base}.value")), **common)
        elif kind == "rotation":
            T = cls(space, angle=cfg.get(f"{base}.angle", 1.0, "float"),
                    center=tuple(cfg.get(f"{base}.center", [0.0, 0.0], "floats")), **common)
        elif kind == "identity":
            T = cls(space, **common)
        else:
            parts = cfg.require(f"{base}.parts")
            if not isinstance(parts, list) or not all(p in _SIMPLE_KINDS for p in parts):
                raise ConfigError(f"parts must be a list drawn from {_SIMPLE_KINDS}", key=f"{base}.parts")
            T = Composition([MAPPING_KINDS[p](space=space) if p != "identity" else MAPPING_KINDS[p](space)
                             for p in parts], **common)
    except ConfigError as err:
        if err.key is None:
            raise ConfigError(str(err), key=base) from None
        raise
    seq = _tan(cfg, f"{base}.tan", T.seq)
    if seq is not None:
        T.seq = seq
    if validate:
        try:
            validate_mapping(T, radius=cfg.get("verify.radius", 1.0, "float"))
        except ConfigError as err:
            raise ConfigError(str(err), key=base) from None
    return T


def build_fixed_set(cfg, space):
    if "fixed_set.kind" not in cfg:
        return None
    kind = cfg.get("fixed_set.kind", kind="str")
    if kind == "interval_box":
        box = ConvexSet("interval_box", lower=tuple(cfg.require("fixed_set.lower", "floats")),
                        upper=tuple(cfg.require("fixed_set.upper", "floats")))
        return FixedSet(kind, box=box)
    pts = cfg.require("fixed_set.points")
    if not isinstance(pts, list):
        raise ConfigError("expected a list of points", key="fixed_set.points")
    return FixedSet(kind, points=tuple(build_point(space, "fixed_set.points", p) for p in pts))


def build_schedule(cfg):
    try:
        return make_schedule(cfg.get("schedule.kind", "constant", "str"),
                             value=cfg.get("schedule.value", None, "float"),
                             lower=cfg.get("schedule.lower", None, "float"),
                             upper=cfg.get("schedule.upper", None, "float"),
                             seed=cfg.get("schedule.seed", 0, "int"),
                             table=cfg.get("schedule.table", [], "floats"))
    except ConfigError as err:
        if err.key == "schedule":
            lo = "schedule.lower" if "schedule.lower" in cfg else "schedule.value"
            raise ConfigError(str(err).split(": ", 1)[-1], key=lo) from None
        raise


@dataclass
class Experiment:
    """Everything a command needs, built from one Settings object."""

    settings: Settings
    space: object
    iteration: IterationConfig = None

    @property
    def K(self):
        return self.space.domain

    def analysis_options(self):
        cfg = self.settings
        window = cfg.get("analysis.window", None, "int")
        subs = cfg.get("analysis.subsequences")
        if subs is None:
            specs = tuple(TailSpec(window, s.stride, s.offset) for s in DEFAULT_SUBSEQUENCES)
        else:
            if not isinstance(subs, list) or not all(
                    isinstance(s, list) and len(s) == 2 and all(isinstance(v, int) for v in s) for s in subs):
                raise ConfigError("expected a list of [stride, offset] pairs", key="analysis.subsequences")
            specs = tuple(TailSpec(window, s, o) for s, o in subs)
        return dict(
            tail=TailSpec(window),
            subsequences=specs,
            delta_tol=cfg.get("analysis.delta_tol", 1e-4, "float"),
            strong_tol=cfg.get("analysis.strong_tol", 1e-6, "float"),
            search=dict(tol=cfg.get("analysis.search_tol", 1e-6, "float"),
                        budget=cfg.get("analysis.budget", 10_000, "int")),
        )


def build_family(cfg, space, validate=True):
    return [build_mapping(cfg, space, i, validate) for i in cfg.mapping_indices()]


def build_experiment(cfg, with_iteration=True, seed=None, trace_intermediates=None):
    space = build_space(cfg)
    exp = Experiment(cfg, space)
    if not with_iteration:
        return exp
    family = build_family(cfg, space)
    if not family:
        raise ConfigError("at least one mapping is required", key="mapping.1.kind")
    schedule = build_schedule(cfg)
    if seed is not None and schedule.kind == "seeded_uniform":
        schedule = make_schedule(schedule.kind, lower=schedule.lower, upper=schedule.upper, seed=seed)
    ref = cfg.get("run.reference")
    inter = cfg.get("run.trace_intermediates", False, "bool") if trace_intermediates is None else trace_intermediates
    exp.iteration = IterationConfig(
        space=space,
        family=family,
        x1=build_point(space, "run.x1", cfg.require("run.x1")),
        schedule=schedule,
        n_max=cfg.get("run.n_max", 1000, "int"),
        residual_tol=cfg.get("run.residual_tol", 1e-10, "float"),
        mode=cfg.get("run.mode", "self", "str"),
        reference=None if ref is None else build_point(space, "run.reference", ref),
        fixed_set=build_fixed_set(cfg, space),
        trace_intermediates=inter,
        allow_long=cfg.get("run.allow_long", False, "bool"),
    )
    for key in ("run.residual_tol",):
        v = exp.iteration.residual_tol
        if not math.isfinite(v):
            raise ConfigError("must be finite", key=key)
    return exp
