"""The m-step iteration for a finite family of TAN mappings.

For a family T_1..T_m and weights alpha_n, one step reads

    y_{m-1} = W(x_n, T_m^n x_n, alpha_n)
    y_j     = W(x_n, T_{j+1}^n y_{j+1}, alpha_n)      j = m-2, ..., 1
    x_{n+1} = W(x_n, T_1^n y_1, alpha_n)

(``x_{n+1} = W(x_n, T_1^n x_n, alpha_n)`` when m = 1).  The non-self variant
uses ``T_i (P T_i)^(n-1)`` in place of ``T_i^n`` and retracts every W output
onto K.
"""

from dataclasses import dataclass, field

from tanfix.analysis import FixedSet, dist_to_fixed_set
from tanfix.errors import ConfigError, DomainError
from tanfix.mappings import DOMAIN_TOL, apply_power_nonself
from tanfix.spaces import make_rng

GENERIC_STEP_CAP = 10_000

RESIDUAL_MET = "residual_met"
N_MAX_REACHED = "n_max_reached"


@dataclass(frozen=True)
class Schedule:
    """Weights alpha_n in ``[lower, upper]`` with ``0 < lower <= upper < 1``."""

    kind: str = "constant"
    lower: float = 0.5
    upper: float = 0.5
    value: float = 0.5
    seed: int = 0
    table: tuple = ()

    def __post_init__(self):
        if not 0 < self.lower <= self.upper < 1:
            raise ConfigError(
                f"schedule bounds [{self.lower}, {self.upper}] must satisfy 0 < a <= b < 1 "
                "(alpha_n bounded away from 0 and 1)", key="schedule")
        if self.kind == "constant":
            if not self.lower <= self.value <= self.upper:
                raise ConfigError(f"constant value {self.value} outside [{self.lower}, {self.upper}]",
                                  key="schedule.value")
        elif self.kind == "tabulated":
            if not self.table:
                raise ConfigError("tabulated schedule needs a table", key="schedule.table")
            if any(not self.lower <= v <= self.upper for v in self.table):
                raise ConfigError("tabulated values must lie in [lower, upper]", key="schedule.table")
        elif self.kind != "seeded_uniform":
            raise ConfigError(f"unknown schedule kind {self.kind!r}", key="schedule.kind")

    def __call__(self, n):
        if self.kind == "constant":
            return self.value
        if self.kind == "tabulated":
            return self.table[(n - 1) % len(self.table)]
        # one independent stream per index keeps alpha_n order independent
        u = make_rng([self.seed, n]).random()
        return self.lower + (self.upper - self.lower) * u


def make_schedule(kind="constant", value=None, lower=None, upper=None, seed=0, table=()):
    """Build a :class:`Schedule`; missing bounds default to the tightest valid ones."""
    table = tuple(float(v) for v in table)
    if kind == "constant":
        if value is None:
            raise ConfigError("constant schedule needs a value", key="schedule.value")
        lower = value if lower is None else lower
        upper = value if upper is None else upper
    elif kind == "tabulated" and table:
        lower = min(table) if lower is None else lower
        upper = max(table) if upper is None else upper
    elif lower is None or upper is None:
        raise ConfigError(f"{kind} schedule needs lower and upper bounds", key="schedule")
    return Schedule(kind, float(lower), float(upper), float(value if value is not None else lower),
                    int(seed), table)


@dataclass
class IterationConfig:
    space: object
    family: list
    x1: object
    schedule: Schedule
    n_max: int = 1000
    residual_tol: float = 1e-10
    mode: str = "self"
    K: object = None
    reference: object = None
    fixed_set: FixedSet = None
    trace_intermediates: bool = False
    allow_long: bool = False

    def __post_init__(self):
        if not self.family:
            raise ConfigError("the family needs at least one mapping", key="mapping")
        if self.mode not in ("self", "nonself"):
            raise ConfigError(f"mode must be self or nonself, got {self.mode!r}", key="run.mode")
        if self.K is None:
            self.K = self.space.domain
        if not self.K.supports(self.space.point_kind):
            raise ConfigError(f"K of kind {self.K.kind!r} does not fit {self.space.kind}", key="domain.kind")
        for i, T in enumerate(self.family, 1):
            if T.space != self.space:
                raise ConfigError("mapping lives on a different space", key=f"mapping.{i}")
            if self.mode == "self" and not T.self_map:
                raise ConfigError("self mode needs self mappings", key=f"mapping.{i}")
            if self.mode == "self" and not T.domain.contains(self.space.check(self.x1), DOMAIN_TOL):
                raise ConfigError(f"x1 {self.x1.coords} is outside the domain of mapping {i}", key="run.x1")
        if self.n_max < 1:
            raise ConfigError("n_max must be >= 1", key="run.n_max")
        if not self.residual_tol > 0:
            raise ConfigError("residual_tol must be > 0", key="run.residual_tol")
        generic = any(not getattr(T, "closed_form", False) for T in self.family)
        if generic and self.n_max > GENERIC_STEP_CAP and not self.allow_long:
            raise ConfigError(
                f"n_max {self.n_max} exceeds {GENERIC_STEP_CAP} for mappings without closed-form "
                "powers (cost grows like n_max^2); set run.allow_long to override", key="run.n_max")
        self.space.check(self.x1)
        if not self.K.contains(self.x1, DOMAIN_TOL):
            raise ConfigError(f"x1 {self.x1.coords} is not in K", key="run.x1")

    @property
    def m(self):
        return len(self.family)


@dataclass
class Trace:
    """Per-step history of a run; row n-1 holds step n."""

    m: int
    points: list = field(default_factory=list)
    alphas: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    dist_p: list = None
    dist_F: list = None
    intermediates: list = None  # one entry per step taken: len(points) - 1
    stop_reason: str = None

    def __len__(self):
        return len(self.points)

    @property
    def last(self):
        return self.points[-1]


def _mapped(config, n, i, z):
    """Image of ``z`` under the n-th power of mapping ``i`` (1-based)."""
    T = config.family[i - 1]
    try:
        if config.mode == "self":
            out = T.power(n, z)
        else:
            out = apply_power_nonself(T, config.K, n, z)
    except DomainError as err:
        raise DomainError(str(err), step=n, mapping_index=i) from None
    if config.mode == "self" and not config.K.contains(out, DOMAIN_TOL):
        raise DomainError(f"image {out.coords} left K", step=n, mapping_index=i)
    return out


def _chain(config, n, x, nonself):
    W = config.space.combine
    P = config.K.project
    a = config.schedule(n)
    m = config.m
    z = x
    ys = []
    for i in range(m, 1, -1):
        z = W(x, _mapped(config, n, i, z), a)
        if nonself:
            z = P(z)
        elif not config.K.contains(z, DOMAIN_TOL):
            raise DomainError(f"y_{i - 1} left K", step=n, mapping_index=i)
        ys.append(z)
    nxt = W(x, _mapped(config, n, 1, z), a)
    if nonself:
        nxt = P(nxt)
    elif not config.K.contains(nxt, DOMAIN_TOL):
        raise DomainError(f"x_{n + 1} left K", step=n, mapping_index=1)
    ys.reverse()  # y_1 .. y_{m-1}
    return nxt, ys


def step(config, n, x_n):
    """One self-mode step: returns ``(x_{n+1}, [y_1n, ..., y_(m-1)n])``."""
    if n < 1:
        raise ValueError("steps are numbered from 1")
    return _chain(config, n, x_n, nonself=False)


def step_nonself(config, n, x_n):
    """One non-self step; the chain is seeded with ``x_n``."""
    if n < 1:
        raise ValueError("steps are numbered from 1")
    return _chain(config, n, x_n, nonself=True)


def residuals(config, x):
    d = config.space.dist
    return tuple(d(x, T._map(x)) for T in config.family)


def run(config):
    """Iterate from x1 until every residual ``d(x_n, T_i x_n)`` is below tolerance or n_max."""
    d = config.space.dist
    advance = step if config.mode == "self" else step_nonself
    trace = Trace(config.m)
    if config.reference is not None:
        trace.dist_p = []
    if config.fixed_set is not None:
        trace.dist_F = []
    if config.trace_intermediates:
        trace.intermediates = []

    x = config.x1
    for n in range(1, config.n_max + 1):
        res = residuals(config, x)
        trace.points.append(x)
        trace.alphas.append(config.schedule(n))
        trace.residuals.append(res)
        if trace.dist_p is not None:
            trace.dist_p.append(d(x, config.reference))
        if trace.dist_F is not None:
            trace.dist_F.append(dist_to_fixed_set(x, config.fixed_set, config.space))
        if max(res) < config.residual_tol:
            trace.stop_reason = RESIDUAL_MET
            break
        if n == config.n_max:
            trace.stop_reason = N_MAX_REACHED
            break
        x, ys = advance(config, n, x)
        if trace.intermediates is not None:
            trace.intermediates.append(ys)
    return trace
