"""Convergence diagnostics for iteration traces.

The limsup in the asymptotic radius ``r(x, {x_n}) = limsup d(x, x_n)`` is
approximated by a maximum over a trailing window of the sequence; the
asymptotic center is the minimizer of that radius over K, found by direct
search (Nelder-Mead on coordinate charts, an exact line minimization per
branch on the star tree).
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from tanfix.errors import ConfigError, DomainError
from tanfix.spaces import DISK, EUCLIDEAN, TREE, WHOLE_SPACE, Point

DEFAULT_TAIL_FRACTION = 0.25
MIN_TAIL = 10


# ---------------------------------------------------------------------------
# Fixed sets


@dataclass(frozen=True)
class FixedSet:
    """Description of a (common) fixed point set F.

    ``single_point`` / ``finite_list`` carry ``points``; ``interval_box``
    carries a Euclidean ``box`` (a ConvexSet of kind interval_box).
    """

    kind: str
    points: tuple = ()
    box: object = None

    def __post_init__(self):
        if self.kind in ("single_point", "finite_list"):
            if not self.points:
                raise ConfigError("fixed set needs at least one point", key="fixed_set.points")
            if self.kind == "single_point" and len(self.points) != 1:
                raise ConfigError("single_point fixed set takes exactly one point", key="fixed_set.points")
        elif self.kind == "interval_box":
            if self.box is None or self.box.kind != "interval_box":
                raise ConfigError("interval_box fixed set needs a box", key="fixed_set")
        else:
            raise ConfigError(f"unknown fixed set kind {self.kind!r}", key="fixed_set.kind")


def dist_to_fixed_set(x, F, space):
    """Exact distance from ``x`` to the described set F."""
    if F.kind == "interval_box":
        if space.point_kind != EUCLIDEAN:
            raise ConfigError("interval_box fixed sets live in euclidean spaces")
        return space.dist(x, F.box.project(x))
    return min(space.dist(x, p) for p in F.points)


# ---------------------------------------------------------------------------
# Asymptotic radius and center


@dataclass(frozen=True)
class TailSpec:
    """Subsequence ``points[offset::stride]`` restricted to its last ``window`` entries.

    ``window=None`` takes the last 25% of the subsequence (at least 10
    points, or all of them when fewer exist).
    """

    window: int = None
    stride: int = 1
    offset: int = 0

    def select(self, points):
        if self.stride < 1 or self.offset < 0:
            raise ConfigError("tail stride must be >= 1 and offset >= 0", key="analysis.subsequences")
        sub = list(points)[self.offset::self.stride]
        if not sub:
            raise ConfigError("tail selection is empty", key="analysis.window")
        if self.window is None:
            w = max(MIN_TAIL, math.ceil(DEFAULT_TAIL_FRACTION * len(sub)))
            return sub[-w:]
        if not 1 <= self.window <= len(sub):
            raise ConfigError(f"tail window {self.window} does not fit {len(sub)} points",
                              key="analysis.window")
        return sub[-self.window:]


DEFAULT_TAIL = TailSpec()
DEFAULT_SUBSEQUENCES = (TailSpec(stride=2, offset=1), TailSpec(stride=2, offset=0), TailSpec(stride=3))


def asymptotic_radius(space, x, points, tail=DEFAULT_TAIL):
    """Maximum of ``d(x, x_k)`` over the tail selection."""
    sel = tail.select(points)
    return max(space.dist(x, p) for p in sel)


@dataclass
class CenterResult:
    center: Point
    radius: float
    search_evals: int
    converged: bool


def _chart(space, K):
    """Coordinate chart ``R^d -> K`` plus a penalty for leaving K.

    Points outside K are retracted; the penalty ``|z - chart(z)|`` keeps
    the minimizer inside.
    """
    if space.point_kind == EUCLIDEAN:
        def to_point(z):
            p = Point(EUCLIDEAN, tuple(z))
            q = K.project(p)
            return q, math.dist(p.coords, q.coords)
        return to_point
    rmax = K.radius if K.kind == "disk_ball" else 1.0 - 1e-9

    def to_disk(z):
        r = math.hypot(z[0], z[1])
        if r <= rmax:
            return Point(DISK, (float(z[0]), float(z[1]))), 0.0
        s = rmax / r
        return Point(DISK, (z[0] * s, z[1] * s)), r - rmax
    return to_disk


def asymptotic_center(space, points, K=WHOLE_SPACE, tail=DEFAULT_TAIL, tol=1e-6, budget=10_000):
    """Minimize the asymptotic radius over K.

    Returns the best point found; ``converged`` is False when the
    evaluation budget ran out before the search tolerance was reached.
    """
    sel = tail.select(points)
    if not K.supports(space.point_kind):
        raise ConfigError(f"K of kind {K.kind!r} does not fit {space.kind}")
    d = space.dist

    def radius(x):
        return max(d(x, p) for p in sel)

    if space.point_kind == TREE:
        return _tree_center(space, sel, K, radius, tol, budget)

    chart = _chart(space, K)
    evals = 0

    def objective(z):
        nonlocal evals
        evals += 1
        q, pen = chart(z)
        return radius(q) + pen

    # start from the best of the tail points and their coordinate mean
    starts = [np.array(p.coords) for p in sel]
    starts.append(np.mean(starts, axis=0))
    vals = [objective(z) for z in starts]
    z0 = starts[int(np.argmin(vals))]
    best_z, best_f = z0, min(vals)
    spread = max(math.dist(p.coords, z0) for p in sel)
    scale = spread if spread > 0 else 0.0
    converged = scale == 0.0

    while not converged and evals < budget:
        dim = len(best_z)
        simplex = np.vstack([best_z] + [best_z + scale * e for e in np.eye(dim)])
        res = minimize(objective, best_z, method="Nelder-Mead",
                       options=dict(initial_simplex=simplex, xatol=tol, fatol=0.0,
                                    maxfev=max(1, budget - evals)))
        improved = res.fun < best_f - 1e-15
        if res.fun <= best_f:
            best_z, best_f = res.x, res.fun
        sim = res.final_simplex[0]
        diam = max(np.linalg.norm(a - b) for a in sim for b in sim)
        # a restart that finds nothing new confirms the minimizer
        converged = diam < tol and not improved
        scale = max(10 * diam, tol)

    center, _ = chart(best_z)
    return CenterResult(center, radius(center), evals, converged)


def _tree_center(space, sel, K, radius, tol, budget):
    """Exact branch-by-branch minimization.

    On branch b the radius is ``max(r + c_b, s_b - r)``, with ``s_b`` the
    largest radius on b and ``c_b`` the largest radius elsewhere (or minus
    the smallest radius on b), so the minimizer along the branch is
    ``(s_b - c_b) / 2`` clipped to ``[0, R]``.
    """
    R = K.radius if K.kind == "tree_ball" else math.inf
    root = Point(TREE, (0, 0.0))
    best = (radius(root), root)
    evals = 1
    for b in range(space.branches):
        same = [p[1] for p in sel if p[0] == b and p[1] > 0]
        if not same:
            continue
        other = [p[1] for p in sel if not (p[0] == b and p[1] > 0)]
        c = max(max(other, default=-math.inf), -min(same))
        r = min(max(0.5 * (max(same) - c), 0.0), R)
        x = space.point((b, r))
        f = radius(x)
        evals += 1
        if f < best[0]:
            best = (f, x)
    return CenterResult(best[1], best[0], evals, True)


def _points_of(trace_or_points):
    return getattr(trace_or_points, "points", trace_or_points)


def delta_converged(space, trace, K=WHOLE_SPACE, subsequences=DEFAULT_SUBSEQUENCES, tol=1e-4, search=None):
    """Compare asymptotic centers of several subsequences.

    Returns ``(agree, centers)``; ``agree`` is True iff every pairwise
    distance between the centers is at most ``tol``.  ``search`` holds
    keyword options for :func:`asymptotic_center`.
    """
    if len(subsequences) < 2:
        raise ConfigError("delta detection needs at least two subsequences", key="analysis.subsequences")
    pts = _points_of(trace)
    centers = [asymptotic_center(space, pts, K, spec, **(search or {})) for spec in subsequences]
    spread = max((space.dist(a.center, b.center) for a in centers for b in centers), default=0.0)
    return spread <= tol, centers


# ---------------------------------------------------------------------------
# Sequence inequalities


@dataclass
class RecursionReport:
    """Result of checking ``a_{n+1} <= (1 + b_n) a_n + c_n`` and tail convergence.

    ``first_violation`` is the 1-based n of the first failing inequality.
    """

    first_violation: int
    max_violation: float
    tail_oscillation: float
    tol: float
    cauchy_tol: float

    @property
    def passed(self):
        return self.first_violation is None and self.tail_oscillation <= self.cauchy_tol


def check_recursive_inequality(a, b, c, tol, cauchy_tol=None, tail_fraction=DEFAULT_TAIL_FRACTION):
    a, b, c = (np.asarray(v, dtype=float) for v in (a, b, c))
    if not len(a) == len(b) == len(c) or len(a) < 2:
        raise ConfigError("a, b, c must have equal length >= 2")
    if np.any(b < 0) or np.any(c < 0):
        raise ConfigError("b and c must be nonnegative")
    gap = a[1:] - ((1.0 + b[:-1]) * a[:-1] + c[:-1])
    bad = np.flatnonzero(gap > tol)
    w = max(2, math.ceil(tail_fraction * len(a)))
    tail = a[-w:]
    return RecursionReport(
        first_violation=int(bad[0]) + 1 if bad.size else None,
        max_violation=float(gap.max()),
        tail_oscillation=float(tail.max() - tail.min()),
        tol=tol,
        cauchy_tol=tol if cauchy_tol is None else cauchy_tol,
    )


def envelope_constant(seqs, n_terms):
    """Constant ``a`` of the envelope ``d(x_{n+1},p) <= (1 + a sum k) d(x_n,p) + a sum (k + phi)``.

    Unrolling the chain with ``xi(r) <= xi(M) + M* r`` gives the bound
    ``prod_i (1 + c_i k_i) d + prod_i (1 + c_i k_i) sum_i c_i (k_i + phi_i)``
    with ``c_i = max(1, M*_i, xi_i(M_i))``; the stated ``a`` dominates it for
    every n up to ``n_terms``.
    """
    c = [max(1.0, s.M_star, s.xi(s.M)) for s in seqs]
    kmax = [max(s.k(n) for n in range(1, n_terms + 1)) for s in seqs]
    return max(c) * math.prod(1.0 + ci * ki for ci, ki in zip(c, kmax))


def fejer_check(space, trace, p, seqs, a=None):
    """Largest excess of ``d(x_{n+1}, p)`` over the envelope along a trace.

    A value ``<= tolerance`` means the envelope held at every step.
    """
    if seqs is None or not len(seqs):
        raise ConfigError("fejer_check needs the family's TAN constants")
    pts = _points_of(trace)
    if len(pts) < 2:
        return float("-inf")
    if a is None:
        a = envelope_constant(seqs, len(pts))
    dist = [space.dist(x, p) for x in pts]
    worst = float("-inf")
    for n in range(1, len(pts)):
        ks = sum(s.k(n) for s in seqs)
        kp = sum(s.k(n) + s.phi(n) for s in seqs)
        worst = max(worst, dist[n] - (1.0 + a * ks) * dist[n - 1] - a * kp)
    return worst


# ---------------------------------------------------------------------------
# Orbit probe and classification


@dataclass
class ProbeResult:
    center: Point
    radius: float
    residual: float
    orbit_length: int
    converged: bool


def orbit_center_probe(T, x, N, K=WHOLE_SPACE, tail=DEFAULT_TAIL, bound=1e6, **search):
    """Asymptotic center z of the orbit ``{T^n x}`` (n <= N) and its residual ``d(z, T z)``."""
    space = T.space
    orbit = []
    y = x
    T.apply(x)  # domain check on the start point
    for n in range(1, N + 1):
        y = T._map(y)
        if space.dist(y, x) > bound:
            raise DomainError(f"orbit left the ball of radius {bound} around x", step=n)
        orbit.append(y)
    res = asymptotic_center(space, orbit, K, tail, **search)
    z = res.center
    return ProbeResult(z, res.radius, space.dist(z, T._map(z)), N, res.converged)


@dataclass
class ConvergenceReport:
    classification: str
    first_residual: float
    last_residual: float
    fejer_max_violation: float = None
    centers: list = field(default_factory=list)
    center_spread: float = None
    min_dist_F: float = None
    criterion_step: int = None
    delta: bool = False

    def lines(self):
        yield f"classification: {self.classification}"
        yield f"max residual: first {self.first_residual:.6e}, last {self.last_residual:.6e}"
        if self.fejer_max_violation is not None:
            yield f"fejer envelope max violation: {self.fejer_max_violation:.6e}"
        for i, c in enumerate(self.centers, 1):
            yield f"subsequence {i} center: {c.center.coords} radius {c.radius:.6e}"
        if self.center_spread is not None:
            yield f"delta verdict: {self.delta} (max pairwise center distance {self.center_spread:.6e})"
        if self.min_dist_F is not None:
            yield f"min d(x_n, F): {self.min_dist_F:.6e} at step {self.criterion_step}"


def classify(space, trace, K=WHOLE_SPACE, subsequences=DEFAULT_SUBSEQUENCES, delta_tol=1e-4,
             strong_tol=1e-6, seqs=None, reference=None, search=None):
    """Summarize a trace: ``strong`` if the minimum recorded ``d(x_n, F)`` is
    below ``strong_tol``, else ``delta`` if subsequence centers agree, else
    ``undetermined``.
    """
    res = [max(r) for r in trace.residuals]
    agree, centers = delta_converged(space, trace, K, subsequences, delta_tol, search)
    spread = max(space.dist(a.center, b.center) for a in centers for b in centers)
    rep = ConvergenceReport("undetermined", res[0], res[-1], centers=centers, center_spread=spread, delta=agree)
    if reference is not None and seqs is not None:
        rep.fejer_max_violation = fejer_check(space, trace, reference, seqs)
    if trace.dist_F:
        i = int(np.argmin(trace.dist_F))
        rep.min_dist_F = trace.dist_F[i]
        rep.criterion_step = i + 1
    if rep.min_dist_F is not None and rep.min_dist_F < strong_tol:
        rep.classification = "strong"
    elif agree:
        rep.classification = "delta"
    return rep
