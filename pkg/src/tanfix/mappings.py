"""Total asymptotically nonexpansive (TAN) mappings.

A mapping T on K is TAN with data ``(k_n, phi_n, xi)`` when

    d(T^n x, T^n y) <= d(x, y) + k_n * xi(d(x, y)) + phi_n

for all x, y in K and n >= 1.  Non-self mappings ``T: K -> X`` replace
``T^n`` by ``T (P T)^(n-1)`` with P the retraction onto K.
"""

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from tanfix.errors import ConfigError, DomainError
from tanfix.spaces import (
    EUCLIDEAN,
    WHOLE_SPACE,
    ConvexSet,
    EuclideanSpace,
    Point,
    ball,
    interval,
    make_rng,
)

DOMAIN_TOL = 1e-12
DEFECT_TOL = 1e-9
SKIP_DIST = 1e-8


# ---------------------------------------------------------------------------
# TAN data


@dataclass(frozen=True)
class Seq:
    """Nonnegative real sequence indexed from 1.

    ``zero``: 0; ``geometric``: scale * ratio**n; ``power``: scale / n**ratio;
    ``tabulated``: values[n-1], 0 beyond the table.
    """

    kind: str = "zero"
    scale: float = 0.0
    ratio: float = 0.0
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in ("zero", "geometric", "power", "tabulated"):
            raise ConfigError(f"unknown sequence kind {self.kind!r}")
        if self.scale < 0 or any(v < 0 for v in self.values):
            raise ConfigError("TAN sequences must be nonnegative")
        if self.kind == "geometric" and not 0 <= self.ratio < 1:
            raise ConfigError("geometric sequence needs ratio in [0, 1)")

    def __call__(self, n):
        if n < 1:
            raise ValueError("sequences are indexed from 1")
        if self.kind == "zero":
            return 0.0
        if self.kind == "geometric":
            return self.scale * self.ratio**n
        if self.kind == "power":
            return self.scale / n**self.ratio
        return self.values[n - 1] if n <= len(self.values) else 0.0

    def prefix(self, n):
        return np.array([self(i) for i in range(1, n + 1)])


ZERO = Seq()


@dataclass(frozen=True)
class ScalingFunction:
    """Strictly increasing xi with xi(0) = 0.

    ``identity``; ``affine_capped``: slope * lam up to ``cap``, then
    ``tail_slope`` beyond it; ``tabulated``: piecewise linear through
    ``(knots, values)`` (first knot 0), extended with the last slope.
    """

    kind: str = "identity"
    slope: float = 1.0
    cap: float = 1.0
    tail_slope: float = 1.0
    knots: tuple = ()
    values: tuple = ()

    def __call__(self, lam):
        if self.kind == "identity":
            return lam
        if self.kind == "affine_capped":
            if lam <= self.cap:
                return self.slope * lam
            return self.slope * self.cap + self.tail_slope * (lam - self.cap)
        if self.kind == "tabulated":
            k, v = self.knots, self.values
            if lam <= k[-1]:
                return float(np.interp(lam, k, v))
            return v[-1] + (v[-1] - v[-2]) / (k[-1] - k[-2]) * (lam - k[-1])
        raise ConfigError(f"unknown scaling function kind {self.kind!r}")


@dataclass(frozen=True)
class TanSequences:
    k: Seq = ZERO
    phi: Seq = ZERO
    xi: ScalingFunction = field(default_factory=ScalingFunction)
    M: float = 1.0
    M_star: float = 1.0

    def problems(self, n_terms, probe=None):
        """Return a list of violated invariants on the first ``n_terms`` terms.

        Empty list means: k, phi decay and plateau (summability guard),
        xi is strictly increasing with xi(0) = 0 and xi(lam) <= M* lam
        for lam >= M on the probe grid.
        """
        out = []
        if not (self.M > 0 and self.M_star > 0):
            out.append("M and M_star must be positive")
        for name, seq in (("k", self.k), ("phi", self.phi)):
            if not summable_prefix(seq, n_terms):
                out.append(f"{name}: partial sums do not plateau over the last 10% of {n_terms} terms")
        grid = probe if probe is not None else np.linspace(0.0, 10.0 * max(self.M, 1.0), 201)
        vals = np.array([self.xi(float(g)) for g in grid])
        if abs(self.xi(0.0)) > 0:
            out.append("xi(0) != 0")
        if np.any(np.diff(vals) <= 0):
            out.append("xi is not strictly increasing")
        big = grid >= self.M
        if np.any(vals[big] > self.M_star * grid[big] + 1e-12):
            out.append("xi(lam) > M_star * lam for some lam >= M")
        return out


def summable_prefix(seq, n_terms, plateau=1e-10):
    """Partial sums grow by less than ``plateau`` over the last 10% of terms."""
    vals = seq.prefix(n_terms)
    tail = vals[n_terms - max(1, n_terms // 10):]
    return float(tail.sum()) < plateau


# ---------------------------------------------------------------------------
# Mappings


class TanMapping:
    """A mapping of a geodesic space together with its TAN data.

    Subclasses implement ``_map`` (one application, no domain checks) and
    optionally ``_power`` (closed-form n-th iterate).
    """

    kind = None
    closed_form = False

    def __init__(self, space, domain=None, seq=None, self_map=True, verified=True):
        self.space = space
        self.domain = space.domain if domain is None else domain
        if not self.domain.supports(space.point_kind):
            raise ConfigError(f"mapping domain {self.domain.kind!r} does not fit {space.kind}")
        self.seq = TanSequences() if seq is None else seq
        self.self_map = self_map
        self.verified = verified

    def __repr__(self):
        return f"{type(self).__name__}({self.params()})"

    def params(self):
        return {}

    def _map(self, x):
        raise NotImplementedError

    def _power(self, n, x):
        for _ in range(n):
            x = self._map(x)
        return x

    def _check_in(self, x):
        self.space.check(x)
        if not self.domain.contains(x, DOMAIN_TOL):
            raise DomainError(f"{self.kind}: point {x.coords} is outside its domain")

    def apply(self, x):
        self._check_in(x)
        return self._map(x)

    def power(self, n, x):
        if n < 1:
            raise ValueError("power exponent must be >= 1")
        self._check_in(x)
        return self._power(n, x)

    def iterate(self, n, x, P=None):
        """``T^n x`` for self maps, ``T (P T)^(n-1) x`` otherwise."""
        if self.self_map:
            return self.power(n, x)
        return apply_power_nonself(self, self.domain if P is None else P, n, x)

    @property
    def fixed_point(self):
        """A known fixed point, or None."""
        return None


def apply(T, x):
    return T.apply(x)


def apply_power_self(T, n, x):
    return T.power(n, x)


def apply_power_nonself(T, P, n, x):
    """Compute ``T (P T)^(n-1) x``; every projected point is asserted in K."""
    if n < 1:
        raise ValueError("power exponent must be >= 1")
    if not isinstance(P, ConvexSet):
        raise ConfigError("nonself power needs a ConvexSet retraction")
    if not P.supports(x.kind):
        raise ConfigError(f"retraction {P.kind!r} is not defined on {x.kind} points")
    if not P.contains(T.space.check(x), DOMAIN_TOL):
        raise DomainError(f"nonself power: start point {x.coords} is outside K")
    y = T._map(x)
    for _ in range(n - 1):
        y = P.project(y)
        if not P.contains(y, DOMAIN_TOL):
            raise DomainError("retraction left K")
        y = T._map(y)
    return y


def tan_defect(T, x, y, n, P=None):
    """``d(T^n x, T^n y) - d(x, y) - k_n xi(d(x, y)) - phi_n``.

    Nonpositive (up to rounding) exactly when the TAN inequality holds at
    ``(x, y, n)`` with the declared constants.
    """
    d = T.space.dist
    dxy = d(x, y)
    s = T.seq
    return d(T.iterate(n, x, P), T.iterate(n, y, P)) - dxy - s.k(n) * s.xi(dxy) - s.phi(n)


class SinMap(TanMapping):
    """``T x = sin x`` on a subset of R; nonexpansive.

    The default domain is ``[0, pi]``, which sin maps into ``[0, 1]``.  On
    ``[0, inf)`` sin is not a self-map (``sin 4 < 0``), although every orbit
    started in ``[0, pi]`` stays there.
    """

    kind = "sin_map"

    def __init__(self, space=None, domain=None, **kw):
        space = EuclideanSpace(dimension=1) if space is None else space
        _need_dim(space, 1, self.kind)
        if domain is None:
            domain = interval(0.0, math.pi) if space.domain.kind == "whole_space" else space.domain
        super().__init__(space, domain, **kw)

    def _map(self, x):
        return Point(EUCLIDEAN, (math.sin(x[0]),))

    @property
    def fixed_point(self):
        return Point(EUCLIDEAN, (0.0,))


class XSinInv(TanMapping):
    """``T x = k x sin(1/x)`` with ``T 0 = 0`` on ``[-1/pi, 1/pi]``.

    Not Lipschitz near 0, but ``|T^n x| <= k^n |x|`` gives the TAN data
    ``k_n = 0``, ``phi_n = 2 R k^n`` with R the largest ``|x|`` in K.
    """

    kind = "xsin_inv"

    def __init__(self, k=0.5, space=None, domain=None, seq=None, **kw):
        if not 0 < k < 1:
            raise ConfigError(f"xsin_inv needs k in (0, 1), got {k}")
        space = EuclideanSpace(dimension=1) if space is None else space
        _need_dim(space, 1, self.kind)
        if domain is None:
            domain = interval(-1 / math.pi, 1 / math.pi) if space.domain.kind == "whole_space" else space.domain
        if not domain.bounded:
            raise ConfigError("xsin_inv needs a bounded domain")
        self.k = k
        if seq is None:
            R = max(abs(domain.lower[0]), abs(domain.upper[0])) if domain.kind == "interval_box" else (
                abs(domain.center[0]) + domain.radius)
            seq = TanSequences(phi=Seq("geometric", scale=2.0 * R, ratio=k))
        super().__init__(space, domain, seq, **kw)

    def params(self):
        return {"k": self.k}

    def _map(self, x):
        v = x[0]
        inv = 1.0 / v if v != 0.0 else math.inf
        if math.isinf(inv):
            # removable singularity; |T x| <= k |x| also covers subnormal x
            return Point(EUCLIDEAN, (0.0,))
        return Point(EUCLIDEAN, (self.k * v * math.sin(inv),))

    @property
    def fixed_point(self):
        return Point(EUCLIDEAN, (0.0,))


class ShiftScale4(TanMapping):
    """``T x = (0, c x_2, 0, ..., 0)`` with c = 4 by default.

    Powers grow like ``c^n`` along the second coordinate, so the literal map
    is not TAN with vanishing constants; it ships unverified, as a test case
    for the defect evaluation.
    """

    kind = "shift_scale4"
    closed_form = True

    def __init__(self, space, domain=None, coefficient=4.0, seq=None, verified=False, **kw):
        if space.point_kind != EUCLIDEAN or space.dimension < 2:
            raise ConfigError("shift_scale4 needs a euclidean space of dimension >= 2")
        self.coefficient = coefficient
        super().__init__(space, domain, seq, verified=verified, **kw)

    def params(self):
        return {"coefficient": self.coefficient}

    def _map(self, x):
        return self._power(1, x)

    def _power(self, n, x):
        out = [0.0] * len(x)
        out[1] = self.coefficient**n * x[1]
        return Point(EUCLIDEAN, tuple(out))

    @property
    def fixed_point(self):
        return Point(EUCLIDEAN, (0.0,) * self.space.dimension)


class GoebelKirkTruncated(TanMapping):
    """``T x = (0, x_1^2, a_2 x_2, ..., a_{d-1} x_{d-1})`` on the unit ball of R^d.

    Default coefficients are equal with product 1/2.  The declared ``k_n``
    are empirical: ``max(0, L_n - 1)`` from :func:`estimate_constants`.
    """

    kind = "goebel_kirk_truncated"
    closed_form = True

    def __init__(self, space=None, coefficients=None, domain=None, seq=None, estimate_seed=0,
                 estimate_samples=1000, **kw):
        space = EuclideanSpace(dimension=8) if space is None else space
        if space.point_kind != EUCLIDEAN or space.dimension < 3:
            raise ConfigError("goebel_kirk_truncated needs a euclidean space of dimension >= 3")
        d = space.dimension
        if coefficients is None:
            coefficients = (0.5 ** (1.0 / (d - 2)),) * (d - 2)
        coefficients = tuple(float(a) for a in coefficients)
        if len(coefficients) != d - 2 or not all(0 < a < 1 for a in coefficients):
            raise ConfigError(f"goebel_kirk_truncated needs {d - 2} coefficients in (0, 1)")
        self.coefficients = coefficients
        if domain is None:
            domain = ball((0.0,) * d, 1.0)
        super().__init__(space, domain, seq or TanSequences(), **kw)
        if seq is None:
            est = _goebel_estimate(d, coefficients, domain, estimate_seed, estimate_samples)
            self.seq = TanSequences(k=Seq("tabulated", values=tuple(est.k_hat)))

    def params(self):
        return {"coefficients": self.coefficients}

    def _map(self, x):
        c = x.coords
        out = (0.0, c[0] * c[0]) + tuple(a * v for a, v in zip(self.coefficients, c[1:-1]))
        return Point(EUCLIDEAN, out)

    def _power(self, n, x):
        for _ in range(min(n, len(x))):
            x = self._map(x)
        if n >= len(x):
            # everything has been shifted out of the truncation
            return Point(EUCLIDEAN, (0.0,) * len(x))
        return x

    def lipschitz_bound(self, n):
        """Exact Lipschitz constant of ``T^n`` on the unit ball."""
        d = len(self.coefficients) + 2
        a = (None, None) + self.coefficients  # a[i] multiplies x_i (1-based)
        best = 0.0
        if n + 1 <= d:
            best = 2.0 * math.prod(a[2:n + 1])
        for j in range(2, d + 1):
            if j + n <= d:
                best = max(best, math.prod(a[j:j + n]))
        return best

    @property
    def fixed_point(self):
        return Point(EUCLIDEAN, (0.0,) * self.space.dimension)


@functools.lru_cache(maxsize=16)
def _goebel_estimate(d, coefficients, domain, seed, samples):
    probe = GoebelKirkTruncated(EuclideanSpace(dimension=d), coefficients, domain,
                                seq=TanSequences(), verified=False)
    return estimate_constants(probe, n_max=2 * d, sample_count=samples, seed=seed)


class AffineContraction(TanMapping):
    """``T x = c + f (x - c)``.

    In R^d any factor with ``|f| < 1`` is allowed; on the disk and the tree
    the map is ``W(c, x, f)`` and needs ``0 <= f < 1``.
    """

    kind = "affine_contraction"
    closed_form = True

    def __init__(self, space, factor=0.5, center=None, domain=None, **kw):
        euclidean = space.point_kind == EUCLIDEAN
        if not (-1 < factor < 1 if euclidean else 0 <= factor < 1):
            raise ConfigError(f"affine_contraction factor {factor} out of range")
        self.factor = factor
        if center is None:
            center = space.point((0.0,) * space.dimension) if euclidean else space.point((0, 0.0))
        self.center = space.check(center)
        super().__init__(space, domain, **kw)

    def params(self):
        return {"factor": self.factor, "center": self.center.coords}

    def _map(self, x):
        return self._power(1, x)

    def _power(self, n, x):
        f = self.factor**n
        if self.space.point_kind == EUCLIDEAN:
            return Point(EUCLIDEAN, tuple(c + f * (v - c) for v, c in zip(x, self.center)))
        return self.space.combine(self.center, x, f)

    @property
    def fixed_point(self):
        return self.center


class ConstantMap(TanMapping):
    kind = "constant_map"
    closed_form = True

    def __init__(self, space, value, domain=None, **kw):
        self.value = space.check(value)
        super().__init__(space, domain, **kw)

    def params(self):
        return {"value": self.value.coords}

    def _map(self, x):
        return self.value

    def _power(self, n, x):
        return self.value

    @property
    def fixed_point(self):
        return self.value


class Rotation(TanMapping):
    """Rotation of R^2 by ``angle`` radians about ``center``; an isometry."""

    kind = "rotation"
    closed_form = True

    def __init__(self, space, angle=1.0, center=(0.0, 0.0), domain=None, **kw):
        if space.point_kind != EUCLIDEAN or space.dimension != 2:
            raise ConfigError("rotation needs euclidean dimension 2")
        self.angle = angle
        self.center = tuple(float(c) for c in center)
        super().__init__(space, domain, **kw)

    def params(self):
        return {"angle": self.angle, "center": self.center}

    def _map(self, x):
        return self._power(1, x)

    def _power(self, n, x):
        a = math.fmod(n * self.angle, 2 * math.pi)
        c, s = math.cos(a), math.sin(a)
        cx, cy = self.center
        u, v = x[0] - cx, x[1] - cy
        return Point(EUCLIDEAN, (cx + c * u - s * v, cy + s * u + c * v))

    @property
    def fixed_point(self):
        return Point(EUCLIDEAN, self.center)


class Identity(TanMapping):
    kind = "identity"
    closed_form = True

    def _map(self, x):
        return x

    def _power(self, n, x):
        return x


class Composition(TanMapping):
    """``parts[-1] o ... o parts[0]``: the first part is applied first.

    Verified with zero constants only when every part is verified with
    zero constants (a composition of nonexpansive maps is nonexpansive).
    """

    kind = "user_composition"

    def __init__(self, parts, domain=None, **kw):
        if not parts:
            raise ConfigError("user_composition needs at least one part")
        space = parts[0].space
        if any(p.space != space for p in parts):
            raise ConfigError("user_composition parts must share one space")
        self.parts = tuple(parts)
        nonexp = all(p.verified and p.seq.k == ZERO and p.seq.phi == ZERO for p in parts)
        kw.setdefault("verified", nonexp)
        super().__init__(space, domain, **kw)

    def params(self):
        return {"parts": [p.kind for p in self.parts]}

    def _map(self, x):
        for p in self.parts:
            x = p._map(x)
        return x


def _need_dim(space, d, kind):
    if space.point_kind != EUCLIDEAN or space.dimension != d:
        raise ConfigError(f"{kind} needs euclidean dimension {d}")


MAPPING_KINDS = {
    cls.kind: cls
    for cls in (SinMap, XSinInv, ShiftScale4, GoebelKirkTruncated, AffineContraction,
                ConstantMap, Rotation, Identity, Composition)
}


# ---------------------------------------------------------------------------
# Validation and empirical constants


def validate_mapping(T, sample_count=64, n_max=5, seed=0, radius=1.0):
    """Sampling checks run when a mapping is built from configuration.

    Verified self maps must send sampled domain points into the domain, and
    every verified mapping must satisfy its declared TAN inequality on
    sampled pairs.  Unverified mappings are not checked.
    """
    if not T.verified:
        return
    rng = make_rng(seed)
    pts = [T.space.sample(rng, T.domain, radius) for _ in range(2 * sample_count)]
    if T.self_map:
        for x in pts:
            if not T.domain.contains(T._map(x), DOMAIN_TOL):
                raise ConfigError(f"{T.kind} does not map its domain into itself (image of {x.coords})")
    for x, y in zip(pts[::2], pts[1::2]):
        for n in range(1, n_max + 1):
            v = tan_defect(T, x, y, n)
            if v > DEFECT_TOL:
                raise ConfigError(f"{T.kind}: declared TAN constants violated at n={n} (defect {v:.3e})")


@dataclass
class EstimateReport:
    """Empirical Lipschitz constants ``L_n`` of ``T^n`` and ``k_n = max(0, L_n - 1)``."""

    kind: str
    lipschitz: list
    k_hat: list
    samples: int
    seed: int
    skipped: int = 0

    @property
    def n_max(self):
        return len(self.lipschitz)


def estimate_constants(T, n_max, sample_count, seed, refine=True, refine_steps=60):
    """Sample ``d(T^n x, T^n y) / d(x, y)`` over pairs in the (bounded) domain.

    Valid for ``xi = identity`` and ``phi_n = 0``.  With ``refine`` the best
    pairs of each power are improved by a compass search with shrinking
    steps (Euclidean spaces only), which tightens the estimate toward the true
    supremum without ever exceeding it.
    """
    if n_max < 1:
        raise ConfigError("n_max must be >= 1")
    if not T.domain.bounded:
        raise ConfigError(f"{T.kind}: estimate_constants needs a bounded domain")
    space, K = T.space, T.domain
    d = space.dist

    def ratio(n, x, y):
        dxy = d(x, y)
        if dxy < SKIP_DIST:
            return None
        return d(T.iterate(n, x), T.iterate(n, y)) / dxy

    rng = make_rng(seed)
    pairs = [(space.sample(rng, K), space.sample(rng, K)) for _ in range(sample_count)]
    L = []
    skipped = 0
    carry = None
    for n in range(1, n_max + 1):
        scored = []
        for x, y in pairs:
            r = ratio(n, x, y)
            if r is None:
                skipped += 1
                continue
            scored.append((r, x, y))
        scored.sort(key=lambda s: s[0], reverse=True)
        best = scored[0][0] if scored else 0.0
        if refine and space.point_kind == EUCLIDEAN and scored:
            local = make_rng([seed, n])
            starts = [(x, y) for _, x, y in scored[:3]]
            if carry is not None:
                # the maximizer for n - 1 is a good start for n
                starts.append(carry)
            top = (best, None)
            for x, y in starts:
                r0 = ratio(n, x, y)
                r, pair = _refine_pair(ratio, n, x, y, -1.0 if r0 is None else r0, K, local, refine_steps)
                if r > top[0] or top[1] is None:
                    top = (max(r, top[0]), pair)
            best, carry = top
        L.append(float(best))
    return EstimateReport(T.kind, L, [max(0.0, v - 1.0) for v in L], sample_count, seed, skipped)


def _refine_pair(ratio, n, x, y, r0, K, rng, steps):
    """Compass search on the pair ``(x, y)`` maximizing the power's slope."""
    z = np.concatenate([x.coords, y.coords])
    d = len(x)
    step = 0.25
    best = r0

    def score(v):
        xn = K.project(Point(EUCLIDEAN, tuple(v[:d])))
        yn = K.project(Point(EUCLIDEAN, tuple(v[d:])))
        r = ratio(n, xn, yn)
        return (-1.0 if r is None else r), np.concatenate([xn.coords, yn.coords])

    for _ in range(steps):
        improved = False
        for i in rng.permutation(2 * d):
            for sign in (1.0, -1.0):
                trial = z.copy()
                trial[i] += sign * step
                r, proj = score(trial)
                if r > best:
                    best, z, improved = r, proj, True
                    break
        if not improved:
            step *= 0.5
            if step < 1e-6:
                break
    return best, (Point(EUCLIDEAN, tuple(z[:d])), Point(EUCLIDEAN, tuple(z[d:])))
