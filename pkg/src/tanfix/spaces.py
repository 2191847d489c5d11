"""Geodesic spaces with a convexity map W.

Three concrete spaces are provided:

* ``EuclideanSpace`` -- R^d with W(x, y, t) = (1 - t) x + t y.
* ``PoincareDisk`` -- the open unit disk with the Kobayashi distance
  ``arctanh(sqrt(1 - sigma(x, y)))``.  For real points this is the
  Beltrami-Klein model of the hyperbolic plane, so geodesics are straight
  chords traversed at hyperbolic unit speed.
* ``StarTree`` -- finitely many half-lines glued at a common root.

Everywhere in this package the weight ``t`` of ``combine(x, y, t)`` attaches
to the *second* argument: ``d(x, combine(x, y, t)) = t * d(x, y)``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from tanfix.errors import ConfigError, DomainError

DISK_MARGIN = 1e-12

EUCLIDEAN = "euclidean"
DISK = "disk"
TREE = "tree"


@dataclass(frozen=True)
class Point:
    """Tagged point of one of the built-in spaces.

    ``coords`` holds the payload: the coordinate vector for ``euclidean``,
    ``(u, v)`` for ``disk`` and ``(branch, radius)`` for ``tree``.
    """

    kind: str
    coords: tuple

    def __post_init__(self):
        if self.kind == TREE:
            branch, radius = self.coords
            if radius < 0:
                raise DomainError(f"tree radius must be >= 0, got {radius}")
            if radius == 0:
                # every branch root is the same point
                object.__setattr__(self, "coords", (0, 0.0))
            else:
                object.__setattr__(self, "coords", (int(branch), float(radius)))
        elif self.kind == DISK:
            u, v = self.coords
            if u * u + v * v > 1.0 - DISK_MARGIN:
                raise DomainError(f"disk point ({u}, {v}) is not inside the open unit disk")
            object.__setattr__(self, "coords", (float(u), float(v)))
        elif self.kind == EUCLIDEAN:
            object.__setattr__(self, "coords", tuple(float(c) for c in self.coords))
        else:
            raise ConfigError(f"unknown point kind {self.kind!r}")

    def __iter__(self):
        return iter(self.coords)

    def __len__(self):
        return len(self.coords)

    def __getitem__(self, i):
        return self.coords[i]


def euclid(*coords):
    if len(coords) == 1 and not isinstance(coords[0], (int, float)):
        coords = tuple(coords[0])
    return Point(EUCLIDEAN, tuple(coords))


def disk(u, v):
    return Point(DISK, (u, v))


def tree(branch, radius):
    return Point(TREE, (branch, radius))


# ---------------------------------------------------------------------------
# Convex subsets


@dataclass(frozen=True)
class ConvexSet:
    """Closed convex subset K together with its nonexpansive retraction.

    kinds:
      ``whole_space``  -- the ambient space itself
      ``interval_box`` -- ``lower <= x <= upper`` coordinatewise (Euclidean);
                          bounds may be infinite
      ``closed_ball``  -- Euclidean ball ``|x - center| <= radius``
      ``disk_ball``    -- disk points with Euclidean norm ``<= radius`` (< 1);
                          a hyperbolic ball about the origin
      ``tree_ball``    -- tree points with ``radius <= radius`` (about the root)
    """

    kind: str = "whole_space"
    lower: tuple = ()
    upper: tuple = ()
    center: tuple = ()
    radius: float = math.inf

    def __post_init__(self):
        k = self.kind
        if k == "interval_box":
            lo = tuple(float(v) for v in self.lower)
            hi = tuple(float(v) for v in self.upper)
            if not lo or len(lo) != len(hi):
                raise ConfigError("interval_box needs lower/upper bounds of equal length")
            if any(a > b for a, b in zip(lo, hi)):
                raise ConfigError("interval_box is empty (lower > upper)")
            object.__setattr__(self, "lower", lo)
            object.__setattr__(self, "upper", hi)
        elif k == "closed_ball":
            if not self.center:
                raise ConfigError("closed_ball needs a center")
            if not 0 <= self.radius < math.inf:
                raise ConfigError("closed_ball radius must be finite and >= 0")
            object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        elif k == "disk_ball":
            if not 0 <= self.radius < 1:
                raise ConfigError("disk_ball radius must lie in [0, 1)")
        elif k == "tree_ball":
            if not 0 <= self.radius < math.inf:
                raise ConfigError("tree_ball radius must be finite and >= 0")
        elif k != "whole_space":
            raise ConfigError(f"unknown convex set kind {k!r}")

    @property
    def bounded(self):
        if self.kind == "interval_box":
            return all(math.isfinite(v) for v in self.lower + self.upper)
        return self.kind in ("closed_ball", "disk_ball", "tree_ball")

    def supports(self, kind):
        return {
            "whole_space": True,
            "interval_box": kind == EUCLIDEAN,
            "closed_ball": kind == EUCLIDEAN,
            "disk_ball": kind == DISK,
            "tree_ball": kind == TREE,
        }[self.kind]

    def _require(self, x):
        if not self.supports(x.kind):
            raise ConfigError(f"convex set {self.kind!r} is not defined on {x.kind} points")
        if self.kind in ("interval_box",) and len(x) != len(self.lower):
            raise ConfigError(f"interval_box has dimension {len(self.lower)}, point has {len(x)}")
        if self.kind == "closed_ball" and len(x) != len(self.center):
            raise ConfigError(f"closed_ball has dimension {len(self.center)}, point has {len(x)}")

    def contains(self, x, tol=0.0):
        self._require(x)
        k = self.kind
        if k == "whole_space":
            return True
        if k == "interval_box":
            return all(lo - tol <= c <= hi + tol for c, lo, hi in zip(x, self.lower, self.upper))
        if k == "closed_ball":
            return math.dist(x.coords, self.center) <= self.radius + tol
        if k == "disk_ball":
            return math.hypot(*x.coords) <= self.radius + tol
        return x.coords[1] <= self.radius + tol

    def project(self, x):
        """Nearest-point retraction onto K (nonexpansive for every supported pair)."""
        self._require(x)
        k = self.kind
        if k == "whole_space":
            return x
        if k == "interval_box":
            return Point(EUCLIDEAN, tuple(min(max(c, lo), hi) for c, lo, hi in zip(x, self.lower, self.upper)))
        if k == "closed_ball":
            r = math.dist(x.coords, self.center)
            if r <= self.radius:
                return x
            s = self.radius / r
            return Point(EUCLIDEAN, tuple(c0 + s * (c - c0) for c, c0 in zip(x, self.center)))
        if k == "disk_ball":
            # radial lines through the origin are geodesics, so radial scaling
            # is the metric projection onto a hyperbolic ball about 0
            r = math.hypot(*x.coords)
            if r <= self.radius:
                return x
            s = self.radius / r
            return Point(DISK, (x[0] * s, x[1] * s))
        branch, r = x.coords
        if r <= self.radius:
            return x
        return Point(TREE, (branch, self.radius))


WHOLE_SPACE = ConvexSet()


def project(K, x):
    return K.project(x)


def interval(lo, hi):
    return ConvexSet("interval_box", lower=(lo,), upper=(hi,))


def box(lower, upper):
    return ConvexSet("interval_box", lower=tuple(lower), upper=tuple(upper))


def ball(center, radius):
    return ConvexSet("closed_ball", center=tuple(center), radius=radius)


# ---------------------------------------------------------------------------
# Spaces


def modulus_ep2_8(r, eps):
    """Modulus of uniform convexity eps**2 / 8 (valid for CAT(0) spaces)."""
    if not r > 0:
        raise ConfigError(f"modulus needs r > 0, got {r}")
    if not 0 < eps <= 2:
        raise ConfigError(f"modulus needs eps in (0, 2], got {eps}")
    return eps * eps / 8.0


@dataclass(frozen=True)
class GeodesicSpace:
    """Base class: a uniquely geodesic space with convexity map and domain K."""

    domain: ConvexSet = field(default=WHOLE_SPACE)
    point_kind = None

    # tolerance used by the self-checks; exact spaces override nothing
    tolerance = 1e-9

    def __post_init__(self):
        if not self.domain.supports(self.point_kind):
            raise ConfigError(f"domain {self.domain.kind!r} is not supported on {self.kind}")

    @property
    def kind(self):
        raise NotImplementedError

    def check(self, x):
        if not isinstance(x, Point) or x.kind != self.point_kind:
            got = getattr(x, "kind", type(x).__name__)
            raise DomainError(f"expected a {self.point_kind} point, got {got}")
        return x

    def dist(self, x, y):
        raise NotImplementedError

    def combine(self, x, y, t):
        raise NotImplementedError

    def modulus(self, r, eps):
        return modulus_ep2_8(r, eps)

    def in_domain(self, x, tol=0.0):
        return self.domain.contains(self.check(x), tol)

    def point(self, coords):
        """Build a point of this space from a plain coordinate sequence."""
        raise NotImplementedError

    def columns(self):
        """CSV column names for a point of this space."""
        raise NotImplementedError

    def sample(self, rng, K=None, radius=1.0):
        """Draw a point of ``K`` (default: the space domain).

        Unbounded sets are intersected with a bounded proxy region of size
        ``radius`` around the origin.
        """
        raise NotImplementedError

    @staticmethod
    def _check_t(t):
        if not 0.0 <= t <= 1.0:
            raise DomainError(f"combination weight must be in [0, 1], got {t}")


@dataclass(frozen=True)
class EuclideanSpace(GeodesicSpace):
    dimension: int = 1
    point_kind = EUCLIDEAN

    def __post_init__(self):
        super().__post_init__()
        if self.dimension < 1:
            raise ConfigError("euclidean dimension must be >= 1")
        d = self.domain
        n = len(d.lower) if d.kind == "interval_box" else len(d.center) if d.kind == "closed_ball" else None
        if n is not None and n != self.dimension:
            raise ConfigError(f"domain dimension {n} does not match space dimension {self.dimension}")

    @property
    def kind(self):
        return "euclidean"

    def check(self, x):
        super().check(x)
        if len(x) != self.dimension:
            raise DomainError(f"expected dimension {self.dimension}, got {len(x)}")
        return x

    def dist(self, x, y):
        return math.dist(self.check(x).coords, self.check(y).coords)

    def combine(self, x, y, t):
        self.check(x)
        self.check(y)
        self._check_t(t)
        s = 1.0 - t
        return Point(EUCLIDEAN, tuple(s * a + t * b for a, b in zip(x, y)))

    def point(self, coords):
        return Point(EUCLIDEAN, tuple(coords))

    def columns(self):
        return [f"x_{i}" for i in range(self.dimension)]

    def sample(self, rng, K=None, radius=1.0):
        K = self.domain if K is None else K
        d = self.dimension
        if K.kind == "closed_ball":
            return Point(EUCLIDEAN, tuple(np.asarray(K.center) + _ball_sample(rng, d, K.radius)))
        if K.kind == "interval_box":
            lo, hi = _finite_box(K.lower, K.upper, radius)
        else:
            lo, hi = [-radius] * d, [radius] * d
        return Point(EUCLIDEAN, tuple(rng.uniform(lo, hi)))


def _ball_sample(rng, d, r):
    g = rng.standard_normal(d)
    n = np.linalg.norm(g)
    if n == 0:
        return np.zeros(d)
    return g / n * r * rng.random() ** (1.0 / d)


def _finite_box(lower, upper, radius):
    lo, hi = [], []
    for a, b in zip(lower, upper):
        if math.isfinite(a) and math.isfinite(b):
            pass
        elif math.isfinite(a):
            b = a + 2 * radius
        elif math.isfinite(b):
            a = b - 2 * radius
        else:
            a, b = -radius, radius
        lo.append(a)
        hi.append(b)
    return lo, hi


@dataclass(frozen=True)
class PoincareDisk(GeodesicSpace):
    """Open unit disk with the Kobayashi distance.

    ``sigma(x, y) = (1 - |x|^2)(1 - |y|^2) / (1 - <x, y>)^2`` and
    ``k(x, y) = arctanh(sqrt(1 - sigma))``.
    """

    point_kind = DISK
    tolerance = 1e-7

    @property
    def kind(self):
        return "poincare_disk"

    def dist(self, x, y):
        (x1, x2), (y1, y2) = self.check(x).coords, self.check(y).coords
        p = 1.0 - (x1 * y1 + x2 * y2)
        # (1 - <x,y>)^2 - (1 - |x|^2)(1 - |y|^2) = |x - y|^2 - (x1 y2 - x2 y1)^2
        num = (x1 - y1) ** 2 + (x2 - y2) ** 2 - (x1 * y2 - x2 * y1) ** 2
        if num <= 0.0:
            return 0.0
        s = math.sqrt(num) / p
        return math.atanh(min(s, 1.0 - 1e-16))

    def _lift(self, x):
        # time component of the hyperboloid lift of a Klein point
        return 1.0 / math.sqrt((1.0 - x[0] * x[0] - x[1] * x[1]))

    def combine(self, x, y, t):
        self._check_t(t)
        D = self.dist(x, y)
        if t == 0.0 or D == 0.0:
            return x
        if t == 1.0:
            return y
        # hyperboloid geodesic sinh((1-t)D)/sinh(D) X + sinh(tD)/sinh(D) Y,
        # read back in Klein coordinates: a point on the chord [x, y]
        a = math.sinh((1.0 - t) * D) * self._lift(x)
        b = math.sinh(t * D) * self._lift(y)
        s = b / (a + b)
        return Point(DISK, (x[0] + s * (y[0] - x[0]), x[1] + s * (y[1] - x[1])))

    def point(self, coords):
        return Point(DISK, tuple(coords))

    def columns(self):
        return ["u", "v"]

    def sample(self, rng, K=None, radius=0.9):
        K = self.domain if K is None else K
        r = K.radius if K.kind == "disk_ball" else min(radius, 0.99)
        u, v = _ball_sample(rng, 2, r)
        return Point(DISK, (u, v))


@dataclass(frozen=True)
class StarTree(GeodesicSpace):
    """Metric star: ``branches`` half-lines glued at the root.

    Points are ``(branch, radius)``; every point with radius 0 is the root.
    """

    branches: int = 3
    point_kind = TREE

    def __post_init__(self):
        super().__post_init__()
        if self.branches < 1:
            raise ConfigError("star tree needs at least one branch")

    @property
    def kind(self):
        return "star_tree"

    def check(self, x):
        super().check(x)
        if not 0 <= x[0] < self.branches:
            raise DomainError(f"branch {x[0]} not in 0..{self.branches - 1}")
        return x

    def dist(self, x, y):
        (b1, r1), (b2, r2) = self.check(x).coords, self.check(y).coords
        if b1 == b2 or r1 == 0.0 or r2 == 0.0:
            return abs(r1 - r2)
        return r1 + r2

    def combine(self, x, y, t):
        self.check(x)
        self.check(y)
        self._check_t(t)
        (b1, r1), (b2, r2) = x.coords, y.coords
        if t == 0.0:
            return x
        if t == 1.0:
            return y
        if b1 == b2 or r1 == 0.0 or r2 == 0.0:
            b = b1 if r1 > 0.0 else b2
            return Point(TREE, (b, (1.0 - t) * r1 + t * r2))
        s = t * (r1 + r2)
        if s <= r1:
            return Point(TREE, (b1, r1 - s))
        return Point(TREE, (b2, s - r1))

    def point(self, coords):
        b, r = coords
        return Point(TREE, (int(b), r))

    def columns(self):
        return ["branch", "radius"]

    def sample(self, rng, K=None, radius=1.0):
        K = self.domain if K is None else K
        R = K.radius if K.kind == "tree_ball" else radius
        b = int(rng.integers(self.branches))
        # a few exact roots exercise the gluing point
        if rng.random() < 0.05:
            return Point(TREE, (0, 0.0))
        return Point(TREE, (b, R * rng.random()))


def make_space(kind, dimension=1, branches=3, domain=WHOLE_SPACE):
    if kind == "euclidean":
        return EuclideanSpace(domain=domain, dimension=dimension)
    if kind == "poincare_disk":
        return PoincareDisk(domain=domain)
    if kind == "star_tree":
        return StarTree(domain=domain, branches=branches)
    raise ConfigError(f"unknown space kind {kind!r}", key="space.kind")


def make_rng(seed):
    """Seeded generator used for every sampling routine (PCG64 via SeedSequence)."""
    return np.random.default_rng(np.random.SeedSequence(seed))
