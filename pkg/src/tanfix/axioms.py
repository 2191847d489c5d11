"""Sampling checks of the convexity-map axioms and of uniform convexity."""

from dataclasses import dataclass, field

from tanfix.spaces import make_rng


@dataclass
class AxiomReport:
    """Maximum signed violation per checked inequality.

    A value ``<= tolerance`` means the inequality held on every sample.
    """

    space: str
    samples: int
    seed: int
    tolerance: float
    violations: dict = field(default_factory=dict)
    rejected: int = 0

    @property
    def passed(self):
        return all(v <= self.tolerance for v in self.violations.values())

    def lines(self):
        for name, v in self.violations.items():
            mark = "ok" if v <= self.tolerance else "VIOLATED"
            yield f"{self.space} {name}: max violation {v:.3e} (tol {self.tolerance:.0e}) {mark}"


def check_w_axioms(space, sample_count, seed, tol=None):
    """Check (W1)-(W4) plus the constant-speed identity on random tuples in K.

    Orientation: ``d(u, W(x, y, t)) <= (1 - t) d(u, x) + t d(u, y)``.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    tol = space.tolerance if tol is None else tol
    rng = make_rng(seed)
    d, W = space.dist, space.combine
    worst = dict.fromkeys(("W1", "W2", "W3", "W4", "speed", "convex_K"), float("-inf"))

    for _ in range(sample_count):
        x, y, z, w, u = (space.sample(rng) for _ in range(5))
        t, s = (float(v) for v in rng.random(2))
        p = W(x, y, t)
        dxy = d(x, y)
        w1 = d(u, p) - ((1 - t) * d(u, x) + t * d(u, y))
        w2 = abs(d(p, W(x, y, s)) - abs(t - s) * dxy)
        w3 = d(p, W(y, x, 1 - t))
        w4 = d(W(x, z, t), W(y, w, t)) - ((1 - t) * d(x, y) + t * d(z, w))
        speed = max(abs(d(x, p) - t * dxy), abs(d(p, y) - (1 - t) * dxy))
        inside = 0.0 if space.in_domain(p, tol) else 1.0
        for key, val in zip(worst, (w1, w2, w3, w4, speed, inside)):
            if val > worst[key]:
                worst[key] = float(val)

    return AxiomReport(space.kind, sample_count, seed, tol, worst)


def check_uc_inequality(space, sample_count, seed, tol=None, max_tries=1000):
    """Randomized check of ``d(W(x, y, lam), a) <= (1 - 2 lam (1 - lam) eta(r, eps)) r``.

    Tuples ``(a, x, y, r, eps, lam)`` are drawn in K; infeasible ones
    (``d(x, y) < eps r``) are rejected and redrawn.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    tol = space.tolerance if tol is None else tol
    rng = make_rng(seed)
    d = space.dist
    worst = float("-inf")
    rejected = 0
    for _ in range(sample_count):
        for _ in range(max_tries):
            a, x, y = (space.sample(rng) for _ in range(3))
            reach = max(d(x, a), d(y, a))
            r = reach * (1.0 + 0.5 * rng.random())
            eps = 2.0 * (1.0 - rng.random())  # (0, 2]
            lam = rng.random()
            if r > 0 and d(x, y) >= eps * r:
                break
            rejected += 1
        else:
            raise RuntimeError("could not draw a feasible tuple")
        bound = (1.0 - 2.0 * lam * (1.0 - lam) * space.modulus(r, eps)) * r
        v = d(space.combine(x, y, lam), a) - bound
        worst = max(worst, float(v))
    return AxiomReport(space.kind, sample_count, seed, tol, {"uniform_convexity": worst}, rejected)
