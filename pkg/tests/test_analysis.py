import math

import numpy as np
import pytest

from tanfix.analysis import (
    DEFAULT_SUBSEQUENCES,
    FixedSet,
    TailSpec,
    asymptotic_center,
    asymptotic_radius,
    check_recursive_inequality,
    classify,
    delta_converged,
    dist_to_fixed_set,
    envelope_constant,
    fejer_check,
    orbit_center_probe,
)
from tanfix.errors import ConfigError, DomainError
from tanfix.iteration import IterationConfig, make_schedule, run
from tanfix.mappings import (
    AffineContraction,
    ConstantMap,
    Identity,
    Rotation,
    ScalingFunction,
    Seq,
    ShiftScale4,
    TanSequences,
)
from tanfix.spaces import WHOLE_SPACE, ConvexSet, ball, box, disk, euclid, interval, make_rng, make_space, tree

R1 = make_space("euclidean", 1)
R2 = make_space("euclidean", 2)
D = make_space("poincare_disk")
T3 = make_space("star_tree", branches=3)

ALT = [euclid((-1.0) ** n) for n in range(200)]
ALL = TailSpec(window=200)


def minimax_oracle(points, lower=None, upper=None):
    """Smallest enclosing ball over a box, solved as a second-order cone program."""
    cp = pytest.importorskip("cvxpy")
    P = np.array([p.coords for p in points])
    z, r = cp.Variable(P.shape[1]), cp.Variable()
    cons = [cp.norm(z - P[i]) <= r for i in range(len(P))]
    if lower is not None:
        cons += [z >= np.asarray(lower), z <= np.asarray(upper)]
    cp.Problem(cp.Minimize(r), cons).solve()
    return np.asarray(z.value), float(r.value)


def test_radius_examples():
    c = [euclid(0.3)] * 20
    assert asymptotic_radius(R1, euclid(0.3), c) == 0.0
    assert asymptotic_radius(R1, euclid(0.0), ALT, ALL) == 1.0
    assert asymptotic_radius(R1, euclid(0.5), ALT, ALL) == 1.5


def test_tail_selection():
    pts = list(range(100))
    assert TailSpec().select(pts) == list(range(75, 100))
    assert TailSpec().select(pts[:12]) == pts[2:12]
    assert TailSpec().select(pts[:5]) == pts[:5]
    assert TailSpec(window=3, stride=2, offset=1).select(pts) == [95, 97, 99]
    with pytest.raises(ConfigError):
        TailSpec(window=500).select(pts)
    with pytest.raises(ConfigError):
        TailSpec(stride=0).select(pts)
    with pytest.raises(ConfigError):
        TailSpec(offset=200).select(pts)


def test_center_alternating():
    res = asymptotic_center(R1, ALT, interval(-2, 2), ALL)
    assert abs(res.center[0]) <= 1e-4
    assert abs(res.radius - 1) <= 1e-4
    assert res.converged


@pytest.mark.parametrize("space, c", [(R2, euclid(0.4, -0.2)), (D, disk(0.3, 0.5)), (T3, tree(2, 1.5))],
                         ids=["euclidean", "disk", "tree"])
def test_center_constant(space, c):
    res = asymptotic_center(space, [c] * 30)
    assert res.radius <= 1e-10
    assert space.dist(res.center, c) <= 1e-10


def test_center_one_over_n():
    pts = [euclid(1.0 / n) for n in range(1, 10_001)]
    res = asymptotic_center(R1, pts, interval(0, 1), TailSpec(window=50))
    lo, hi = 1 / 10_000, 1 / 9_951
    assert res.center[0] == pytest.approx((lo + hi) / 2, abs=1e-9)
    assert res.radius == pytest.approx((hi - lo) / 2, abs=1e-9)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_center_matches_cone_program(seed):
    rng = make_rng(seed)
    pts = [euclid(*v) for v in rng.normal(size=(40, 3))]
    z, r = minimax_oracle(pts)
    res = asymptotic_center(make_space("euclidean", 3), pts, WHOLE_SPACE, TailSpec(window=40))
    assert res.radius == pytest.approx(r, abs=1e-5)
    assert np.linalg.norm(np.array(res.center.coords) - z) <= 1e-3


def test_center_constrained_matches_cone_program():
    rng = make_rng(8)
    pts = [euclid(*v) for v in rng.uniform(1, 3, size=(30, 2))]
    K = box([-1, -1], [0.5, 0.5])
    z, r = minimax_oracle(pts, K.lower, K.upper)
    res = asymptotic_center(R2, pts, K, TailSpec(window=30))
    assert K.contains(res.center, 1e-12)
    assert res.radius == pytest.approx(r, abs=1e-5)
    assert np.allclose(res.center.coords, z, atol=1e-4)


def test_center_beats_random_points():
    rng = make_rng(12)
    pts = [D.sample(rng, radius=0.6) for _ in range(50)]
    tail = TailSpec(window=50)
    res = asymptotic_center(D, pts, WHOLE_SPACE, tail)
    assert res.radius == pytest.approx(asymptotic_radius(D, res.center, pts, tail), abs=1e-9)
    for _ in range(1000):
        y = D.sample(rng, radius=0.8)
        assert res.radius <= asymptotic_radius(D, y, pts, tail) + 1e-4


def test_tree_center_matches_grid():
    pts = [tree(0, 2.0), tree(1, 1.0), tree(2, 0.5), tree(0, 1.5)]
    tail = TailSpec(window=4)
    res = asymptotic_center(T3, pts, WHOLE_SPACE, tail)
    grid = [tree(b, r) for b in range(3) for r in np.linspace(0, 3, 3001)]
    best = min(asymptotic_radius(T3, g, pts, tail) for g in grid)
    assert res.radius == pytest.approx(best, abs=1e-3)
    assert res.radius <= best + 1e-9
    assert res.center == tree(0, 0.5) or T3.dist(res.center, tree(0, 0.5)) < 1e-5


def test_center_in_disk_ball():
    K = ConvexSet("disk_ball", radius=0.3)
    pts = [disk(0.7, 0.0), disk(0.75, 0.05)] * 10
    res = asymptotic_center(D, pts, K)
    assert K.contains(res.center, 1e-12)
    grid = [disk(r * math.cos(a), r * math.sin(a)) for r in np.linspace(0, 0.3, 61)
            for a in np.linspace(-0.5, 0.5, 401)]
    best = min(asymptotic_radius(D, g, pts) for g in grid)
    assert res.radius <= best + 1e-9
    assert res.radius == pytest.approx(best, abs=1e-3)


def test_center_budget_exhausted():
    rng = make_rng(0)
    pts = [euclid(*v) for v in rng.normal(size=(30, 2))]
    res = asymptotic_center(R2, pts, budget=5)
    assert not res.converged


def test_center_rejects_foreign_K():
    with pytest.raises(ConfigError):
        asymptotic_center(T3, [tree(0, 1.0)] * 5, interval(0, 1))


def test_delta_alternating_false():
    agree, centers = delta_converged(R1, ALT, interval(-2, 2), DEFAULT_SUBSEQUENCES[:2])
    assert not agree
    assert sorted(round(c.center[0], 6) for c in centers) == [-1.0, 1.0]


def test_delta_convergent_true():
    pts = [euclid(0.5 + 0.5**n, 0.2) for n in range(100)]
    agree, centers = delta_converged(R2, pts)
    assert agree
    assert all(R2.dist(c.center, euclid(0.5, 0.2)) < 1e-6 for c in centers)


def test_dist_to_fixed_set_examples():
    assert dist_to_fixed_set(euclid(0.3), FixedSet("single_point", (euclid(0.0),)), R1) == 0.3
    assert dist_to_fixed_set(euclid(2.0), FixedSet("interval_box", box=interval(0, 1)), R1) == 1.0
    F = FixedSet("finite_list", (disk(0.0, 0.0), disk(0.5, 0.0)))
    x = disk(0.6, 0.0)
    assert dist_to_fixed_set(x, F, D) == min(D.dist(x, disk(0, 0)), D.dist(x, disk(0.5, 0)))
    with pytest.raises(ConfigError):
        dist_to_fixed_set(disk(0.1, 0.1), FixedSet("interval_box", box=interval(0, 1)), D)


def test_fixed_set_validation():
    with pytest.raises(ConfigError):
        FixedSet("single_point", ())
    with pytest.raises(ConfigError):
        FixedSet("single_point", (euclid(0.0), euclid(1.0)))
    with pytest.raises(ConfigError):
        FixedSet("interval_box")
    with pytest.raises(ConfigError):
        FixedSet("cloud", (euclid(0.0),))


def test_recursive_inequality_examples():
    n = np.arange(1, 2001)
    zero = np.zeros(len(n))
    rep = check_recursive_inequality(1.0 / n, zero, zero, 1e-12, cauchy_tol=1e-3)
    assert rep.passed
    rep = check_recursive_inequality(n.astype(float), zero, zero, 1e-12)
    assert rep.first_violation == 1
    assert not rep.passed
    b = 2.0**-n
    a = np.cumprod(np.concatenate([[1.0], 1 + b[:-1]]))
    rep = check_recursive_inequality(a, b, zero, 1e-12, cauchy_tol=1e-9)
    assert rep.passed
    assert a[-1] <= math.e
    with pytest.raises(ConfigError):
        check_recursive_inequality([1, 2], [-1, 0], [0, 0], 1e-9)
    with pytest.raises(ConfigError):
        check_recursive_inequality([1], [0], [0], 1e-9)


def nonexpansive_trace(fam, x1, n_max=200, **kw):
    return run(IterationConfig(space=fam[0].space, family=fam, x1=x1, schedule=make_schedule("constant", 0.5),
                               n_max=n_max, residual_tol=1e-300, **kw))


def test_fejer_examples():
    zero = [TanSequences()]
    tr = nonexpansive_trace([ConstantMap(R1, euclid(0.0))], euclid(1.0), n_max=60)
    assert fejer_check(R1, tr, euclid(0.0), zero, a=5.0) <= 0
    tr = nonexpansive_trace([Identity(R1)], euclid(0.4), n_max=10)
    assert tr.points == [euclid(0.4)]
    assert fejer_check(R1, [euclid(0.4)] * 10, euclid(0.4), zero) == 0.0
    fam = [Rotation(R2, 1.0, domain=ball([0, 0], 1)), AffineContraction(R2, 0.7, domain=ball([0, 0], 1))]
    tr = nonexpansive_trace(fam, euclid(0.5, 0.5))
    assert fejer_check(R2, tr, euclid(0.0, 0.0), [TanSequences()] * 2, a=3.0) <= 1e-9
    with pytest.raises(ConfigError):
        fejer_check(R2, tr, euclid(0.0, 0.0), None)


def test_envelope_constant_dominates_one_step_bound():
    # one mapping with ||T^n x - T^n p|| <= (1 + k_n) ||x - p|| + phi_n and alpha = 1/2
    seqs = [TanSequences(k=Seq("geometric", 1.0, 0.5), phi=Seq("geometric", 0.1, 0.5),
                         xi=ScalingFunction("affine_capped", slope=2.0, cap=1.0, tail_slope=1.0), M=1.0, M_star=2.0)]
    a = envelope_constant(seqs, 50)
    assert a >= 2.0
    s = seqs[0]
    for n in range(1, 50):
        for d in (0.01, 0.5, 1.0, 3.0):
            step_bound = d + 0.5 * (s.k(n) * s.xi(d) + s.phi(n))
            assert step_bound <= (1 + a * s.k(n)) * d + a * (s.k(n) + s.phi(n)) + 1e-15


def test_recursive_inequality_on_run():
    fam = [Rotation(R2, 1.0, domain=ball([0, 0], 1)), AffineContraction(R2, 0.7, domain=ball([0, 0], 1))]
    tr = nonexpansive_trace(fam, euclid(0.5, 0.5), n_max=300)
    a = [R2.dist(x, euclid(0.0, 0.0)) for x in tr.points]
    zero = [0.0] * len(a)
    assert check_recursive_inequality(a, zero, zero, 1e-9, cauchy_tol=1e-6).passed


def test_probe_examples():
    A = AffineContraction(R1, 0.5, domain=interval(-1, 1))
    res = orbit_center_probe(A, euclid(1.0), 60, interval(-1, 1))
    assert res.residual <= 1e-6
    assert abs(res.center[0]) <= 1e-6
    Rot = Rotation(R2, 1.0, domain=ball([0, 0], 1.0))
    res = orbit_center_probe(Rot, euclid(1.0, 0.0), 500, ball([0, 0], 1.0))
    assert res.residual <= 1e-3
    A2 = AffineContraction(R2, 0.5, euclid(0.3, 0.3))
    res = orbit_center_probe(A2, euclid(0.3, 0.3), 20)
    assert res.residual == 0.0
    assert res.center == euclid(0.3, 0.3)


def test_probe_escape():
    S = ShiftScale4(make_space("euclidean", 2))
    with pytest.raises(DomainError) as err:
        orbit_center_probe(S, euclid(0.0, 1.0), 50, bound=1e3)
    assert err.value.step == 5


def test_classify_strong_implies_delta():
    fam = [ConstantMap(R1, euclid(0.0))]
    tr = nonexpansive_trace(fam, euclid(1.0), n_max=80, fixed_set=FixedSet("single_point", (euclid(0.0),)))
    rep = classify(R1, tr)
    assert rep.classification == "strong"
    assert rep.delta
    assert rep.criterion_step == len(tr)


def test_classify_undetermined_without_agreement():
    fam = [Rotation(R2, math.pi)]
    tr = nonexpansive_trace(fam, euclid(1.0, 0.0), n_max=3)
    tr.points = [euclid((-1.0) ** n, 0.0) for n in range(60)]
    tr.residuals = [(2.0,)] * 60
    rep = classify(R2, tr, subsequences=DEFAULT_SUBSEQUENCES[:2])
    assert rep.classification == "undetermined"
    assert not rep.delta
    assert any("delta verdict: False" in line for line in rep.lines())
