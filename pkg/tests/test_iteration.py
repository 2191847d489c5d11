import math

import pytest

from tanfix.analysis import FixedSet
from tanfix.errors import ConfigError, DomainError
from tanfix.iteration import (
    GENERIC_STEP_CAP,
    N_MAX_REACHED,
    RESIDUAL_MET,
    IterationConfig,
    make_schedule,
    run,
    step,
    step_nonself,
)
from tanfix.mappings import AffineContraction, ConstantMap, Identity, Rotation, ShiftScale4, SinMap, XSinInv
from tanfix.spaces import ball, euclid, interval, make_space, tree

R1 = make_space("euclidean", 1)
R2 = make_space("euclidean", 2)
HALF = make_schedule("constant", 0.5)


def cfg(family, x1, **kw):
    space = family[0].space
    kw.setdefault("schedule", HALF)
    return IterationConfig(space=space, family=family, x1=x1, **kw)


def test_schedules():
    assert all(HALF(n) == 0.5 for n in range(1, 50))
    s = make_schedule("seeded_uniform", lower=0.2, upper=0.8, seed=7)
    vals = [s(n) for n in range(1, 500)]
    assert all(0.2 <= v <= 0.8 for v in vals)
    assert vals == [make_schedule("seeded_uniform", lower=0.2, upper=0.8, seed=7)(n) for n in range(1, 500)]
    assert len(set(vals)) > 400
    t = make_schedule("tabulated", table=[0.3, 0.6])
    assert [t(n) for n in range(1, 6)] == [0.3, 0.6, 0.3, 0.6, 0.3]


@pytest.mark.parametrize("kw", [
    dict(kind="constant", value=0.0),
    dict(kind="constant", value=1.0),
    dict(kind="seeded_uniform", lower=0.0, upper=0.5),
    dict(kind="seeded_uniform", lower=0.6, upper=0.5),
    dict(kind="tabulated", table=[0.3, 1.0]),
    dict(kind="tabulated", table=[0.3, 0.6], lower=0.4, upper=0.6),
    dict(kind="seeded_uniform", lower=0.2),
    dict(kind="zigzag", lower=0.2, upper=0.4),
])
def test_schedule_rejects_bad_bounds(kw):
    with pytest.raises(ConfigError):
        make_schedule(**kw)


def test_identity_is_stationary():
    c = cfg([Identity(R1)], euclid(0.7), n_max=5, residual_tol=1e-300)
    for n in range(1, 5):
        x, ys = step(c, n, euclid(0.7))
        assert x == euclid(0.7)
        assert ys == []
    tr = run(cfg([Identity(R1)], euclid(0.7)))
    assert len(tr) == 1
    assert tr.stop_reason == RESIDUAL_MET
    assert tr.residuals == [(0.0,)]


def test_constant_map_halving():
    c = cfg([ConstantMap(R1, euclid(0.0))], euclid(1.0), n_max=40, residual_tol=1e-300)
    tr = run(c)
    for n, x in enumerate(tr.points, 1):
        assert x[0] == 2.0 ** (1 - n)


def test_constant_map_stops_near_21():
    tr = run(cfg([ConstantMap(R1, euclid(0.0))], euclid(1.0), residual_tol=1e-6))
    assert tr.stop_reason == RESIDUAL_MET
    assert len(tr) == 21
    assert 2.0 ** (1 - 21) < 1e-6 <= 2.0 ** (1 - 20)


def test_two_constant_maps_chain():
    fam = [ConstantMap(R1, euclid(0.0)), ConstantMap(R1, euclid(0.0))]
    c = cfg(fam, euclid(1.0), n_max=30, residual_tol=1e-300)
    x = euclid(1.0)
    for n in range(1, 30):
        nxt, (y1,) = step(c, n, x)
        assert y1[0] == 0.5 * x[0]
        assert nxt[0] == 0.5 * x[0]
        x = nxt
    assert x[0] == 2.0 ** -29


def test_chain_order_three_maps():
    # T3 fires first on x_n, then T2 on y_2, then T1 on y_1
    fam = [AffineContraction(R1, 0.5), AffineContraction(R1, 0.25), ConstantMap(R1, euclid(0.8))]
    for f in fam:
        f.domain = interval(-1, 1)
    c = cfg(fam, euclid(0.4), schedule=make_schedule("constant", 0.3), n_max=3)
    x = 0.4
    a = 0.3
    y2 = (1 - a) * x + a * 0.8
    y1 = (1 - a) * x + a * 0.25 * y2
    x2 = (1 - a) * x + a * 0.5 * y1
    nxt, ys = step(c, 1, euclid(x))
    assert ys[0][0] == pytest.approx(y1, abs=1e-15)
    assert ys[1][0] == pytest.approx(y2, abs=1e-15)
    assert nxt[0] == pytest.approx(x2, abs=1e-15)
    # the n-th power is used at step n
    _, ys = step(c, 2, euclid(x))
    assert ys[0][0] == pytest.approx((1 - a) * x + a * 0.0625 * ys[1][0], abs=1e-15)


def test_nonself_spot_and_fixed_point():
    T = AffineContraction(R1, -0.5, self_map=False)
    c = cfg([T], euclid(1.0), mode="nonself", K=interval(0, 1), n_max=10)
    x, _ = step_nonself(c, 1, euclid(1.0))
    assert x == euclid(0.25)
    c0 = cfg([T], euclid(0.0), mode="nonself", K=interval(0, 1), n_max=10)
    assert all(p == euclid(0.0) for p in run(c0).points)


def test_nonself_matches_self_on_whole_space():
    T = Rotation(R2, 0.4)
    S = AffineContraction(R2, 0.6, euclid(0.1, 0.0))
    a = run(cfg([T, S], euclid(0.5, 0.5), n_max=30, residual_tol=1e-300))
    b = run(cfg([T, S], euclid(0.5, 0.5), n_max=30, residual_tol=1e-300, mode="nonself"))
    assert all(R2.dist(p, q) <= 1e-12 for p, q in zip(a.points, b.points))


def test_self_mode_needs_self_maps():
    T = AffineContraction(R1, -0.5, self_map=False)
    with pytest.raises(ConfigError):
        cfg([T], euclid(1.0), K=interval(0, 1))


def test_escape_names_step_and_mapping():
    R3 = make_space("euclidean", 3)
    S = ShiftScale4(R3, domain=ball([0, 0, 0], 1.0))
    c = cfg([S], euclid(0.0, 1e-12, 0.0), n_max=100, residual_tol=1e-300)
    with pytest.raises(DomainError) as err:
        run(c)
    assert err.value.mapping_index == 1
    assert err.value.step is not None
    assert f"step {err.value.step}, mapping 1" in str(err.value)


def test_x1_outside_K_rejected():
    with pytest.raises(ConfigError):
        cfg([XSinInv(0.5)], euclid(1.0))


def test_generic_cap():
    with pytest.raises(ConfigError):
        cfg([SinMap()], euclid(1.0), n_max=GENERIC_STEP_CAP + 1)
    cfg([SinMap()], euclid(1.0), n_max=GENERIC_STEP_CAP + 1, allow_long=True)
    cfg([AffineContraction(R1, 0.5)], euclid(1.0), n_max=10**6)


def test_bad_config_values():
    with pytest.raises(ConfigError):
        cfg([SinMap()], euclid(1.0), n_max=0)
    with pytest.raises(ConfigError):
        cfg([SinMap()], euclid(1.0), residual_tol=0.0)
    with pytest.raises(ConfigError):
        cfg([SinMap()], euclid(1.0), mode="sideways")
    with pytest.raises(ConfigError):
        IterationConfig(space=R1, family=[], x1=euclid(1.0), schedule=HALF)
    with pytest.raises(ConfigError):
        IterationConfig(space=R2, family=[SinMap()], x1=euclid(1.0, 0.0), schedule=HALF)


def test_trace_records_everything():
    K = interval(-1 / math.pi, 1 / math.pi)
    fam = [SinMap(domain=K), XSinInv(0.5)]
    c = cfg(fam, euclid(1 / math.pi), K=K, n_max=20, residual_tol=1e-300, reference=euclid(0.0),
            fixed_set=FixedSet("single_point", (euclid(0.0),)), trace_intermediates=True)
    tr = run(c)
    assert len(tr) == 20
    assert tr.stop_reason == N_MAX_REACHED
    assert len(tr.intermediates) == 19
    assert all(len(ys) == 1 for ys in tr.intermediates)
    assert all(len(r) == 2 and min(r) >= 0 for r in tr.residuals)
    assert tr.dist_p == [abs(p[0]) for p in tr.points]
    assert tr.dist_F == tr.dist_p
    assert all(K.contains(p, 1e-12) for p in tr.points)
    assert all(K.contains(y, 1e-12) for ys in tr.intermediates for y in ys)


def test_residual_uses_first_power():
    c = cfg([SinMap()], euclid(1.0), n_max=3, residual_tol=1e-300)
    tr = run(c)
    for x, (r,) in zip(tr.points, tr.residuals):
        assert r == abs(x[0] - math.sin(x[0]))


def test_fejer_monotone_for_nonexpansive_family():
    fam = [Rotation(R2, 1.0, domain=ball([0, 0], 1.0)), AffineContraction(R2, 0.9, domain=ball([0, 0], 1.0))]
    c = cfg(fam, euclid(0.6, 0.3), schedule=make_schedule("seeded_uniform", lower=0.2, upper=0.8, seed=1),
            n_max=200, residual_tol=1e-300)
    d = [math.hypot(*p.coords) for p in run(c).points]
    assert all(b <= a + 1e-9 for a, b in zip(d, d[1:]))


def test_fixed_point_invariance():
    fam = [Rotation(R2, 1.0, (0.2, 0.1)), AffineContraction(R2, 0.5, euclid(0.2, 0.1))]
    tr = run(cfg(fam, euclid(0.2, 0.1), n_max=50, residual_tol=1e-300))
    assert all(R2.dist(p, euclid(0.2, 0.1)) <= 1e-12 for p in tr.points)


def test_tree_run():
    T = make_space("star_tree", branches=3)
    A = AffineContraction(T, 0.5, tree(2, 1.0))
    tr = run(IterationConfig(space=T, family=[A], x1=tree(0, 2.0), schedule=HALF, n_max=200))
    assert T.dist(tr.last, tree(2, 1.0)) < 1e-9


def test_runs_are_bit_identical():
    K = interval(-1 / math.pi, 1 / math.pi)
    fam = [SinMap(domain=K), XSinInv(0.5)]
    sched = make_schedule("seeded_uniform", lower=0.1, upper=0.9, seed=3)
    a = run(cfg(fam, euclid(0.3), K=K, schedule=sched, n_max=100))
    b = run(cfg(fam, euclid(0.3), K=K, schedule=sched, n_max=100))
    assert a.points == b.points and a.residuals == b.residuals and a.alphas == b.alphas


def test_step_numbering():
    c = cfg([SinMap()], euclid(1.0))
    with pytest.raises(ValueError):
        step(c, 0, euclid(1.0))
