import math

import pytest

from tanfix.analysis import FixedSet
from tanfix.errors import ConfigError
from tanfix.iteration import IterationConfig, make_schedule, run
from tanfix.mappings import AffineContraction, Rotation, SinMap, XSinInv
from tanfix.spaces import disk, euclid, interval, make_space, tree
from tanfix.tracefile import header, read_trace, trace_to_csv, write_trace


def sample_trace(space, family, x1, **kw):
    sched = make_schedule("seeded_uniform", lower=0.1, upper=0.9, seed=2)
    return run(IterationConfig(space=space, family=family, x1=x1, schedule=sched, residual_tol=1e-300, **kw))


def same_to_15_digits(a, b):
    return a == b or math.isclose(a, b, rel_tol=1e-15, abs_tol=1e-300)


def assert_round_trip(tmp_path, space, tr):
    path = tmp_path / "t.csv"
    write_trace(path, tr, space)
    back = read_trace(path, space)
    assert back.m == tr.m
    assert len(back) == len(tr)
    for field in ("alphas", "dist_p", "dist_F"):
        a, b = getattr(tr, field), getattr(back, field)
        assert (a is None) == (b is None)
        if a is not None:
            assert all(same_to_15_digits(u, v) for u, v in zip(a, b))
    for ra, rb in zip(tr.residuals, back.residuals):
        assert all(same_to_15_digits(u, v) for u, v in zip(ra, rb))
    for p, q in zip(tr.points, back.points):
        assert p.kind == q.kind
        assert all(same_to_15_digits(u, v) for u, v in zip(p.coords, q.coords))
    if tr.intermediates is not None:
        assert len(back.intermediates) == len(tr.intermediates)
        for ys, zs in zip(tr.intermediates, back.intermediates):
            assert ys == zs
    # re-serializing is a fixed point
    assert trace_to_csv(back, space) == path.read_text()


def test_round_trip_euclidean(tmp_path):
    R2 = make_space("euclidean", 2)
    tr = sample_trace(R2, [Rotation(R2, 1.0), AffineContraction(R2, 0.9)], euclid(0.3, 0.4), n_max=80,
                      reference=euclid(0.0, 0.0), fixed_set=FixedSet("single_point", (euclid(0.0, 0.0),)),
                      trace_intermediates=True)
    assert_round_trip(tmp_path, R2, tr)


def test_round_trip_disk(tmp_path):
    D = make_space("poincare_disk")
    tr = sample_trace(D, [AffineContraction(D, 0.7, disk(0.1, 0.2))], disk(-0.5, 0.3), n_max=60)
    assert_round_trip(tmp_path, D, tr)
    assert header(tr, D) == ["n", "alpha", "res_1", "u", "v"]


def test_round_trip_tree(tmp_path):
    T = make_space("star_tree", branches=4)
    fam = [AffineContraction(T, 0.5, tree(3, 1.0)), AffineContraction(T, 0.8, tree(3, 2.0))]
    tr = sample_trace(T, fam, tree(1, 2.5), n_max=40, trace_intermediates=True, reference=tree(3, 1.0))
    assert_round_trip(tmp_path, T, tr)
    assert header(tr, T) == ["n", "alpha", "res_1", "res_2", "dist_p", "branch", "radius",
                             "y1_branch", "y1_radius"]


def test_header_order_and_repr_floats():
    R1 = make_space("euclidean", 1)
    K = interval(-1 / math.pi, 1 / math.pi)
    tr = sample_trace(R1, [SinMap(domain=K), XSinInv(0.5)], euclid(0.2), K=K, n_max=5, reference=euclid(0.0),
                      fixed_set=FixedSet("single_point", (euclid(0.0),)))
    text = trace_to_csv(tr, R1)
    assert text.splitlines()[0] == "n,alpha,res_1,res_2,dist_p,dist_F,x_0"
    first = text.splitlines()[1].split(",")
    assert first[0] == "1"
    assert first[-1] == repr(0.2)
    assert float(first[1]) == tr.alphas[0]


def test_last_row_has_blank_intermediates(tmp_path):
    R1 = make_space("euclidean", 1)
    K = interval(-1 / math.pi, 1 / math.pi)
    tr = sample_trace(R1, [SinMap(domain=K), XSinInv(0.5)], euclid(0.2), K=K, n_max=3, trace_intermediates=True)
    last = trace_to_csv(tr, R1).splitlines()[-1]
    assert last.endswith(",")


def test_wrong_space_rejected(tmp_path):
    R1 = make_space("euclidean", 1)
    tr = sample_trace(R1, [SinMap()], euclid(1.0), n_max=4)
    write_trace(tmp_path / "t.csv", tr, R1)
    with pytest.raises(ConfigError):
        read_trace(tmp_path / "t.csv", make_space("euclidean", 2))
    with pytest.raises(ConfigError):
        read_trace(tmp_path / "missing.csv", R1)
