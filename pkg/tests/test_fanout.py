import doctest

import pytest
from hypothesis import given, strategies as st

import gossipsim.fanout
from gossipsim.fanout import ReliabilityTarget, compute_fanout, expected_atomicity


@pytest.mark.parametrize("n,expected", [(10, 8), (250, 11)])
def test_anchor_values(n, expected):
    assert compute_fanout(ReliabilityTarget(n, 0.05, 0.99)) == expected


def test_doctests():
    assert doctest.testmod(gossipsim.fanout).failed == 0


@pytest.mark.parametrize("kwargs", [dict(n=0), dict(n=10, e=1.0), dict(n=10, e=-0.1),
                                    dict(n=10, p=0.5), dict(n=10, p=1.0)])
def test_domain_errors(kwargs):
    with pytest.raises(ValueError):
        ReliabilityTarget(**kwargs)


def test_n100_value_passes_simulation_oracle():
    target = ReliabilityTarget(100, 0.05, 0.99)
    f = compute_fanout(target)
    assert f == 10
    est = expected_atomicity(100, f, 5, runs=200, loss=target.e, seed=100)
    assert est.estimate >= target.p


targets = st.builds(ReliabilityTarget, n=st.integers(1, 10**6), e=st.floats(0, 0.9),
                    p=st.floats(0.51, 0.9999))


@given(t=targets, dn=st.integers(0, 10**5))
def test_monotone_in_n(t, dn):
    assert compute_fanout(ReliabilityTarget(t.n + dn, t.e, t.p)) >= compute_fanout(t)


@given(t=targets, dp=st.floats(0, 0.4))
def test_monotone_in_p(t, dp):
    p2 = min(t.p + dp, 0.9999)
    assert compute_fanout(ReliabilityTarget(t.n, t.e, p2)) >= compute_fanout(t)


@given(t=targets, de=st.floats(0, 0.09))
def test_monotone_in_e(t, de):
    assert compute_fanout(ReliabilityTarget(t.n, t.e + de, t.p)) >= compute_fanout(t)


def test_flooding_is_exactly_atomic():
    est = expected_atomicity(12, 11, 1, runs=200)
    assert est.estimate == 1.0 and est.stderr == 0.0 and est.mean_receivers == 1.0


def test_single_chain_cannot_cover():
    assert expected_atomicity(10, 1, 1, runs=200).estimate < 0.5


def test_rejects_bad_parameters():
    with pytest.raises(ValueError):
        expected_atomicity(10, 0, 3)
    with pytest.raises(ValueError):
        expected_atomicity(10, 2, 3, runs=0)


@pytest.mark.slow
def test_n250_anchor_shape():
    assert expected_atomicity(250, 8, 5, runs=200).estimate >= 0.9
    assert expected_atomicity(250, 3, 5, runs=200).estimate < 0.5


def test_non_decreasing_in_f_and_r():
    grid = {}
    for f in (2, 4, 6):
        for r in (2, 4):
            grid[f, r] = expected_atomicity(30, f, r, runs=200, seed=9)
    def noise(a, b):
        return 2 * (a.stderr ** 2 + b.stderr ** 2) ** 0.5
    for (f, r), est in grid.items():
        for (f2, r2), other in grid.items():
            if f2 >= f and r2 >= r:
                assert other.estimate >= est.estimate - noise(est, other)
