import math
from functools import lru_cache

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from helsonlab import multiplicative as mc
from helsonlab.errors import DomainError, PreconditionError, ResourceError
from helsonlab.rng import PhaseAssignment, Seed, alpha_at_prime


@lru_cache(maxsize=1)
def _table():
    return mc.build_table(PhaseAssignment(Seed(17, 3)), 10**6)


@pytest.fixture(scope="module")
def table():
    return _table()


def alpha_by_factorization(assignment, n):
    z = 1.0 + 0.0j
    for p, k in sympy.factorint(n).items():
        z *= alpha_at_prime(assignment, int(p)) ** k
    return z


def test_alpha_one_and_twelve(table):
    assert table.alpha(1) == 1
    a2, a3 = table.alpha(2), table.alpha(3)
    assert abs(table.alpha(12) - a2 * a2 * a3) <= 1e-12


def test_alpha_matches_trial_division(table):
    ns = np.random.default_rng(0).integers(1, 10**6 + 1, size=2000)
    for n in ns:
        assert abs(table.alpha(int(n)) - alpha_by_factorization(table.assignment, int(n))) <= 1e-10


def test_unit_modulus_everywhere(table):
    assert np.max(np.abs(np.abs(table.values[1:]) - 1.0)) <= 1e-10


def test_spf_recurrence(table):
    n = np.arange(2, table.N + 1)
    spf = table.spf[2:]
    lhs = table.values[n]
    rhs = table.values[n // spf] * table.values[spf]
    assert np.max(np.abs(lhs - rhs)) <= 1e-12


@given(st.integers(1, 1000), st.integers(1, 1000))
@settings(max_examples=200, deadline=None)
def test_complete_multiplicativity(n, m):
    t = _table()
    assert abs(t.alpha(n * m) - t.alpha(n) * t.alpha(m)) <= 1e-10


def test_prefix_matches_direct_sum(table):
    for x in (1, 2, 10, 997, 12345, 10**6):
        direct = complex(np.sum(table.values[1 : x + 1]))
        assert abs(mc.partial_sum(table, x).value - direct / math.sqrt(x)) <= 1e-10 * math.sqrt(x)


def test_partial_sum_edges(table):
    assert mc.partial_sum(table, 1).value == 1
    r = mc.partial_sum(table, 2.5)
    assert r.value == pytest.approx((1 + table.alpha(2)) / math.sqrt(2.5))
    assert abs(r.raw) <= math.floor(2.5)
    with pytest.raises(DomainError):
        mc.partial_sum(table, table.N + 1)
    full = mc.smooth_mask(1000, 1000)
    assert mc.partial_sum(table, 1000, full).value == pytest.approx(mc.partial_sum(table, 1000).value, abs=1e-12)


def test_smooth_and_rough_masks():
    sm = mc.smooth_mask(100, 5).mask
    assert sm[1] and sm[96] and not sm[7] and not sm[0]
    rm = mc.rough_mask(100, 5)
    assert rm[1] and rm[49] and not rm[10]
    assert int(sm.sum()) == 34


def test_build_table_errors(monkeypatch):
    with pytest.raises(DomainError):
        mc.build_table(PhaseAssignment(Seed(0)), 0)
    monkeypatch.setenv("HELSONLAB_MEMORY_CAP", "1000")
    with pytest.raises(ResourceError):
        mc.build_table(PhaseAssignment(Seed(0)), 10**5)


def test_orthogonality_diagonal_exact():
    e = mc.check_orthogonality(7, 7, 1000, 1)
    assert e.mean == 1 and e.stderr == 0


@pytest.mark.parametrize("n,m", [(2, 3), (4, 2)])
def test_orthogonality_off_diagonal(n, m):
    e = mc.check_orthogonality(n, m, 10**5, 5)
    assert e.within(0) and e.stderr < 0.0033


def test_conditional_orthogonality():
    s = Seed(3, 1)
    assert mc.check_conditional_orthogonality(11, 11, 10, s, 100).mean == 1
    for n, m in ((11, 13), (121, 11)):
        e = mc.check_conditional_orthogonality(n, m, 10, s, 10**5)
        assert e.within(0)
    with pytest.raises(PreconditionError):
        mc.check_conditional_orthogonality(6, 11, 10, s, 10)


def test_splitting_identity_small_and_degenerate(table):
    assert mc.check_splitting_identity(table, 100, 7).residual <= 1e-9
    r = mc.check_splitting_identity(table, 50, 60)
    assert r.residual <= 1e-15 and r.terms == 1


def test_conditional_second_moment_degenerate():
    c = mc.check_conditional_second_moment(30, 40, Seed(2, 2), 200)
    assert c.lhs == pytest.approx(c.rhs, rel=1e-12) and c.lhs_stderr <= 1e-12


def test_conditional_second_moment_small_instance():
    lhs, rhs, rel = mc.check_conditional_second_moment(50, 7, Seed(6, 0), 10**6)
    assert rel <= 5e-3


def test_second_moment_split_adds_up(table):
    x, y = 10**4, 31.0
    s = mc.second_moment_split(table, x, y, x**0.75)
    assert s.total == pytest.approx(mc.conditional_second_moment_rhs(table, x, y), rel=1e-12)
    assert s.t2_envelope >= 0


def test_expected_t1_matches_average_of_samples():
    x, y = 2000, 11.0
    T = x**0.75
    vals = [mc.second_moment_split(mc.build_table(PhaseAssignment(Seed(9, r)), x), x, y, T).t1 for r in range(400)]
    m, se = np.mean(vals), np.std(vals, ddof=1) / math.sqrt(len(vals))
    assert abs(m - mc.expected_t1(x, y, T)) <= 4 * se


def test_batch_sums_agree_with_tables():
    xs = [1, 10, 1000, 5000]
    sums = mc.batch_partial_sums(21, [0, 4, 9], xs, chunk=2)
    for i, r in enumerate((0, 4, 9)):
        t = mc.build_table(PhaseAssignment(Seed(21, r)), 5000)
        for j, x in enumerate(xs):
            assert abs(sums[i, j] - t.prefix[x]) <= 1e-9


def test_batch_sums_independent_of_chunking():
    a = mc.batch_partial_sums(3, np.arange(10), [100, 1000], chunk=3)
    b = mc.batch_partial_sums(3, np.arange(10), [1000, 100], chunk=10)
    assert np.array_equal(a, b[:, ::-1])


def test_second_moment_of_sum():
    xs = np.array([1000])
    s = mc.batch_partial_sums(0, np.arange(20000), xs)
    v = np.abs(s[:, 0]) ** 2 / 1000
    assert abs(v.mean() - 1.0) <= 3 * v.std(ddof=1) / math.sqrt(v.size)


def test_to_record_schema():
    rec = mc.check_orthogonality(2, 3, 100, 1).to_record("orth", {"n": 2, "m": 3}, Seed(1))
    assert set(rec) == {"op", "params", "seed", "estimate", "stderr", "replicas"}


def test_sums_csv():
    text = mc.sums_to_csv(1, [0], [4], np.array([[2 + 0j]]))
    assert text.splitlines() == ["master,replica,x,re,im", "1,0,4,1.0,0.0"]
