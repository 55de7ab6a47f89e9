import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helsonlab import concentration as cc
from helsonlab.errors import DomainError
from helsonlab.rng import phase_matrix


def test_hoeffding_unit_mgf():
    # E exp(cos theta) = I_0(1) = 1.2661 <= e^{1/2}
    assert cc.hoeffding_bound([1.0], lam=1.0) == pytest.approx(math.exp(0.5))
    assert np.i0(1.0) <= cc.hoeffding_bound([1.0], lam=1.0)


def test_hoeffding_tail_edges():
    assert cc.hoeffding_bound([1.0, 2.0], u=0.0) == 2.0
    assert cc.hoeffding_bound([0.0], u=1.0) == 0.0
    assert cc.hoeffding_bound([1.0] * 100, u=10.0) == pytest.approx(2 * math.exp(-0.5))
    for kw in ({}, {"lam": 1.0, "u": 1.0}, {"u": -1.0}):
        with pytest.raises(DomainError):
            cc.hoeffding_bound([1.0], **kw)
    with pytest.raises(DomainError):
        cc.hoeffding_bound([-1.0], lam=1.0)


def test_hoeffding_tail_holds_for_cosine_sums():
    theta = phase_matrix(1, np.arange(20_000), np.arange(100))
    s = np.cos(theta).sum(axis=1)
    for u in (5.0, 10.0, 15.0, 20.0):
        emp = np.mean(np.abs(s) >= u)
        assert emp <= cc.hoeffding_bound(np.ones(100), u=u)


@given(st.floats(0.01, 10), st.floats(0.001, 5))
@settings(max_examples=100, deadline=None)
def test_cover_number_bound(length, r):
    n = cc.cover_number(length, r)
    assert n >= 1
    # n balls of radius r with centres spaced 2r/ (2 sqrt 2) apart in t cover the interval
    assert (n - 1) * r >= cc.METRIC_SCALE * length - r


def test_cover_number_errors():
    with pytest.raises(DomainError):
        cc.cover_number(1.0, 0.0)
    with pytest.raises(DomainError):
        cc.dudley_integral(0.0)


def test_dudley_homogeneity_and_shrinkage():
    base = cc.dudley_integral(1.0)
    assert base == pytest.approx(cc.METRIC_SCALE * cc.dudley_constant(), rel=1e-9)
    for L in (0.1, 0.5, 2.0):
        assert cc.dudley_integral(L) == pytest.approx(L * base, rel=1e-9)
    assert cc.dudley_integral(1e-9) < 1e-8


def test_dudley_constant_resolution_and_quadrature():
    from scipy.integrate import quad

    fine, coarse = cc.dudley_constant(), cc.dudley_constant(10**6)
    assert abs(fine - coarse) <= 1e-6
    # independent check: integrate each constant piece on (1/(k+1), 1/k] for the
    # first pieces, then the remaining mass sits on (0, 1/K]
    K = 200
    head = sum(quad(lambda u: math.sqrt(math.log1p(math.floor(1 / u))), 1 / (k + 1), 1 / k)[0]
               for k in range(1, K + 1))
    tail = cc.dudley_constant() - head
    assert 0 < tail <= math.sqrt(math.log1p(10**8)) / K
    assert 1.0 < fine < 1.2


def test_chaining_budget():
    b = cc.chaining_budget(0.5)
    assert b.metric_scale == cc.METRIC_SCALE
    assert b.gamma2_upper == b.dudley == pytest.approx(cc.dudley_integral(0.5))
    assert b.cover_number(0.1) == cc.cover_number(0.5, 0.1)
