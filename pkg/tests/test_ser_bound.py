import itertools
import time

import numpy as np
import pytest
from scipy.special import ndtr
from scipy.stats import multivariate_normal

from zxlink.config import paper_config
from zxlink.errors import TargetUnreachableError
from zxlink.ser_bound import (
    bound_covariance,
    bound_curve,
    derive_region_table,
    gamma_for_target,
    gamma_grid,
    paper_region_table,
    region_table,
    ser_upper_bound,
)
from zxlink.signal_chain import build_operators
from zxlink.zx_modem import block_codewords

INF = np.inf


@pytest.fixture(scope="module")
def ops3():
    return build_operators(paper_config(3))


@pytest.fixture(scope="module")
def ops2():
    return build_operators(paper_config(2))


def test_hardcoded_table_mrx3_examples():
    t = paper_region_table(3)
    b3 = t.rows_for(3)
    assert len(b3) == 1
    assert b3[0].mu_signs == (1, 1, -1, -1)
    assert b3[0].lower == (0.0, 0.0, -INF, -INF)
    assert b3[0].upper == (INF, INF, 0.0, 0.0)
    b1 = t.rows_for(1)
    assert len(b1) == 3
    assert (1, 1, -1, 1) in {r.pattern for r in b1}


def test_hardcoded_table_mrx2_examples():
    t = paper_region_table(2)
    b8 = t.rows_for(8)
    assert len(b8) == 1
    assert b8[0].mu_signs == (1, -1, -1, 1, 1)
    assert len(t.rows_for(2)) == 3
    assert t.dimension == 5
    assert t.alphabet_size == 8
    assert t.bits_per_symbol == 1.5


@pytest.mark.parametrize("source", ["paper", "derived"])
@pytest.mark.parametrize("m_rx", [2, 3])
def test_rows_are_disjoint_positive_first_orthants(source, m_rx):
    t = region_table(m_rx, source)
    for sym in t.symbols:
        rows = t.rows_for(sym)
        pats = [r.pattern for r in rows]
        assert len(set(pats)) == len(pats)
        for r in rows:
            assert r.is_orthant
            assert r.mu_signs[0] == 1
            assert r.lower[0] == 0.0
            for p, lo, hi in zip(r.pattern, r.lower, r.upper):
                assert (lo, hi) == ((0.0, INF) if p > 0 else (-INF, 0.0))


def test_patterns_partition_the_positive_half():
    # every positive-first sign pattern is credited to exactly one symbol
    for m_rx in (2, 3):
        t = derive_region_table(m_rx)
        pats = [r.pattern for r in t.rows]
        assert len(pats) == len(set(pats)) == 2 ** (t.dimension - 1)


def test_printed_mrx2_limits_differ_only_in_two_rows():
    printed = paper_region_table(2, printed=True)
    fixed = paper_region_table(2)
    diffs = [(a.symbol, a.lower, a.upper) for a, b in zip(printed.rows, fixed.rows) if a != b]
    assert len(diffs) == 2
    assert {d[0] for d in diffs} == {2, 7}
    # the b2 row leaves coordinate 5 unconstrained
    b2 = [d for d in diffs if d[0] == 2][0]
    assert (b2[1][4], b2[2][4]) == (-INF, INF)


def test_as_plotted_table_takes_only_symbol_seven_verbatim():
    plotted = region_table(2, "as-plotted")
    fixed = paper_region_table(2)
    printed = paper_region_table(2, printed=True)
    changed = [a.symbol for a, b in zip(plotted.rows, fixed.rows) if a != b]
    assert changed == [7]
    assert [r for r in plotted.rows if r.symbol == 7] == [r for r in printed.rows if r.symbol == 7]
    assert region_table(3, "as-plotted").row_set() == paper_region_table(3).row_set()


@pytest.mark.parametrize("m_rx", [2, 3])
def test_derived_table_matches_hardcoded(m_rx):
    start = time.perf_counter()
    derived = derive_region_table(m_rx)
    elapsed = time.perf_counter() - start
    assert derived.row_set() == paper_region_table(m_rx).row_set()
    assert elapsed < 1.0


def test_derived_table_single_sample_alphabet():
    t = derive_region_table(1)
    assert t.dimension == 2
    assert {r.symbol: r.pattern for r in t.rows} == {1: (1, 1), 2: (1, -1)}


def test_unknown_table_source():
    with pytest.raises(ValueError):
        region_table(3, "guess")


def test_ber_is_ser_over_bits_per_symbol(ops3, ops2):
    for ops, n_s in ((ops3, 2.0), (ops2, 1.5)):
        for r in bound_curve([0.5, 2.0], ops):
            assert abs(r.ber_ub - r.ser_ub / n_s) <= 1e-12


def test_reference_points(ops3, ops2):
    assert ser_upper_bound(2.0, ops3).ser_ub == pytest.approx(0.0576, abs=2e-3)
    assert ser_upper_bound(3.0, ops2).ser_ub == pytest.approx(0.00530, abs=5e-4)


def test_tail_is_small_at_gamma_eight(ops3, ops2):
    for ops in (ops3, ops2):
        assert ser_upper_bound(8.0, ops).ser_ub <= 1e-6


def test_monotone_over_grid(ops3):
    res = bound_curve(np.arange(0.1, 6.01, 0.1), ops3)
    ser = np.array([r.ser_ub for r in res])
    err = np.array([r.err_est for r in res])
    assert np.all(np.diff(ser) < err[1:] + err[:-1])
    assert np.all((ser >= 0) & (ser <= 1))


def test_symbol_success_probabilities_in_unit_interval(ops2):
    for r in bound_curve([0.3, 1.5, 4.0], ops2):
        assert all(0.0 <= p <= 1.0 for p in r.p_correct)
        assert r.ser_ub == pytest.approx(1 - np.mean(r.p_correct), abs=1e-12)


def test_orthant_masses_sum_to_positive_pilot(ops3):
    # summing every positive-first orthant recovers P(pilot sample > 0)
    from zxlink.mvn import MvnRectangle, mvn_rect_prob_batch

    gamma = 1.3
    t = derive_region_table(3)
    sigma = bound_covariance(ops3, t.dimension)
    for sym in t.symbols:
        mu = gamma * np.array(t.mu_signs(sym), float)
        rects = []
        for signs in itertools.product((1, -1), repeat=t.dimension - 1):
            s = np.array((1,) + signs)
            rects.append(MvnRectangle(mu, sigma, np.where(s > 0, 0.0, -INF), np.where(s > 0, INF, 0.0)))
        p, e = mvn_rect_prob_batch(rects, eps=1e-7)
        assert p.sum() == pytest.approx(ndtr(gamma / np.sqrt(sigma[0, 0])), abs=e.sum() + 1e-9)


def test_bound_matches_scipy_genz_route(ops3):
    # second route: 1 - mean of summed table rectangles, each from scipy's integrator
    gamma = 2.0
    t = derive_region_table(3)
    sigma = bound_covariance(ops3, t.dimension)
    p_correct = []
    for sym in t.symbols:
        mu = gamma * np.array(t.mu_signs(sym), float)
        total = 0.0
        for r in t.rows_for(sym):
            lo = np.array(r.lower)
            hi = np.array(r.upper)
            total += multivariate_normal.cdf(hi, mean=mu, cov=sigma, lower_limit=lo, abseps=1e-9, releps=1e-9, maxpts=10**7)
        p_correct.append(total)
    ref = 1 - np.mean(p_correct)
    ours = ser_upper_bound(gamma, ops3)
    assert abs(ours.ser_ub - ref) <= ours.err_est + 1e-7


@pytest.mark.parametrize("m_rx, block_len, gamma", [(3, 1, 2.0), (2, 2, 1.5)])
def test_bound_matches_direct_sampling_of_worst_case(m_rx, block_len, gamma, ops3, ops2):
    # third route: draw y = gamma * mu + n, count pilot flips and wrong minimum-distance decisions
    ops = ops3 if m_rx == 3 else ops2
    t = derive_region_table(m_rx)
    d = t.dimension
    sigma = bound_covariance(ops, d)
    chol = np.linalg.cholesky(sigma)
    words = block_codewords(m_rx, block_len).astype(float)
    rng = np.random.default_rng(21)
    n = 400_000
    errors = 0
    for k, word in enumerate(words):
        y = gamma * word + rng.standard_normal((n, d)) @ chol.T
        z = np.where(y >= 0, 1.0, -1.0)
        dist = np.count_nonzero(z[:, None, :] != words[None, :, :], axis=2)
        detected = np.argmin(dist, axis=1)
        errors += np.count_nonzero((z[:, 0] < 0) | (detected != k))
    ser = errors / (n * len(words))
    se = np.sqrt(ser * (1 - ser) / (n * len(words)))
    ours = ser_upper_bound(gamma, ops, table=t)
    assert abs(ours.ser_ub - ser) <= 4 * se + ours.err_est


def test_leading_and_centered_blocks_agree():
    ops = build_operators(paper_config(3, n_symbols=3))
    d = 4
    lead = bound_covariance(ops, d)
    mid = bound_covariance(ops, d, offset=(ops.noise_cov.shape[0] - d) // 2)
    assert np.abs(lead - mid).max() <= 1e-12
    a = bound_curve([1.0, 2.5], ops, sigma=lead)
    b = bound_curve([1.0, 2.5], ops, sigma=mid)
    for x, y in zip(a, b):
        assert x.ser_ub == pytest.approx(y.ser_ub, abs=x.err_est + y.err_est + 1e-12)


def test_gamma_grid():
    g = gamma_grid()
    assert g[0] == 0.05
    assert g[-1] == 8.0
    assert np.allclose(np.diff(g), 0.05)


def test_gamma_for_target_examples(ops3, ops2):
    assert gamma_for_target(1e-2, ops3) == pytest.approx(2.65, abs=0.05)
    assert gamma_for_target(1e-4, ops3) == pytest.approx(3.9, abs=0.05)
    assert gamma_for_target(1e-1, ops2) == pytest.approx(1.9, abs=0.05)


def test_gamma_for_target_brackets_crossing(ops3):
    g = gamma_for_target(1e-3, ops3)
    assert ser_upper_bound(g, ops3, eps=1e-7).ser_ub > 1e-3
    assert ser_upper_bound(g + 0.05, ops3, eps=1e-7).ser_ub <= 1e-3


def test_gamma_for_target_limits(ops3):
    assert gamma_for_target(0.95, ops3) == 0.05
    with pytest.raises(TargetUnreachableError):
        gamma_for_target(1e-30, ops3)
    with pytest.raises(ValueError):
        gamma_for_target(1.5, ops3)


def test_bound_rejects_nonpositive_gamma(ops3):
    with pytest.raises(ValueError):
        bound_curve([0.0], ops3)
