import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import oscillator, random_system, scalar_benchmark
from tdscert import (
    DEFAULT_CONFIG,
    LyapunovConditionViolated,
    OrderTooLarge,
    TimeDelaySystem,
    VerdictKind,
    build_MN,
    certificate_matrix,
    find_flip_interval,
    hierarchical_sweep,
    theorem_test,
    unstable_regions,
)
from tdscert.certificate import (
    CertificateMatrix,
    assemble_P,
    leading_min_eigenvalues,
    test_positivity,
    u_coefficients,
)
from tdscert.exceptions import DimensionMismatch, NumericalFailure
from tdscert.legendre import build_legendre_table


def test_verdict_strings():
    assert str(VerdictKind.STABLE) == "Stable"
    assert VerdictKind.UNSTABLE == "Unstable"
    assert str(VerdictKind.LYAPUNOV_CONDITION_VIOLATED) == "LyapunovConditionViolated"


def test_P_structure():
    sys = oscillator(10.0, 0.552)
    cert = certificate_matrix(sys, 6)
    m = sys.m
    assert cert.P.shape == (7 * m, 7 * m)
    assert np.array_equal(cert.P, cert.P.T)
    assert cert.asymmetry < 1e-12
    data = build_MN(sys)
    assert np.allclose(cert.P[:m, :m], data.U(0.0))
    # Gram term on the diagonal blocks dominates for tiny Ad
    weak = TimeDelaySystem(sys.A, 1e-9 * sys.Ad, sys.h)
    P = certificate_matrix(weak, 3).P
    for j in range(3):
        blk = P[(j + 1) * m : (j + 2) * m, (j + 1) * m : (j + 2) * m]
        assert np.allclose(blk, sys.h / (2 * j + 1) * np.eye(m), atol=1e-12)


def test_full_and_reduced_tables_give_same_P():
    sys = scalar_benchmark(0.604)
    data = build_MN(sys)
    full = build_legendre_table(data.M, sys.h, 8)
    P_full = assemble_P(sys, data, u_coefficients(data, full, 8), 8).P
    assert np.allclose(P_full, certificate_matrix(sys, 8).P, atol=1e-13)
    with pytest.raises(DimensionMismatch):
        assemble_P(sys, data, u_coefficients(data, full, 4), 6)
    other = build_legendre_table(data.M, sys.h, 8, right=np.ones(2))
    with pytest.raises(DimensionMismatch):
        u_coefficients(data, other, 8)


def test_positivity_band():
    def cert(eigs):
        P = np.diag(eigs)
        return CertificateMatrix(len(eigs) - 1, 1, P, min(eigs), 0.0, {}, max(eigs))

    assert test_positivity(cert([1.0, 0.5]), 1e-10)
    res = test_positivity(cert([1.0, 1e-12]), 1e-10)
    assert not res and res.inconclusive
    res = test_positivity(cert([1.0, -1.0]), 1e-10)
    assert not res and not res.inconclusive and res.margin == -1.0
    assert res.threshold == pytest.approx(2e-10)


def test_leading_blocks_are_lower_orders():
    sys = scalar_benchmark(0.3)
    big = certificate_matrix(sys, 10)
    small = certificate_matrix(sys, 4)
    assert np.allclose(big.leading(4).P, small.P, atol=1e-13)
    mins = leading_min_eigenvalues(big)
    assert len(mins) == 10
    assert all(b <= a + 1e-12 for a, b in zip(mins, mins[1:]))


def test_theorem_and_sweep_agree_on_scalar_family():
    for h in (0.1, 0.4, 0.604, 0.605, 0.9, 2.0):
        a = theorem_test(scalar_benchmark(h))
        b = hierarchical_sweep(scalar_benchmark(h))
        assert a.kind == b.kind
        assert a.n_star == b.n_star
        assert a.first_failing_order == b.first_failing_order
        assert (a.kind == "Stable") == (h < 0.6046)


def test_sweep_records_margins_and_stops_early():
    v = hierarchical_sweep(scalar_benchmark(2.0))
    assert v.kind == "Unstable" and v.mode == "sweep"
    assert v.order_tested == v.first_failing_order == len(v.order_margins)
    assert v.order_margins[-1] < 0
    stable = hierarchical_sweep(scalar_benchmark(0.1))
    assert len(stable.order_margins) == stable.n_star
    assert all(m > 0 for m in stable.order_margins)


def test_sweep_cap_is_inconclusive():
    v = hierarchical_sweep(scalar_benchmark(0.604), n_max=3)
    assert v.kind == "Inconclusive" and v.order_tested == 3
    cfg = DEFAULT_CONFIG.replace(order_cap=5)
    with pytest.raises(OrderTooLarge):
        theorem_test(scalar_benchmark(2.0), cfg)
    with pytest.raises(OrderTooLarge):
        hierarchical_sweep(scalar_benchmark(2.0), config=cfg)
    # with an explicit n_max the cap does not stop the low-order search
    v = hierarchical_sweep(scalar_benchmark(2.0), n_max=8, config=cfg)
    assert v.kind == "Unstable" and v.n_star is None


def test_lyapunov_condition_propagates():
    with pytest.raises(LyapunovConditionViolated):
        theorem_test(TimeDelaySystem([[0.0]], [[0.0]], 1.0))


def test_unstable_regions_monotone_and_matches_sweep():
    for K, h in [(1.0, 0.3), (10.0, 0.553), (20.0, 1.5), (30.0, 2.0)]:
        sys = oscillator(K, h)
        regions = unstable_regions(sys, 5)
        assert regions == sorted(regions)
        v = hierarchical_sweep(sys, n_max=5)
        if any(regions):
            assert v.first_failing_order == regions.index(True) + 1


def test_flip_interval():
    lo, hi = find_flip_interval(scalar_benchmark(0.5), 0.5, 0.7, 1e-4)
    assert hi - lo <= 1e-4 and lo <= 0.6045997880780726 <= hi
    with pytest.raises(ValueError):
        find_flip_interval(scalar_benchmark(0.5), 0.7, 0.9)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 3), st.floats(0.05, 2.0), st.integers(0, 2**31 - 1))
def test_property_interlacing_and_persistence(m, h, seed):
    sys = random_system(np.random.default_rng(seed), m, h, scale=1.5)
    try:
        cert = certificate_matrix(sys, 12)
    except (LyapunovConditionViolated, NumericalFailure):
        return
    theta = DEFAULT_CONFIG.positivity_theta
    blocks = [cert.leading(k) for k in range(13)]
    failed = False
    for lo, hi in zip(blocks, blocks[1:]):
        assert hi.min_eig <= lo.min_eig + 1e-10 * (1 + hi.norm)
        res = test_positivity(hi, theta)
        if failed:
            assert not res.is_positive
        failed = failed or (not res.is_positive and not res.inconclusive)


def test_delay_free_verdict_matches_eigenvalues():
    rng = np.random.default_rng(11)
    for _ in range(6):
        A = rng.normal(size=(2, 2))
        sys = TimeDelaySystem(A, np.zeros((2, 2)), 0.5)
        try:
            v = theorem_test(sys)
        except LyapunovConditionViolated:
            continue
        assert v.is_stable == (np.linalg.eigvals(A).real.max() < 0)
