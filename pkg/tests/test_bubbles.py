import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from emdenlab.bubbles import (EIGHT_PI_E, SQRT_E, BubbleAnalyzer, aitken, average_inequality,
                              detect_peaks, extract_bubble, extrapolate, is_degenerate,
                              liouville_mass, liouville_profile, liouville_residual,
                              mup2_constants, quantization_report, source_term)
from emdenlab.exceptions import BallExitsDomain, OutOfDomain, ScaleUnderflow, UsageError
from emdenlab.geometry import DomainSpec, GridField, build_grid
from emdenlab.lane_emden import NewtonReport, SolutionRecord, log_mu2, record_from_radial


def fake_record(grid, values, p=10.0):
    u = GridField(grid, values)
    k = int(np.argmax(u.values))
    sup = float(u.values[k])
    return SolutionRecord(p, u, math.nan, sup, tuple(grid.points[k]), log_mu2(p, sup),
                          NewtonReport(0, 0.0, 1e-9))


def test_constants():
    assert EIGHT_PI_E == pytest.approx(68.3178738, abs=1e-7)
    assert SQRT_E == pytest.approx(1.6487212707, abs=1e-10)


def test_grid_profile_identities(disk64_records):
    for rec in disk64_records:
        prof = extract_bubble(rec, R=2.0)
        assert prof.tau_samples[:, 2].min() >= -rec.newton_report.tolerance * rec.p
        centre = prof.tau_grid[prof.tau_grid.shape[0] // 2, prof.tau_grid.shape[1] // 2]
        assert centre == 0.0
        assert prof.spacing <= 1.0
        rep = liouville_residual(prof)
        # the rescaled deficit satisfies the discrete equation exactly
        assert rep.eq_residual <= 10 * rec.newton_report.tolerance * rec.p / rec.sup_norm \
            + 1e-10
        assert rep.band_ok(1e-9)


def test_grid_guards(disk64_records):
    rec = disk64_records[-1]
    with pytest.raises(BallExitsDomain):
        extract_bubble(rec, R=50.0)
    with pytest.raises(ScaleUnderflow):
        extract_bubble(rec, R=2.0, min_points_per_scale=10.0)


def test_oracle_profile_converges(oracle_runs):
    dev = {p: extract_bubble(oracle_runs[p]).tau_deviation() for p in (100.0, 500.0)}
    assert dev[500.0] <= 0.05 < dev[100.0]


def test_synthetic_liouville_second_order():
    res = [liouville_residual(liouville_profile(5.0, s)).limit_residual
           for s in (0.2, 0.1, 0.05)]
    assert 3.5 < res[0] / res[1] < 4.5 and 3.5 < res[1] / res[2] < 4.5
    rep = liouville_residual(liouville_profile(5.0, 0.1))
    assert rep.eq_residual == rep.limit_residual
    assert source_term(np.array([0.0]), math.inf)[0] == 4.0


def test_liouville_mass():
    assert liouville_mass(10.0) == pytest.approx(4 * math.pi * 100 / 101)
    # trapezoid check of the closed form
    r = np.linspace(0, 10, 20001)
    f = 4 * (1 + r ** 2) ** -2 * 2 * math.pi * r
    assert np.sum((f[1:] + f[:-1]) / 2 * np.diff(r)) == pytest.approx(liouville_mass(10.0),
                                                                      rel=1e-7)


def test_average_inequality_oracle(oracle_runs):
    rep = average_inequality(oracle_runs[500.0], [0.5])
    assert 0.9 <= rep.rho[0] <= 1.1
    rhos = [average_inequality(oracle_runs[p]).rho[0] for p in (50.0, 100.0, 200.0, 500.0)]
    assert all(b > a for a, b in zip(rhos, rhos[1:]))
    with pytest.raises(OutOfDomain):
        average_inequality(oracle_runs[50.0], [1.5])


def test_average_inequality_grid_skips_small_radii(disk64_records):
    rec = disk64_records[-1]
    rep = average_inequality(rec, [rec.grid.h, 0.3])
    assert list(rep.radii) == [0.3]


def test_aitken_basics():
    assert extrapolate([(1, 2.0), (2, 2.0), (3, 2.0)]) == (2.0, 0.0)
    assert is_degenerate([(1, 2.0), (2, 2.0), (3, 2.0)])
    with pytest.raises(UsageError):
        extrapolate([(1, 1.0), (2, 2.0)])
    with pytest.raises(UsageError):
        extrapolate([(3, 1.0), (2, 2.0), (4, 1.0)])


@settings(max_examples=50, deadline=None)
@given(L=st.floats(-10, 10), c=st.floats(-50, 50).filter(lambda v: abs(v) > 1e-3))
def test_aitken_exact_on_harmonic_tail(L, c):
    vals = [L + c / p for p in (100.0, 200.0, 400.0)]
    assert aitken(*vals) == pytest.approx(L, abs=1e-9 * max(1.0, abs(L)))


@settings(max_examples=50, deadline=None)
@given(L=st.floats(-5, 5), a=st.floats(0.1, 5), q=st.floats(0.1, 0.9))
def test_aitken_exact_on_geometric(L, a, q):
    vals = [L + a * q ** k for k in range(3)]
    assume(abs(vals[2] - 2 * vals[1] + vals[0]) > 1e-6)
    assert aitken(*vals) == pytest.approx(L, abs=1e-8)


def test_peaks_on_solutions(disk64_records):
    rep = detect_peaks(disk64_records[-1])
    assert rep.n == 1 and rep.peaks[0] == (0.0, 0.0)
    none = detect_peaks(disk64_records[-1], threshold=1.01)
    assert none.no_peaks


def bumps(grid, centers, heights, width=0.05):
    v = np.zeros(grid.n_interior)
    for c, a in zip(centers, heights):
        v += a * np.exp(-((grid.points[:, 0] - c[0]) ** 2 + (grid.points[:, 1] - c[1]) ** 2)
                        / width ** 2)
    return v + 1e-3


@settings(max_examples=20, deadline=None)
@given(i1=st.integers(6, 26), j1=st.integers(6, 26), i2=st.integers(6, 26),
       j2=st.integers(6, 26), a=st.floats(0.7, 0.95))
def test_peak_detection_finds_separated_bumps(i1, j1, i2, j2, a):
    g = build_grid(DomainSpec.rectangle(1, 1), 1 / 32)
    c1 = np.array([i1, j1]) / 32
    c2 = np.array([i2, j2]) / 32
    assume(np.hypot(*(c1 - c2)) > 0.4)
    rep = detect_peaks(fake_record(g, bumps(g, [c1, c2], [1.0, a])), beta=0.2)
    assert rep.n == 2
    np.testing.assert_allclose(rep.peaks[0], c1, atol=1e-12)
    np.testing.assert_allclose(rep.peaks[1], c2, atol=1e-12)


def test_peak_merging_and_ties():
    g = build_grid(DomainSpec.rectangle(1, 1), 1 / 32)
    c1, c2 = np.array([0.25, 0.5]), np.array([0.75, 0.5])
    rec = fake_record(g, bumps(g, [c1, c2], [1.0, 1.0]))
    # equal heights: row-major order decides, and a large beta merges them
    assert detect_peaks(rec, beta=0.2).peaks[0] == (0.25, 0.5)
    assert detect_peaks(rec, beta=0.8).n == 1


def test_quantization_tables(oracle_runs):
    rows = [(p, oracle_runs[p].energy, oracle_runs[p].u0) for p in (200.0, 500.0, 1000.0)]
    rep = quantization_report(rows, masses=(oracle_runs[1000.0].u0,))
    assert rep.n_bubbles == 1
    assert rep.energy_limit == pytest.approx(EIGHT_PI_E, rel=1e-2)
    assert rep.mass_bound_ok(0.01)
    consts = mup2_constants([(p, oracle_runs[p].u0) for p in (100.0, 1000.0)])
    # log(1/mu^2) / (p log M) tends to one
    assert abs(consts[1][2] - 1) < abs(consts[0][2] - 1)


def test_analyzer(disk64, oracle_runs):
    an = BubbleAnalyzer(grid=disk64)
    rows = an.fit_transform([oracle_runs[100.0], oracle_runs[500.0]])
    assert [r["n_peaks"] for r in rows] == [1, 1]
    assert rows[1]["tau_dev_R"] < rows[0]["tau_dev_R"]
    assert not rows[1]["unresolved"]
    assert an.get_params()["R"] == 10.0


def test_analyzer_flags_unresolved(disk64_records):
    rec = disk64_records[-1]
    an = BubbleAnalyzer(R=2.0)
    ok = an.transform([rec])[0]
    assert ok["unresolved"] is False and ok["n_peaks"] == 1
    # a scale far below the spacing
    tiny = SolutionRecord(rec.p, rec.u, rec.energy, rec.sup_norm, rec.peak, -20.0,
                          rec.newton_report)
    assert an.transform([tiny])[0]["unresolved"] is True


def test_oracle_backed_record_peaks(disk64, oracle_runs):
    rec = record_from_radial(oracle_runs[200.0], disk64)
    rep = detect_peaks(rec)
    assert rep.n == 1
    assert SQRT_E - 0.1 <= rep.masses[0] <= rec.sup_norm
