import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nwnrc.signals import (
    LorenzParams,
    NormalizationStats,
    fit_normalization,
    fourier_square_modes,
    lorenz_integrate,
    lorenz_rhs,
    lorenz_series,
    normalize,
    read_trajectory,
    write_trajectory,
)

# 4/pi * sum_{k=1..10} (-1)^(k+1) / (2k-1), summed by hand
TEN_MODE_QUARTER_PERIOD = 0.96825


def fine_reference(y0, t_end, h=1e-6, sigma=10.0, rho=28.0, beta=8 / 3):
    y = np.array(y0, dtype=float)
    for _ in range(int(round(t_end / h))):
        k1 = lorenz_rhs(y, sigma, rho, beta)
        k2 = lorenz_rhs(y + h / 2 * k1, sigma, rho, beta)
        k3 = lorenz_rhs(y + h / 2 * k2, sigma, rho, beta)
        k4 = lorenz_rhs(y + h * k3, sigma, rho, beta)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def test_fixed_point():
    y = lorenz_integrate(LorenzParams(), 100, y0=(0.0, 0.0, 0.0))
    assert np.all(y == 0.0)


# Classical RK4 has a local truncation error of 7.07e-8 at this point
# (confirmed against DOP853 at rtol 1e-14), so the 1e-9 target cannot hold
# for the scheme itself.
ONE_STEP_RK4_ERROR = 7.065e-8


@pytest.mark.xfail(strict=True, reason="RK4 local error at dt=0.005 is 7.07e-8, above 1e-9")
def test_one_step_within_1e9_of_fine_oracle():
    y = lorenz_integrate(LorenzParams(dt=0.005), 1)
    ref = fine_reference((1.0, 1.0, 1.0), 0.005)
    assert np.max(np.abs(y[1] - ref)) < 1e-9


def test_one_step_error_is_rk4_truncation():
    y = lorenz_integrate(LorenzParams(dt=0.005), 1)
    ref = fine_reference((1.0, 1.0, 1.0), 0.005)
    assert np.max(np.abs(y[1] - ref)) == pytest.approx(ONE_STEP_RK4_ERROR, rel=1e-3)


def test_rk4_step_by_hand():
    h, y = 0.005, np.ones(3)
    k1 = np.array([10 * (y[1] - y[0]), y[0] * (28 - y[2]) - y[1], y[0] * y[1] - 8 / 3 * y[2]])
    y2 = y + h / 2 * k1
    k2 = np.array([10 * (y2[1] - y2[0]), y2[0] * (28 - y2[2]) - y2[1], y2[0] * y2[1] - 8 / 3 * y2[2]])
    y3 = y + h / 2 * k2
    k3 = np.array([10 * (y3[1] - y3[0]), y3[0] * (28 - y3[2]) - y3[1], y3[0] * y3[1] - 8 / 3 * y3[2]])
    y4 = y + h * k3
    k4 = np.array([10 * (y4[1] - y4[0]), y4[0] * (28 - y4[2]) - y4[1], y4[0] * y4[1] - 8 / 3 * y4[2]])
    want = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    assert np.allclose(lorenz_integrate(LorenzParams(), 1)[1], want, rtol=1e-15, atol=1e-15)


def test_order_four_convergence():
    ref = fine_reference((1.0, 1.0, 1.0), 0.005)
    err = [np.max(np.abs(lorenz_integrate(LorenzParams(dt=0.005 / n), n)[-1] - ref)) for n in (1, 2)]
    assert 12 <= err[0] / err[1] <= 20


def test_shape_and_start():
    y = lorenz_integrate(LorenzParams(), 10)
    assert y.shape == (11, 3) and y[0].tolist() == [1.0, 1.0, 1.0]
    s = lorenz_series(LorenzParams(), 10, spin_up=20)
    assert np.array_equal(s[0], lorenz_integrate(LorenzParams(), 20)[-1])


def test_divergence_reports_step():
    with pytest.raises(FloatingPointError, match="step"):
        lorenz_integrate(LorenzParams(dt=5.0), 100)
    with pytest.raises(ValueError):
        lorenz_integrate(LorenzParams(), 3, y0=(math.nan, 0, 0))
    with pytest.raises(ValueError):
        LorenzParams(dt=0)


def test_two_point_zscore():
    z, st_ = normalize(np.array([[-1.0], [1.0]]), 0.2)
    assert z.ravel().tolist() == pytest.approx([-0.2, 0.2])
    assert st_.mean[0] == 0.0 and st_.std[0] == 1.0


def test_lorenz_normalisation():
    raw = lorenz_series(LorenzParams(), 27000)
    z, _ = normalize(raw, 0.2)
    assert np.all(np.abs(z.mean(axis=0)) < 1e-10)
    assert np.all(np.abs(z.std(axis=0) - 0.2) < 1e-10)


@given(arrays(np.float64, (20, 3), elements=st.floats(-1e3, 1e3)), st.floats(0.01, 5))
def test_normalization_round_trip(raw, scale):
    raw = raw + np.arange(20)[:, None]  # never constant
    z, stats = normalize(raw, scale)
    back = stats.inverse(z)
    assert np.allclose(back, raw, rtol=1e-12, atol=1e-12 * np.abs(raw).max())


def test_constant_column_rejected():
    with pytest.raises(ValueError):
        fit_normalization(np.ones((5, 2)))
    with pytest.raises(ValueError):
        NormalizationStats(np.zeros(1), np.zeros(1))


def test_fourier_modes():
    f = fourier_square_modes(10, 2.0, [0.0, 0.5])
    assert np.all(f[0] == 0.0)
    assert f[1, 0] == pytest.approx(4 / np.pi)
    series = 4 / math.pi * sum((-1) ** (k + 1) / (2 * k - 1) for k in range(1, 11))
    assert f[1].sum() == pytest.approx(series, rel=1e-12)
    assert f[1].sum() == pytest.approx(TEN_MODE_QUARTER_PERIOD, abs=5e-6)
    with pytest.raises(ValueError):
        fourier_square_modes(3, 0.0, [0.0])


def test_fourier_converges_to_square_wave():
    t = np.array([0.3, 0.7, 1.3, 1.6])
    f = fourier_square_modes(4000, 2.0, t).sum(axis=1)
    assert np.allclose(f, [1, 1, -1, -1], atol=2e-3)


def test_trajectory_round_trip(tmp_path):
    y = lorenz_series(LorenzParams(), 50, spin_up=10)
    t = np.arange(51) * 0.005
    p = tmp_path / "traj.csv"
    write_trajectory(p, t, y)
    assert p.read_text().splitlines()[0] == "t,y1,y2,y3"
    t2, y2 = read_trajectory(p)
    assert np.array_equal(t2, t) and np.array_equal(y2, y)


def test_long_run_bounded():
    y = lorenz_integrate(LorenzParams(), 1_000_000, y0=(1.0, 1.0, 20.0))
    assert np.max(np.abs(y)) < 60


def test_modes_orthogonal_over_whole_periods():
    t = np.arange(4000) * 0.001  # two periods of 2 s
    f = fourier_square_modes(10, 2.0, t)
    G = f.T @ f
    off = G - np.diag(np.diag(G))
    assert np.max(np.abs(off)) < 1e-8 * np.max(np.diag(G))
