import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nwnrc.readout import RidgeConfig, TrainedReadout, predict, read_readout, ridge_fit, write_readout


def normal_equations(R, Y, lam):
    return np.linalg.solve(R.T @ R + lam * np.eye(R.shape[1]), R.T @ Y).T


def test_exact_interpolation():
    Q, _ = np.linalg.qr(np.random.default_rng(0).normal(size=(6, 6)))
    out = ridge_fit(Q, Q, RidgeConfig(0.0, 0))
    assert np.allclose(out.W_out, np.eye(6), atol=1e-12)


def test_zero_targets():
    R = np.random.default_rng(1).normal(size=(30, 5))
    out = ridge_fit(R, np.zeros((30, 3)), RidgeConfig(1e-6, 0))
    assert np.all(out.W_out == 0.0)


def test_matches_normal_equations():
    rng = np.random.default_rng(2)
    R, Y = rng.normal(size=(50, 8)), rng.normal(size=(50, 3))
    W = ridge_fit(R, Y, RidgeConfig(1e-6, 0)).W_out
    ref = normal_equations(R, Y, 1e-6)
    assert np.max(np.abs(W - ref)) / np.max(np.abs(ref)) < 1e-8


@given(n=st.integers(1, 50), extra=st.integers(1, 80), lam=st.floats(1e-8, 10), seed=st.integers(0, 2**31))
def test_matches_normal_equations_property(n, extra, lam, seed):
    rng = np.random.default_rng(seed)
    R, Y = rng.normal(size=(n + extra, n)), rng.normal(size=(n + extra, 3))
    W = ridge_fit(R, Y, RidgeConfig(lam, 0)).W_out
    ref = normal_equations(R, Y, lam)
    assert np.max(np.abs(W - ref)) <= 1e-8 * np.max(np.abs(ref))


def test_washout_drops_rows():
    rng = np.random.default_rng(3)
    R, Y = rng.normal(size=(40, 4)), rng.normal(size=(40, 2))
    a = ridge_fit(R, Y, RidgeConfig(1e-3, 10))
    b = ridge_fit(R[10:], Y[10:], RidgeConfig(1e-3, 0))
    assert np.array_equal(a.W_out, b.W_out)
    assert a.training_rows == 30


def test_fit_errors():
    R = np.ones((5, 2))
    with pytest.raises(ValueError):
        ridge_fit(R, np.ones((5, 1)), RidgeConfig(1e-6, 5))
    with pytest.raises(ValueError):
        ridge_fit(R, np.ones((4, 1)))
    bad = R.copy()
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        ridge_fit(bad, np.ones((5, 1)), RidgeConfig(1e-6, 0))
    with pytest.raises(ValueError):
        RidgeConfig(-1.0)
    with pytest.raises(ValueError):
        RidgeConfig(1.0, -2)


def test_predict_examples():
    cfg = RidgeConfig()
    zero = TrainedReadout(np.zeros((3, 4)), cfg, 1)
    u = np.array([1.0, 2.0, 3.0])
    assert np.array_equal(predict(zero, np.ones(4), u), u)
    toy = TrainedReadout(np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]), cfg, 1)
    assert predict(toy, np.zeros(2), u).tolist() == u.tolist()
    assert predict(toy, np.array([0.2, -0.1]), u) == pytest.approx([1.2, 1.9, 3.0])
    with pytest.raises(ValueError):
        predict(toy, np.zeros(3), u)
    with pytest.raises(ValueError):
        predict(toy, np.zeros(2), u[:2])


def test_readout_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    out = ridge_fit(rng.normal(size=(40, 6)), rng.normal(size=(40, 3)), RidgeConfig(3.3e-7, 7), wiring_seed=2**62 + 5)
    p = tmp_path / "readout.csv"
    write_readout(out, p)
    head = p.read_text().splitlines()[0]
    assert "tikhonov=3.3e-07" in head and "washout_steps=7" in head and f"wiring_seed={2**62 + 5}" in head
    back = read_readout(p)
    assert np.array_equal(back.W_out, out.W_out)
    assert back.config == out.config and back.wiring_seed == out.wiring_seed
    assert back.training_rows == out.training_rows


@given(seed=st.integers(0, 10**6), lams=st.lists(st.floats(0, 100), min_size=2, max_size=6))
def test_monotone_shrinkage(seed, lams):
    rng = np.random.default_rng(seed)
    R, Y = rng.normal(size=(30, 6)), rng.normal(size=(30, 2))
    norms = [np.linalg.norm(ridge_fit(R, Y, RidgeConfig(l, 0)).W_out) for l in sorted(lams)]
    assert all(b <= a * (1 + 1e-10) + 1e-14 for a, b in zip(norms, norms[1:]))


@given(seed=st.integers(0, 10**6), row=st.integers(0, 9))
def test_washout_rows_cannot_matter(seed, row):
    rng = np.random.default_rng(seed)
    R, Y = rng.normal(size=(40, 5)), rng.normal(size=(40, 3))
    base = ridge_fit(R, Y, RidgeConfig(1e-6, 10)).W_out
    R2, Y2 = R.copy(), Y.copy()
    R2[row] = rng.normal(size=5) * 1e6
    Y2[row] = np.nan
    assert np.array_equal(ridge_fit(R2, Y2, RidgeConfig(1e-6, 10)).W_out, base)
