import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trailmark import preprocess as pp
from trailmark import trajectory_io as tio
from trailmark.errors import BadWindow, ChannelTooSparse, EmptyInput, TooFewFrames

from conftest import make_trial


def dog_xy(trial):
    return np.array([(f.dog.x, f.dog.y) if f.dog else (np.nan, np.nan) for f in trial.frames])


def series(tid, dog, person=None, fps=24.0):
    dog = np.asarray(dog, dtype=float)
    person = np.full_like(dog, 0.5) if person is None else np.asarray(person, dtype=float)
    return pp.TrialSeries(tid, pp.Trajectory(dog, fps), pp.Trajectory(person, fps))


def test_resample_identity_at_native_rate(rng):
    pts = [tuple(p) for p in rng.random((30, 2))]
    t = make_trial(pts, fps=24)
    out = pp.resample(t, 24)
    assert np.allclose(dog_xy(out), np.array(pts), atol=1e-12)


def test_resample_upsamples_linearly():
    t = make_trial([(0, 0), (1, 1)], fps=12)
    out = pp.resample(t, 24)
    assert len(out.frames) == 3
    assert out.frames[1].timestamp_s == pytest.approx(1 / 24)
    assert (out.frames[1].dog.x, out.frames[1].dog.y) == pytest.approx((0.5, 0.5))


def test_resample_too_few_frames():
    with pytest.raises(TooFewFrames):
        pp.resample(make_trial([(0.1, 0.1)]), 24)


def test_resample_matches_interp_oracle(rng):
    # fully detected 30 fps trial; every grid point is plain linear interpolation
    n = 61
    pts = rng.random((n, 2))
    t = make_trial([tuple(p) for p in pts], fps=30)
    out = pp.resample(t, 24)
    grid = np.arange(len(out.frames)) / 24
    raw_t = np.arange(n) / 30
    oracle = np.column_stack([np.interp(grid, raw_t, pts[:, a]) for a in range(2)])
    assert len(out.frames) == 49
    assert np.allclose(dog_xy(out), oracle, atol=1e-12)


def test_resample_keeps_gap_missing():
    t = make_trial([(0, 0), None, None, (0.3, 0.3)], fps=24)
    out = pp.resample(t, 48)
    xy = dog_xy(out)
    # grid points bracketed only by undetected raw frames stay missing
    assert np.isnan(xy[3]).all() and np.isnan(xy[4]).all()
    assert np.allclose(xy[0], 0) and np.allclose(xy[6], 0.3)


@settings(max_examples=30, deadline=None)
@given(st.integers(5, 40), st.sampled_from([10, 15, 24, 25, 30]), st.sampled_from([12, 24, 30]),
       st.integers(0, 10_000))
def test_resample_idempotent(n, fps, target, seed):
    pts = np.random.default_rng(seed).random((n, 2))
    t = make_trial([tuple(p) for p in pts], fps=fps)
    once = pp.resample(t, target)
    twice = pp.resample(once, target)
    assert len(once.frames) == len(twice.frames)
    assert np.allclose(dog_xy(once), dog_xy(twice), atol=1e-9, equal_nan=True)


def test_fill_interior_midpoint():
    out = pp.fill_gaps(make_trial([(0, 0), None, (0.2, 0.2)]))
    assert (out.frames[1].dog.x, out.frames[1].dog.y) == pytest.approx((0.1, 0.1))


def test_fill_trailing_extrapolates():
    out = pp.fill_gaps(make_trial([(0, 0), (0.1, 0.1), None]))
    assert (out.frames[2].dog.x, out.frames[2].dog.y) == pytest.approx((0.2, 0.2))


def test_fill_leading_extrapolates_and_clamps():
    out = pp.fill_gaps(make_trial([None, None, (0.1, 0.5), (0.3, 0.5)]))
    assert out.frames[1].dog.x == pytest.approx(0.0)  # -0.1 clamped
    assert out.frames[0].dog.x == 0.0


def test_fill_no_gaps_identity():
    t = make_trial([(0.1, 0.2), (0.3, 0.4), (0.5, 0.6)])
    assert pp.fill_gaps(t) == t


def test_fill_too_sparse():
    with pytest.raises(ChannelTooSparse):
        pp.fill_gaps(make_trial([(0.1, 0.1), None, None]))


@settings(max_examples=40, deadline=None)
@given(st.integers(4, 40), st.data())
def test_fill_constant_velocity_exact(n, data):
    x0 = data.draw(st.floats(0.0, 0.3))
    v = data.draw(st.floats(0.0, 0.6 / n))
    truth = np.array([(x0 + v * i, 0.5) for i in range(n)])
    missing = data.draw(st.sets(st.integers(1, n - 2), max_size=n - 2))
    pts = [None if i in missing else tuple(truth[i]) for i in range(n)]
    out = pp.fill_gaps(make_trial(pts))
    assert tio.detection_coverage(out) == 1.0
    assert np.max(np.abs(dog_xy(out) - truth)) <= 1e-9


def test_moving_average_examples():
    assert np.array_equal(pp.moving_average([0.0, 1.0, 0.0], 1), [0.0, 1.0, 0.0])
    assert pp.moving_average([0.0, 1.0, 0.0], 3)[1] == pytest.approx(1 / 3)
    assert np.allclose(pp.moving_average(np.full(9, 0.3), 5), 0.3)


@pytest.mark.parametrize("w", [0, 2, -1])
def test_moving_average_bad_window(w):
    with pytest.raises(BadWindow):
        pp.moving_average(np.zeros(5), w)


def test_moving_average_edges_shrink():
    x = np.arange(7, dtype=float) ** 2
    out = pp.moving_average(x, 5)
    assert out[0] == x[0]
    assert out[1] == pytest.approx(x[:3].mean())
    assert out[3] == pytest.approx(x[1:6].mean())


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=7, max_size=60))
def test_smooth_window_one_keeps_mean(xs):
    pts = np.column_stack([xs, xs])
    traj = pp.Trajectory(pts, 24.0)
    assert np.mean(pp.smooth(traj, 1).points) == pytest.approx(np.mean(pts), abs=1e-9)


@pytest.mark.parametrize("w", [3, 5, 7])
def test_smooth_reduces_variance_on_noisy_series(w):
    for seed in range(50):
        r = np.random.default_rng(seed)
        xs = np.clip(0.5 + np.cumsum(r.normal(0, 0.01, 200)) + r.normal(0, 0.02, 200), 0, 1)
        assert np.var(pp.moving_average(xs, w)) < np.var(xs)


def test_smooth_endpoint_spike_can_raise_variance():
    # shrinking edge windows leave the endpoint unchanged and spread it inward
    xs = np.array([1.0] + [0.0] * 11)
    assert np.var(pp.moving_average(xs, 3)) > np.var(xs)


def test_standardize_lengths_min_rule():
    ds = pp.standardize_lengths([series(str(m), np.zeros((m, 2))) for m in (100, 120, 110)])
    assert ds.m == 100 and all(s.m == 100 for s in ds.samples)


def test_standardize_keeps_prefix(rng):
    a = rng.random((12, 2))
    ds = pp.standardize_lengths([series("a", a), series("b", np.zeros((8, 2)))])
    assert np.array_equal(ds.samples[0].dog.points, a[:8])


def test_standardize_identity_and_single():
    ds = pp.standardize_lengths([series("a", np.zeros((5, 2)))])
    assert len(ds) == 1 and ds.m == 5
    with pytest.raises(EmptyInput):
        pp.standardize_lengths([])


def test_build_matrix_layout():
    ds = pp.standardize_lengths([series("a", [(0, 0), (1, 1)], [(0.5, 0.5), (0.5, 0.5)])])
    tensor = pp.build_matrix(ds)
    assert tensor.shape == (1, 4, 2)
    assert np.array_equal(tensor[0], [[0, 1], [0, 1], [0.5, 0.5], [0.5, 0.5]])
    with pytest.raises(EmptyInput):
        pp.build_matrix(pp.Dataset((), 0, 24.0))


def test_prepare_dataset_shape(small_corpus):
    ds = pp.prepare_dataset(small_corpus.trials)
    assert pp.build_matrix(ds).shape == (len(small_corpus.trials), 4, ds.m)
    assert ds.m == 12 * 24 + 1


def test_write_series_csv(tmp_path):
    s = series("a", [(0.1, 0.2), (0.3, 0.4)])
    path = tmp_path / "a.csv"
    pp.write_series_csv(s, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "i,dog_x,dog_y,person_x,person_y"
    assert lines[2] == "1,0.3,0.4,0.5,0.5"
