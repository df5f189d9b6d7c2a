"""From gated tracker logs to a fixed-rate, gap-free, equal-length sample tensor.

Channel order of the tensor is ``[dog.x, dog.y, person.x, person.y]``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import BadWindow, ChannelTooSparse, EmptyInput, TooFewFrames
from .trajectory_io import FrameDetection, Point2D, RawTrial

STANDARD_FPS = 24.0
DEFAULT_SMOOTH_WINDOW = 5
CHANNELS = ("dog_x", "dog_y", "person_x", "person_y")
_TIME_TOL = 1e-9


@dataclass(frozen=True)
class Trajectory:
    points: np.ndarray  # (m, 2)
    fps: float

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ValueError("trajectory needs an (m >= 2, 2) point array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("trajectory has missing points")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class TrialSeries:
    trial_id: str
    dog: Trajectory
    person: Trajectory

    def __post_init__(self):
        if len(self.dog) != len(self.person) or self.dog.fps != self.person.fps:
            raise ValueError("dog and person trajectories must share length and fps")

    @property
    def m(self) -> int:
        return len(self.dog)

    @property
    def fps(self) -> float:
        return self.dog.fps


@dataclass(frozen=True)
class Dataset:
    samples: tuple
    m: int
    fps: float

    @property
    def trial_ids(self):
        return [s.trial_id for s in self.samples]

    def __len__(self):
        return len(self.samples)


def _channel_arrays(trial: RawTrial, name: str):
    """Timestamps and (k, 2) positions of the frames where ``name`` was seen."""
    ts, pts = [], []
    for f in trial.frames:
        p = getattr(f, name)
        if p is not None:
            ts.append(f.timestamp_s)
            pts.append((p.x, p.y))
    return np.asarray(ts, dtype=float), np.asarray(pts, dtype=float).reshape(-1, 2)


def _to_point(row):
    if row is None or np.isnan(row[0]):
        return None
    return Point2D(float(row[0]), float(row[1]))


def resample(trial: RawTrial, target_fps: float = STANDARD_FPS) -> RawTrial:
    """Re-time a trial onto the uniform grid ``t0 + k / target_fps``.

    A channel's position at a grid time is linearly interpolated between its
    nearest detections before and after.  It stays missing when neither raw
    frame bracketing the grid time detected it, or when there is no detection
    on one side.
    """
    if target_fps <= 0:
        raise ValueError("target_fps must be positive")
    if len(trial.frames) < 2:
        raise TooFewFrames(f"{trial.trial_id}: resampling needs at least 2 frames")
    raw_t = np.array([f.timestamp_s for f in trial.frames])
    t0 = raw_t[0]
    count = int(np.floor((raw_t[-1] - t0) * target_fps + _TIME_TOL)) + 1
    grid = t0 + np.arange(count) / target_fps

    channels = {}
    for name in ("dog", "person"):
        present = np.array([getattr(f, name) is not None for f in trial.frames])
        det_t, det_p = _channel_arrays(trial, name)
        out = np.full((count, 2), np.nan)
        if len(det_t):
            # raw frame at or before each grid time
            left_raw = np.searchsorted(raw_t, grid + _TIME_TOL, side="right") - 1
            exact = np.abs(raw_t[left_raw] - grid) <= _TIME_TOL
            right_raw = np.minimum(left_raw + 1, len(raw_t) - 1)
            bracket_seen = present[left_raw] | present[right_raw]
            # nearest detection at/before and at/after
            lo = np.searchsorted(det_t, grid + _TIME_TOL, side="right") - 1
            hi = np.searchsorted(det_t, grid - _TIME_TOL, side="left")
            for k in range(count):
                if exact[k]:
                    if present[left_raw[k]]:
                        out[k] = det_p[lo[k]]
                    continue
                if not bracket_seen[k] or lo[k] < 0 or hi[k] >= len(det_t):
                    continue
                ta, tb = det_t[lo[k]], det_t[hi[k]]
                w = 0.0 if tb == ta else (grid[k] - ta) / (tb - ta)
                out[k] = det_p[lo[k]] + w * (det_p[hi[k]] - det_p[lo[k]])
        channels[name] = out

    frames = tuple(
        FrameDetection(
            frame_index=k,
            timestamp_s=float(grid[k]),
            dog=_to_point(channels["dog"][k]),
            person=_to_point(channels["person"][k]),
        )
        for k in range(count)
    )
    return RawTrial(trial.trial_id, float(target_fps), frames, trial.clamp_count)


def _fill_channel(values):
    """Fill NaN rows of a (n, 2) array: interpolate inside, extrapolate at the ends."""
    n = len(values)
    known = np.nonzero(~np.isnan(values[:, 0]))[0]
    if len(known) < 2:
        raise ChannelTooSparse(f"only {len(known)} detections")
    out = values.copy()
    idx = np.arange(n)
    for axis in range(2):
        out[:, axis] = np.interp(idx, known, values[known, axis])
    first, second = known[0], known[1]
    last, before_last = known[-1], known[-2]
    if first > 0:
        slope = (values[second] - values[first]) / (second - first)
        lead = idx[:first, None]
        out[:first] = values[first] + (lead - first) * slope
    if last < n - 1:
        slope = (values[last] - values[before_last]) / (last - before_last)
        tail = idx[last + 1:, None]
        out[last + 1:] = values[last] + (tail - last) * slope
    out[:first] = np.clip(out[:first], 0.0, 1.0)
    out[last + 1:] = np.clip(out[last + 1:], 0.0, 1.0)
    return out


def fill_gaps(trial: RawTrial) -> RawTrial:
    """Return a trial with every dog and person point present.

    Frames are treated as equally spaced (run after :func:`resample`).
    """
    filled = {}
    for name in ("dog", "person"):
        arr = np.array(
            [
                (np.nan, np.nan) if getattr(f, name) is None else (getattr(f, name).x, getattr(f, name).y)
                for f in trial.frames
            ]
        )
        try:
            filled[name] = _fill_channel(arr)
        except ChannelTooSparse as exc:
            raise ChannelTooSparse(f"{trial.trial_id}: {name} channel has {exc}") from None
    frames = tuple(
        replace(
            f,
            dog=f.dog if f.dog is not None else Point2D(*map(float, filled["dog"][k])),
            person=f.person if f.person is not None else Point2D(*map(float, filled["person"][k])),
        )
        for k, f in enumerate(trial.frames)
    )
    return replace(trial, frames=frames)


def moving_average(series, window: int):
    """Centered moving average; near the ends the window shrinks symmetrically."""
    series = np.asarray(series, dtype=float)
    n = len(series)
    if not isinstance(window, (int, np.integer)) or window < 1 or window % 2 == 0 or window > n:
        raise BadWindow(f"window must be odd, >= 1 and <= {n}; got {window!r}")
    if window == 1:
        return series.copy()
    half = window // 2
    csum = np.concatenate([np.zeros((1,) + series.shape[1:]), np.cumsum(series, axis=0)])
    idx = np.arange(n)
    radius = np.minimum(half, np.minimum(idx, n - 1 - idx))
    total = csum[idx + radius + 1] - csum[idx - radius]
    shape = (-1,) + (1,) * (series.ndim - 1)
    return total / (2 * radius + 1).reshape(shape)


def smooth(traj: Trajectory, window: int = DEFAULT_SMOOTH_WINDOW) -> Trajectory:
    return Trajectory(moving_average(traj.points, window), traj.fps)


def to_series(trial: RawTrial) -> TrialSeries:
    """Wrap a gap-free trial as paired dog/person trajectories."""
    dog, person = [], []
    for f in trial.frames:
        if f.dog is None or f.person is None:
            raise ChannelTooSparse(f"{trial.trial_id}: frame {f.frame_index} has a gap")
        dog.append((f.dog.x, f.dog.y))
        person.append((f.person.x, f.person.y))
    if len(dog) < 2:
        raise TooFewFrames(f"{trial.trial_id}: needs at least 2 frames")
    return TrialSeries(
        trial.trial_id,
        Trajectory(np.array(dog), trial.fps_native),
        Trajectory(np.array(person), trial.fps_native),
    )


def standardize_lengths(trials: Sequence[TrialSeries]) -> Dataset:
    """Truncate every series to the shortest one, keeping the opening frames."""
    trials = list(trials)
    if not trials:
        raise EmptyInput("no trials to standardize")
    fps = trials[0].fps
    if any(t.fps != fps for t in trials):
        raise ValueError("all trials must share one frame rate")
    m = min(t.m for t in trials)
    samples = tuple(
        TrialSeries(
            t.trial_id,
            Trajectory(t.dog.points[:m], fps),
            Trajectory(t.person.points[:m], fps),
        )
        for t in trials
    )
    return Dataset(samples, m, fps)


def build_matrix(dataset: Dataset) -> np.ndarray:
    """Stack a dataset into an ``(n, 4, m)`` float array."""
    if len(dataset.samples) == 0:
        raise EmptyInput("dataset is empty")
    out = np.empty((len(dataset.samples), 4, dataset.m))
    for i, s in enumerate(dataset.samples):
        out[i, 0:2] = s.dog.points.T
        out[i, 2:4] = s.person.points.T
    return out


def prepare_trial(trial: RawTrial, fps: float = STANDARD_FPS, window: int = DEFAULT_SMOOTH_WINDOW) -> TrialSeries:
    """resample -> fill_gaps -> smooth, for one gated trial."""
    series = to_series(fill_gaps(resample(trial, fps)))
    window = min(window, series.m if series.m % 2 else series.m - 1)
    return TrialSeries(series.trial_id, smooth(series.dog, window), smooth(series.person, window))


def prepare_dataset(trials: Sequence[RawTrial], fps: float = STANDARD_FPS,
                    window: int = DEFAULT_SMOOTH_WINDOW) -> Dataset:
    return standardize_lengths([prepare_trial(t, fps, window) for t in trials])


def write_series_csv(series: TrialSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("i",) + CHANNELS)
        for i in range(series.m):
            d, p = series.dog.points[i], series.person.points[i]
            writer.writerow((i, repr(float(d[0])), repr(float(d[1])), repr(float(p[0])), repr(float(p[1]))))
