import numpy as np
import pytest

from trailmark import preprocess as pp
from trailmark import synthetic as syn
from trailmark.trajectory_io import FrameDetection, Point2D, RawTrial


def make_trial(points_dog, points_person=None, fps=24.0, trial_id="t"):
    """RawTrial from lists of (x, y) or None."""
    if points_person is None:
        points_person = [(0.5, 0.5)] * len(points_dog)
    frames = []
    for i, (d, p) in enumerate(zip(points_dog, points_person)):
        frames.append(FrameDetection(
            i, i / fps,
            None if d is None else Point2D(*d),
            None if p is None else Point2D(*p),
        ))
    return RawTrial(trial_id, fps, tuple(frames))


_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        number, title = marker.args
        detail = getattr(item, "criterion_detail", "")
        _CRITERIA[number] = (title, rep.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok, detail = _CRITERIA[number]
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))


@pytest.fixture
def report(request):
    """Attach a one-line measurement to the acceptance summary."""
    def note(text):
        request.node.criterion_detail = text
        print(text)
    return note


@pytest.fixture(scope="session")
def small_corpus():
    cfg = syn.GenConfig(duration_s=12, event_times_s=(3, 6, 9), seed=5)
    return syn.gen_dataset(4, ["Neutral", "Excessive"], cfg)


@pytest.fixture(scope="session")
def small_tensor(small_corpus):
    return pp.build_matrix(pp.prepare_dataset(small_corpus.trials))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
