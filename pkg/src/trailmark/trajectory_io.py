"""Tracker detection logs and rater/questionnaire label files.

Trial documents are JSON::

    {"trial_id": "dog_017", "fps": 24,
     "frames": [{"i": 0, "t": 0.0, "dog": [0.41, 0.87], "person": [0.5, 0.5],
                 "dog_conf": 0.93, "person_conf": 0.99}, ...]}

``dog``/``person`` may be ``null`` when the detector missed the object.
Label files are CSV with ``trial_id, rater1, rater2, rater3`` followed by the
eight questionnaire factor columns (cells may be empty).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Optional, Sequence

from .errors import (
    MalformedDocument,
    NonMonotoneTimestamps,
    SchemaViolation,
    ScoreOutOfRange,
    UnknownFactorCode,
)

FACTOR_CODES = ("SDA", "ODA", "SDF", "NSF", "SRB", "ASB", "EXC", "PS")
RATER_COLUMNS = ("rater1", "rater2", "rater3")
COORD_DECIMALS = 6
DEFAULT_COVERAGE_THRESHOLD = 0.8

# ASCII stand-ins for the three collapsed sign classes
NEG, ZERO, POS = "-", "0", "+"
SIGN_CLASSES = (NEG, ZERO, POS)
_SIGN_ALIASES = {"-": NEG, "−": NEG, "0": ZERO, "+": POS}


@dataclass(frozen=True)
class Point2D:
    x: float
    y: float


@dataclass(frozen=True)
class FrameDetection:
    frame_index: int
    timestamp_s: float
    dog: Optional[Point2D] = None
    person: Optional[Point2D] = None
    dog_conf: Optional[float] = None
    person_conf: Optional[float] = None


@dataclass(frozen=True)
class RawTrial:
    trial_id: str
    fps_native: float
    frames: tuple
    clamp_count: int = 0

    @property
    def duration_s(self) -> float:
        return self.frames[-1].timestamp_s - self.frames[0].timestamp_s

    def __len__(self):
        return len(self.frames)


@dataclass(frozen=True)
class ScoreRecord:
    trial_id: str
    rater_scores: tuple
    final_sign: Optional[str] = None
    cbarq: Optional[dict] = field(default=None, compare=True)


def normalize_sign(value: str) -> str:
    try:
        return _SIGN_ALIASES[value.strip()]
    except (KeyError, AttributeError):
        raise SchemaViolation(f"unknown sign class {value!r}") from None


# ---------------------------------------------------------------------------
# trial documents
# ---------------------------------------------------------------------------


def _read_bytes(source) -> bytes:
    if isinstance(source, (bytes, bytearray)):
        return bytes(source)
    if isinstance(source, str):
        return source.encode("utf-8")
    data = source.read()
    return data.encode("utf-8") if isinstance(data, str) else data


def _number(value, what):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaViolation(f"{what} must be a number, got {value!r}")
    if not math.isfinite(value):
        raise SchemaViolation(f"{what} must be finite")
    return float(value)


def _point(raw, what, clamps):
    if raw is None:
        return None
    if not isinstance(raw, (list, tuple)) or len(raw) != 2:
        raise SchemaViolation(f"{what} must be [x, y] or null")
    coords = []
    for c in raw:
        v = _number(c, what)
        if v < 0.0 or v > 1.0:
            clamps[0] += 1
            v = min(1.0, max(0.0, v))
        coords.append(v)
    return Point2D(coords[0], coords[1])


def _conf(raw, what):
    if raw is None:
        return None
    v = _number(raw, what)
    if not 0.0 <= v <= 1.0:
        raise SchemaViolation(f"{what} must lie in [0, 1]")
    return v


def parse_trial(source) -> RawTrial:
    """Parse one trial document (bytes, str or binary/text stream).

    Coordinates outside ``[0, 1]`` are clamped; the number of clamped
    coordinates is kept on the returned trial as ``clamp_count``.
    """
    try:
        doc = json.loads(_read_bytes(source))
    except (UnicodeDecodeError, ValueError) as exc:
        raise MalformedDocument(str(exc)) from None
    if not isinstance(doc, dict):
        raise SchemaViolation("trial document must be a JSON object")
    for key in ("trial_id", "fps", "frames"):
        if key not in doc:
            raise SchemaViolation(f"missing required field {key!r}")
    trial_id = doc["trial_id"]
    if not isinstance(trial_id, str) or not trial_id:
        raise SchemaViolation("trial_id must be a nonempty string")
    fps = _number(doc["fps"], "fps")
    if fps <= 0:
        raise SchemaViolation("fps must be positive")
    raw_frames = doc["frames"]
    if not isinstance(raw_frames, list) or not raw_frames:
        raise SchemaViolation("frames must be a nonempty list")

    clamps = [0]
    frames = []
    for n, fr in enumerate(raw_frames):
        if not isinstance(fr, dict):
            raise SchemaViolation(f"frame {n} is not an object")
        for key in ("i", "t"):
            if key not in fr:
                raise SchemaViolation(f"frame {n} missing {key!r}")
        idx = fr["i"]
        if isinstance(idx, bool) or not isinstance(idx, int) or idx < 0:
            raise SchemaViolation(f"frame {n}: 'i' must be a nonnegative integer")
        t = _number(fr["t"], f"frame {n} 't'")
        if t < 0:
            raise SchemaViolation(f"frame {n}: negative timestamp")
        frames.append(
            FrameDetection(
                frame_index=idx,
                timestamp_s=t,
                dog=_point(fr.get("dog"), f"frame {n} dog", clamps),
                person=_point(fr.get("person"), f"frame {n} person", clamps),
                dog_conf=_conf(fr.get("dog_conf"), f"frame {n} dog_conf"),
                person_conf=_conf(fr.get("person_conf"), f"frame {n} person_conf"),
            )
        )

    frames.sort(key=lambda f: f.frame_index)
    for a, b in zip(frames, frames[1:]):
        if a.frame_index == b.frame_index:
            raise SchemaViolation(f"duplicate frame index {a.frame_index}")
        if not b.timestamp_s > a.timestamp_s:
            raise NonMonotoneTimestamps(
                f"t={b.timestamp_s} at frame {b.frame_index} does not follow "
                f"t={a.timestamp_s} at frame {a.frame_index}"
            )
    _check_fps(frames, fps)
    return RawTrial(trial_id, fps, tuple(frames), clamps[0])


def _check_fps(frames, fps):
    if len(frames) < 2:
        return
    gaps = sorted(
        (b.timestamp_s - a.timestamp_s) / (b.frame_index - a.frame_index)
        for a, b in zip(frames, frames[1:])
    )
    mid = len(gaps) // 2
    median = gaps[mid] if len(gaps) % 2 else 0.5 * (gaps[mid - 1] + gaps[mid])
    if abs(median * fps - 1.0) > 0.01:
        raise SchemaViolation(
            f"declared fps {fps} disagrees with median frame interval {median:.6g}s"
        )


def _round_coord(v):
    return round(v, COORD_DECIMALS)


def trial_to_dict(trial: RawTrial) -> dict:
    frames = []
    for f in trial.frames:
        frames.append(
            {
                "i": f.frame_index,
                "t": f.timestamp_s,
                "dog": None if f.dog is None else [_round_coord(f.dog.x), _round_coord(f.dog.y)],
                "person": None
                if f.person is None
                else [_round_coord(f.person.x), _round_coord(f.person.y)],
                "dog_conf": f.dog_conf,
                "person_conf": f.person_conf,
            }
        )
    fps = trial.fps_native
    return {
        "trial_id": trial.trial_id,
        "fps": int(fps) if float(fps).is_integer() else fps,
        "frames": frames,
    }


def serialize_trial(trial: RawTrial) -> bytes:
    """Inverse of :func:`parse_trial` for coordinates at 6-decimal precision."""
    return json.dumps(trial_to_dict(trial), separators=(",", ":")).encode("utf-8")


def detection_coverage(trial: RawTrial) -> float:
    """Fraction of frames in which both the dog and the person were detected."""
    both = sum(1 for f in trial.frames if f.dog is not None and f.person is not None)
    return both / len(trial.frames)


def quality_gate(trials: Iterable[RawTrial], threshold: float = DEFAULT_COVERAGE_THRESHOLD):
    """Split trials into (kept, excluded) by coverage >= threshold."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must lie in (0, 1]")
    kept, excluded = [], []
    for trial in trials:
        (kept if detection_coverage(trial) >= threshold else excluded).append(trial)
    return kept, excluded


# ---------------------------------------------------------------------------
# label files
# ---------------------------------------------------------------------------


def load_labels(source) -> list:
    """Read a label CSV into :class:`ScoreRecord` objects.

    A ``final_sign`` column is optional; when absent (or blank) the sign is
    computed by majority vote, and left as ``None`` if the raters all differ.
    """
    from .stats import collapse_5_to_sign, majority_vote
    from .errors import NoMajority

    text = _read_bytes(source).decode("utf-8-sig")
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise SchemaViolation("label file has no header row")
    header = [h.strip() for h in reader.fieldnames]
    required = ("trial_id",) + RATER_COLUMNS
    for col in required:
        if col not in header:
            raise SchemaViolation(f"label file missing column {col!r}")
    known = set(required) | {c.lower() for c in FACTOR_CODES} | {"final_sign"}
    for col in header:
        if col.lower() not in known:
            raise UnknownFactorCode(f"unknown column {col!r}")

    records = []
    for lineno, row in enumerate(reader, start=2):
        row = {(k or "").strip().lower(): (v or "").strip() for k, v in row.items()}
        trial_id = row["trial_id"]
        if not trial_id:
            raise SchemaViolation(f"line {lineno}: empty trial_id")
        scores = []
        for col in RATER_COLUMNS:
            try:
                s = int(row[col])
            except ValueError:
                raise SchemaViolation(f"line {lineno}: {col} is not an integer") from None
            if not -2 <= s <= 2:
                raise ScoreOutOfRange(f"line {lineno}: {col}={s} outside -2..+2")
            scores.append(s)
        signs = [collapse_5_to_sign(s) for s in scores]
        try:
            voted = majority_vote(signs)
        except NoMajority:
            voted = None
        given = row.get("final_sign", "")
        if given:
            given = normalize_sign(given)
            if given != voted:
                raise SchemaViolation(
                    f"line {lineno}: final_sign {given!r} disagrees with majority {voted!r}"
                )
        cbarq = _factor_cells(row, lineno)
        records.append(ScoreRecord(trial_id, tuple(scores), voted, cbarq))
    return records


def _factor_cells(row, lineno):
    values = {}
    for code in FACTOR_CODES:
        cell = row.get(code.lower(), "")
        if cell == "":
            continue
        try:
            v = float(cell)
        except ValueError:
            raise SchemaViolation(f"line {lineno}: {code} is not a number") from None
        if not (0.0 <= v <= 4.0):
            raise ScoreOutOfRange(f"line {lineno}: {code}={v} outside 0..4")
        values[code] = v
    if not values:
        return None
    if len(values) != len(FACTOR_CODES):
        missing = [c for c in FACTOR_CODES if c not in values]
        raise SchemaViolation(f"line {lineno}: incomplete factor scores, missing {missing}")
    return values


def write_labels(records: Sequence[ScoreRecord], stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(("trial_id",) + RATER_COLUMNS + tuple(c.lower() for c in FACTOR_CODES))
    for rec in records:
        factors = (
            [""] * len(FACTOR_CODES)
            if rec.cbarq is None
            else [repr(round(rec.cbarq[c], 4)) for c in FACTOR_CODES]
        )
        writer.writerow((rec.trial_id, *rec.rater_scores, *factors))
