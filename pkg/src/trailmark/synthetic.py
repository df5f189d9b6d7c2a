"""Seeded generator of labeled arena trials.

Coordinates are normalized image coordinates of a top-view camera.  The test
person sits at the arena center; the dog enters at the gate (bottom edge) and
the owner sits near the lower-left corner.

Dog dynamics per profile (Euler steps of dt = 1/fps, Gaussian increments):

* Neutral   -- no directed drift; the dog diffuses around the owner's chair
  (weak tether of ``approach_rate`` toward a dwell point within ``dwell_radius``
  of the chair).
* Excessive -- drifts toward the person at ``approach_rate`` and settles inside
  ``dwell_radius``; for 2 s after each scripted event it adds a 3 Hz
  oscillation of amplitude ``jump_amplitude``.
* Avoidant  -- pushed away from the person toward the nearest wall with
  strength ``wall_affinity``.

Observation noise (sd ``noise_sd``) is added to both subjects, detections are
dropped independently with ``missing_rate`` and positions are clamped to
[0, 1].

Questionnaire factors: every factor starts at ``FACTOR_BASE`` (1.0); Excessive
adds ``FACTOR_OFFSET`` (2.0) to EXC, Avoidant adds it to SDF; Gaussian noise of
sd ``FACTOR_NOISE_SD`` (0.25) is added and the result is clamped to [0, 4] and
rounded to 4 decimals.
"""

from __future__ import annotations

import io
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import BadConfig
from .trajectory_io import (
    FACTOR_CODES,
    NEG,
    POS,
    ZERO,
    FrameDetection,
    Point2D,
    RawTrial,
    ScoreRecord,
    serialize_trial,
    write_labels,
)

PERSON_XY = (0.5, 0.5)
GATE_XY = (0.5, 0.94)
OWNER_XY = (0.2, 0.78)
BURST_SECONDS = 2.0
BURST_HZ = 3.0
WANDER_SD = 0.02  # diffusion per sqrt(second)
FACTOR_BASE = 1.0
FACTOR_OFFSET = 2.0
FACTOR_NOISE_SD = 0.25
DEFAULT_RATER_CONFUSION = 0.1

KINDS = ("Neutral", "Excessive", "Avoidant")
TRUE_SIGN = {"Neutral": ZERO, "Excessive": POS, "Avoidant": NEG}
_PROFILE_FACTOR = {"Excessive": "EXC", "Avoidant": "SDF"}


@dataclass(frozen=True)
class BehaviorProfile:
    kind: str
    approach_rate: float
    dwell_radius: float
    jump_amplitude: float
    wall_affinity: float

    def __post_init__(self):
        if self.kind not in KINDS:
            raise BadConfig(f"unknown profile kind {self.kind!r}")
        if min(self.approach_rate, self.jump_amplitude, self.wall_affinity) < 0:
            raise BadConfig("profile rates must be nonnegative")
        if not 0.0 < self.dwell_radius < 0.5:
            raise BadConfig("dwell_radius must lie in (0, 0.5)")


PRESETS = {
    "Neutral": BehaviorProfile("Neutral", approach_rate=0.3, dwell_radius=0.08,
                               jump_amplitude=0.0, wall_affinity=0.0),
    "Excessive": BehaviorProfile("Excessive", approach_rate=0.8, dwell_radius=0.08,
                                 jump_amplitude=0.04, wall_affinity=0.0),
    "Avoidant": BehaviorProfile("Avoidant", approach_rate=0.0, dwell_radius=0.1,
                                jump_amplitude=0.0, wall_affinity=0.6),
}


def preset(kind: str) -> BehaviorProfile:
    try:
        return PRESETS[kind.capitalize()]
    except KeyError:
        raise BadConfig(f"unknown profile kind {kind!r}") from None


@dataclass(frozen=True)
class GenConfig:
    duration_s: float = 60.0
    fps: float = 24.0
    noise_sd: float = 0.005
    missing_rate: float = 0.05
    event_times_s: tuple = (10.0, 20.0, 30.0)
    seed: int = 0

    def validate(self):
        if self.duration_s <= 0 or self.fps <= 0:
            raise BadConfig("duration_s and fps must be positive")
        if not 0.0 <= self.missing_rate < 1.0:
            raise BadConfig("missing_rate must lie in [0, 1)")
        if self.noise_sd < 0:
            raise BadConfig("noise_sd must be nonnegative")
        if any(not 0.0 <= t <= self.duration_s for t in self.event_times_s):
            raise BadConfig("event times must fall within the trial duration")


def _wall_target(pos):
    """Nearest point on the arena border (inset slightly)."""
    x, y = pos
    inset = 0.03
    dists = (x, 1 - x, y, 1 - y)
    side = int(np.argmin(dists))
    if side == 0:
        return np.array([inset, y])
    if side == 1:
        return np.array([1 - inset, y])
    if side == 2:
        return np.array([x, inset])
    return np.array([x, 1 - inset])


def _simulate_dog(profile: BehaviorProfile, config: GenConfig, n: int, rng):
    dt = 1.0 / config.fps
    person = np.array(PERSON_XY)
    pos = np.array([GATE_XY[0] + rng.uniform(-0.05, 0.05), GATE_XY[1]])
    angle = rng.uniform(0, 2 * np.pi)
    radius = profile.dwell_radius * np.sqrt(rng.uniform())
    offset = radius * np.array([np.cos(angle), np.sin(angle)])
    if profile.kind == "Excessive":
        home = person + offset
    elif profile.kind == "Neutral":
        home = np.array(OWNER_XY) + offset
    else:
        home = None
    out = np.empty((n, 2))
    step_sd = WANDER_SD * np.sqrt(dt)
    for i in range(n):
        out[i] = pos
        if profile.kind == "Avoidant":
            drift = profile.wall_affinity * (_wall_target(pos) - pos)
        else:
            drift = profile.approach_rate * (home - pos)
        pos = np.clip(pos + drift * dt + rng.normal(0.0, step_sd, 2), 0.0, 1.0)
    if profile.kind == "Excessive" and profile.jump_amplitude > 0:
        t = np.arange(n) * dt
        phase = rng.uniform(0, 2 * np.pi)
        for event in config.event_times_s:
            live = (t >= event) & (t < event + BURST_SECONDS)
            wave = profile.jump_amplitude * np.sin(2 * np.pi * BURST_HZ * (t[live] - event) + phase)
            out[live, 1] += wave
            out[live, 0] += 0.5 * wave
    return out


def _true_factors(kind: str, rng) -> dict:
    factors = {}
    for code in FACTOR_CODES:
        value = FACTOR_BASE + rng.normal(0.0, FACTOR_NOISE_SD)
        if _PROFILE_FACTOR.get(kind) == code:
            value += FACTOR_OFFSET
        factors[code] = round(float(np.clip(value, 0.0, 4.0)), 4)
    return factors


def gen_trial(profile: BehaviorProfile, config: GenConfig, trial_id: str = "trial",
              rng: np.random.Generator | None = None):
    """Generate one trial; returns ``(RawTrial, true sign, true factor dict)``."""
    config.validate()
    if rng is None:
        rng = np.random.default_rng(config.seed)
    n = int(round(config.duration_s * config.fps)) + 1
    dog = _simulate_dog(profile, config, n, rng)
    dog = dog + rng.normal(0.0, config.noise_sd, dog.shape)
    person = np.array(PERSON_XY) + rng.normal(0.0, config.noise_sd, (n, 2))
    dog = np.round(np.clip(dog, 0.0, 1.0), 6)
    person = np.round(np.clip(person, 0.0, 1.0), 6)
    dog_seen = rng.random(n) >= config.missing_rate
    person_seen = rng.random(n) >= config.missing_rate
    dog_conf = np.round(rng.uniform(0.7, 1.0, n), 3)
    person_conf = np.round(rng.uniform(0.8, 1.0, n), 3)
    frames = []
    for i in range(n):
        frames.append(
            FrameDetection(
                frame_index=i,
                timestamp_s=i / config.fps,
                dog=Point2D(float(dog[i, 0]), float(dog[i, 1])) if dog_seen[i] else None,
                person=Point2D(float(person[i, 0]), float(person[i, 1])) if person_seen[i] else None,
                dog_conf=float(dog_conf[i]) if dog_seen[i] else None,
                person_conf=float(person_conf[i]) if person_seen[i] else None,
            )
        )
    trial = RawTrial(trial_id, float(config.fps), tuple(frames), 0)
    return trial, TRUE_SIGN[profile.kind], _true_factors(profile.kind, rng)


def _rater_score(true_sign: str, confusion: float, rng) -> int:
    sign = true_sign
    if rng.random() < confusion:
        others = [s for s in (NEG, ZERO, POS) if s != true_sign]
        sign = others[int(rng.integers(len(others)))]
    if sign == ZERO:
        return 0
    magnitude = int(rng.integers(1, 3))
    return magnitude if sign == POS else -magnitude


def _final_sign(raters):
    from .errors import NoMajority
    from .stats import collapse_5_to_sign, majority_vote

    try:
        return majority_vote([collapse_5_to_sign(r) for r in raters])
    except NoMajority:
        return None


@dataclass
class Corpus:
    trials: list
    labels: list
    manifest: dict = field(default_factory=dict)


def gen_dataset(n_per_profile: int, profiles, config: GenConfig,
                rater_confusion: float = DEFAULT_RATER_CONFUSION) -> Corpus:
    """Generate ``n_per_profile`` trials for each profile plus three noisy raters.

    Each synthetic rater reports the true sign, except with probability
    ``rater_confusion`` one of the two other signs (uniformly).
    """
    config.validate()
    if n_per_profile < 1:
        raise BadConfig("n_per_profile must be at least 1")
    if not 0.0 <= rater_confusion <= 1.0:
        raise BadConfig("rater_confusion must lie in [0, 1]")
    profiles = [preset(p) if isinstance(p, str) else p for p in profiles]
    if not profiles:
        raise BadConfig("at least one profile is required")
    trials, labels, entries = [], [], []
    for p_idx, profile in enumerate(profiles):
        for i in range(n_per_profile):
            ss = np.random.SeedSequence([config.seed, p_idx, i])
            rng = np.random.default_rng(ss)
            trial_id = f"{profile.kind.lower()}_{i:03d}"
            trial, sign, factors = gen_trial(profile, config, trial_id, rng)
            raters = tuple(_rater_score(sign, rater_confusion, rng) for _ in range(3))
            trials.append(trial)
            labels.append(ScoreRecord(trial_id, raters, _final_sign(raters), factors))
            entries.append({
                "trial_id": trial_id,
                "profile": profile.kind,
                "seed_entropy": [config.seed, p_idx, i],
                "true_sign": sign,
                "true_factors": factors,
            })
    manifest = {
        "generator": "trailmark.synthetic",
        "seed": config.seed,
        "config": {**asdict(config), "event_times_s": list(config.event_times_s)},
        "profiles": [asdict(p) for p in profiles],
        "rater_confusion": rater_confusion,
        "generative_map": {
            "person": list(PERSON_XY),
            "gate": list(GATE_XY),
            "owner": list(OWNER_XY),
            "wander_sd_per_sqrt_s": WANDER_SD,
            "burst_seconds": BURST_SECONDS,
            "burst_hz": BURST_HZ,
            "factor_base": FACTOR_BASE,
            "factor_offset": FACTOR_OFFSET,
            "factor_noise_sd": FACTOR_NOISE_SD,
            "factor_offsets": dict(_PROFILE_FACTOR),
        },
        "trials": entries,
    }
    return Corpus(trials, labels, manifest)


def write_corpus(corpus: Corpus, out_dir) -> None:
    """Write ``trials/<id>.json``, ``labels.csv`` and ``manifest.json``."""
    trial_dir = os.path.join(out_dir, "trials")
    os.makedirs(trial_dir, exist_ok=True)
    for trial in corpus.trials:
        with open(os.path.join(trial_dir, f"{trial.trial_id}.json"), "wb") as fh:
            fh.write(serialize_trial(trial))
    buf = io.StringIO()
    write_labels(corpus.labels, buf)
    with open(os.path.join(out_dir, "labels.csv"), "w", newline="") as fh:
        fh.write(buf.getvalue())
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(corpus.manifest, fh, indent=2)
        fh.write("\n")
