"""
Synthetic users and scripted sessions.

Stands in for recorded study data: every user gets attributes drawn inside the
preset bounds, and every session follows a fixed motion script that gives each
attack the pose it needs (standing, squats, T-pose, a walk through all four room
corners, interaction events and stimulus/response pairs).
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy import stats

from src.core.calibration import CalibrationSnapshot
from src.core.errors import InvalidInputError, InvalidParamsError
from src.core.mechanisms import RandomSource
from src.core.telemetry import Event, TelemetryStream
from src.core.transforms import GroundTruth
from utils.logging_utils import get_logger
from utils.settings import load_presets

logger = get_logger(__name__)

DISTRIBUTIONS = ("uniform", "truncated-normal")

DEVICE_RATES_HZ = (72.0, 90.0, 120.0, 144.0)
RIGHT_HANDED_SHARE = 0.9
REACTION_RANGE_MS = (180.0, 350.0)
REACTION_SD_MS = 20.0
DOMINANT_SHARE = 0.85
DEFAULT_JITTER_M = 0.005

# Home locations are drawn in this square (km)
REGION_KM = (200.0, 1800.0)

MIN_DURATION_S = 10.0

# Script phases as fractions of the session
STAND_END, SQUAT_END, TPOSE_END, WALK_END = 0.15, 0.35, 0.5, 0.8

HAND_DROP_M = 0.3
RELAXED_HAND = (0.2, 0.75)
EYE_OFFSET = (-0.05, 0.05)


@dataclass(frozen=True)
class SyntheticUser:
    """A synthetic user with ground truth and behavioural parameters."""

    user_id: str
    truth: GroundTruth
    device_rate: float
    reaction_ms: float
    reaction_sd_ms: float = REACTION_SD_MS
    dominant_share: float = DOMINANT_SHARE
    squat_count: int = 3
    location_km: Tuple[float, float] = (1000.0, 1000.0)
    jitter: float = DEFAULT_JITTER_M

    def __post_init__(self):
        if self.jitter < 0:
            raise InvalidParamsError(f"Jitter must be non-negative, got {self.jitter}")

    def to_dict(self):
        return {
            "user_id": self.user_id,
            "truth": self.truth.to_dict(),
            "device_rate": self.device_rate,
            "reaction_ms": self.reaction_ms,
            "reaction_sd_ms": self.reaction_sd_ms,
            "dominant_share": self.dominant_share,
            "squat_count": self.squat_count,
            "location_km": list(self.location_km),
            "jitter": self.jitter,
        }


def _draw(rng: RandomSource, low: float, high: float, distribution: str) -> float:
    if distribution == "uniform":
        return float(rng.uniform(low, high))
    # Normal centred on the range, truncated at two standard deviations
    return float(stats.truncnorm.rvs(-2.0, 2.0, loc=(low + high) / 2.0, scale=(high - low) / 4.0,
                                     random_state=rng.generator))


def _sampling_range(presets: dict, attribute: str) -> Tuple[float, float]:
    entry = presets["attributes"][attribute]
    low, high = entry.get("sampling", (entry["lower"], entry["upper"]))
    return float(low), float(high)


def sample_user(index: int, rng: RandomSource, distribution: str, presets: dict, jitter: float) -> SyntheticUser:
    def attribute(name):
        return _draw(rng.derive(name), *_sampling_range(presets, name), distribution)

    span = attribute("wingspan")
    ratio = attribute("arm_ratio")
    arm_r = span * ratio
    room_low, room_high = _sampling_range(presets, "room")
    truth = GroundTruth(
        height=attribute("height"),
        arm_r=arm_r,
        arm_l=span - arm_r,
        ipd=attribute("ipd"),
        pitch=attribute("pitch"),
        squat_depth=attribute("depth"),
        room_width=_draw(rng.derive("room", "width"), room_low, room_high, distribution),
        room_length=_draw(rng.derive("room", "length"), room_low, room_high, distribution),
        handedness=bool(rng.derive("handedness").uniform() < RIGHT_HANDED_SHARE),
    )
    behaviour = rng.derive("behaviour")
    return SyntheticUser(
        user_id=f"user{index:04d}",
        truth=truth,
        device_rate=float(behaviour.generator.choice(DEVICE_RATES_HZ)),
        reaction_ms=_draw(behaviour, *REACTION_RANGE_MS, distribution),
        squat_count=int(behaviour.generator.integers(2, 5)),
        location_km=(float(behaviour.uniform(*REGION_KM)), float(behaviour.uniform(*REGION_KM))),
        jitter=jitter,
    )


def sample_population(
    n: int,
    seed: int,
    distribution: str = "uniform",
    jitter: float = DEFAULT_JITTER_M,
    presets: Optional[dict] = None,
) -> List[SyntheticUser]:
    """
    Draw n independent synthetic users.

    Args:
        n (int): Population size
        seed (int): Master seed; user i draws from its own derived substream
        distribution (str): "uniform" in the sampling range or "truncated-normal"
        jitter (float): Tracking jitter scale in meters
        presets (dict, optional): Presets document, the built-in one by default

    Returns:
        list: SyntheticUser entries in index order
    """
    if n < 1:
        raise InvalidInputError(f"Population size must be at least 1, got {n}")
    if distribution not in DISTRIBUTIONS:
        raise InvalidParamsError(f"Unknown distribution '{distribution}', expected one of {DISTRIBUTIONS}")
    presets = presets or load_presets()
    root = RandomSource(seed)
    users = [sample_user(i, root.derive("user", i), distribution, presets, jitter) for i in range(n)]
    logger.debug(f"Sampled {n} synthetic user(s) with seed {seed}")
    return users


def _inward(values, noise):
    """Pull coordinates towards zero by |noise| without crossing it."""
    return values - np.sign(values) * np.minimum(np.abs(noise), np.abs(values))


def _walk_path(u, width, length):
    """Rectangle through the four room corners, dwelling at each corner for a quarter of its leg."""
    corners = np.array([
        [width / 2, length / 2],
        [-width / 2, length / 2],
        [-width / 2, -length / 2],
        [width / 2, -length / 2],
    ])
    leg = np.minimum((u * 4).astype(int), 3)
    v = u * 4 - leg
    progress = np.clip((v - 0.25) / 0.75, 0.0, 1.0)
    start = corners[leg]
    end = corners[(leg + 1) % 4]
    return start + (end - start) * progress[:, None]


def generate_session(
    user: SyntheticUser,
    duration: float = 60.0,
    frame_rate: Optional[float] = None,
    seed: int = 0,
) -> TelemetryStream:
    """
    Generate one scripted session for a user.

    Args:
        user (SyntheticUser): Whose body and behaviour to simulate
        duration (float): Session length in seconds, at least 10
        frame_rate (float, optional): Frames per second, the user's device rate by default
        seed (int): Seed for jitter and event timing

    Returns:
        TelemetryStream: round(duration * frame_rate) frames
    """
    if duration < MIN_DURATION_S:
        raise InvalidInputError(f"Session duration must be at least {MIN_DURATION_S:g} s, got {duration}")
    rate = float(frame_rate or user.device_rate)
    if rate <= 0:
        raise InvalidParamsError(f"Frame rate must be positive, got {rate}")

    truth = user.truth
    rng = RandomSource(seed)
    n = int(round(duration * rate))
    duration_ms = duration * 1000.0
    t = np.arange(n) * (1000.0 / rate)
    f = t / duration_ms

    def noise(size=None):
        return rng.normal(0.0, user.jitter, n if size is None else size) if user.jitter > 0 else np.zeros(
            n if size is None else size)

    h, depth = truth.height, truth.squat_depth
    head = np.zeros((n, 3))
    head[:, 1] = h - np.abs(noise())

    squat = (f >= STAND_END) & (f < SQUAT_END)
    u = (f[squat] - STAND_END) / (SQUAT_END - STAND_END)
    s = (1.0 - np.cos(2.0 * np.pi * user.squat_count * u)) / 2.0
    head[squat, 1] = h - depth * s + np.abs(noise(len(u))) * (2.0 * s - 1.0)

    walk = (f >= TPOSE_END) & (f < WALK_END)
    path = _walk_path((f[walk] - TPOSE_END) / (WALK_END - TPOSE_END), truth.room_width, truth.room_length)
    head[walk, 0] = _inward(path[:, 0], noise(len(path)))
    head[walk, 2] = _inward(path[:, 1], noise(len(path)))

    # Relaxed hands at the sides, T-pose at full reach
    right = head.copy()
    left = head.copy()
    right[:, 0] += RELAXED_HAND[0]
    left[:, 0] -= RELAXED_HAND[0]
    right[:, 1] -= RELAXED_HAND[1]
    left[:, 1] -= RELAXED_HAND[1]
    tpose = (f >= SQUAT_END) & (f < TPOSE_END)
    count = int(tpose.sum())
    right[tpose, 0] = head[tpose, 0] + truth.arm_r - np.abs(noise(count))
    left[tpose, 0] = head[tpose, 0] - truth.arm_l + np.abs(noise(count))
    right[tpose, 1] = head[tpose, 1] - HAND_DROP_M
    left[tpose, 1] = head[tpose, 1] - HAND_DROP_M

    half_ipd = truth.ipd / 2000.0
    eyes = np.repeat(head[:, None, :], 2, axis=1)
    eyes[:, 0, 0] -= half_ipd
    eyes[:, 1, 0] += half_ipd
    eyes[:, :, 1] += EYE_OFFSET[0]
    eyes[:, :, 2] += EYE_OFFSET[1]

    return TelemetryStream(
        t=t,
        head=head,
        right=right,
        left=left,
        eyes=eyes,
        pitch_hz=np.full(n, truth.pitch),
        events=_script_events(user, duration_ms, rng),
    )


def _script_events(user: SyntheticUser, duration_ms: float, rng: RandomSource) -> Tuple[Event, ...]:
    dominant = "right" if user.truth.handedness else "left"
    other = "left" if user.truth.handedness else "right"

    interactions = max(20, int(round(duration_ms / 2000.0)))
    dominant_count = math.ceil(user.dominant_share * interactions)
    hands = np.array([dominant] * dominant_count + [other] * (interactions - dominant_count))
    rng.generator.shuffle(hands)
    spacing = duration_ms / interactions
    events = [Event("interaction", str(hand), (k + 0.5) * spacing) for k, hand in enumerate(hands)]

    trials = max(10, int(round(duration_ms / 4000.0)))
    spacing = duration_ms / trials
    delays = np.maximum(rng.normal(user.reaction_ms, user.reaction_sd_ms, trials), 50.0)
    for k, delay in enumerate(delays):
        stimulus_t = (k + 0.25) * spacing
        events.append(Event("stimulus", "none", stimulus_t))
        events.append(Event("response", dominant, stimulus_t + float(delay)))
    return tuple(events)


def calibration_snapshot(user: SyntheticUser) -> CalibrationSnapshot:
    """The user's T-pose at the room centre over a floor at y = 0."""
    truth = user.truth
    h = truth.height
    head = np.array([0.0, h, 0.0])
    half_ipd = truth.ipd / 2000.0
    return CalibrationSnapshot(
        head=head,
        left_eye=head + [-half_ipd, EYE_OFFSET[0], EYE_OFFSET[1]],
        right_eye=head + [half_ipd, EYE_OFFSET[0], EYE_OFFSET[1]],
        left_hand=[-truth.arm_l, h - HAND_DROP_M, 0.0],
        right_hand=[truth.arm_r, h - HAND_DROP_M, 0.0],
        floor_origin=[0.0, 0.0, 0.0],
        floor_normal=[0.0, 1.0, 0.0],
        room_width=truth.room_width,
        room_length=truth.room_length,
    )
