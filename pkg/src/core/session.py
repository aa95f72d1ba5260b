"""
Session lifecycle for the incognito defenses.

A session is set up once: the privacy level and feature toggles select the
epsilons, every noisy attribute value is drawn from its own seeded substream,
and only the geometry needed by the frame transforms is retained. Every frame
after that goes through the same frozen offsets.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Optional

import numpy as np

from src.core import netshield
from src.core.errors import ConfigError, StreamOrderError
from src.core.mechanisms import (
    BudgetLedger,
    PrivacyParams,
    RandomSource,
    bounded_laplace,
    randomized_response,
    rr_bias_for_epsilon,
)
from src.core.telemetry import TelemetryFrame, TelemetryStream
from src.core.transforms import (
    ARM_RATIO_MODES,
    POSITION_DEFENSES,
    GroundTruth,
    RetainedTruth,
    SessionOffsets,
    apply_ipd,
    apply_pitch,
    compose_positions,
)
from utils.logging_utils import get_logger
from utils.settings import load_presets

logger = get_logger(__name__)

# Defenses that consume privacy budget, in ledger order
EPSILON_FEATURES = ("height", "depth", "wingspan", "arm_ratio", "room", "ipd", "pitch", "handedness")

# Network clamps
CLAMP_FEATURES = ("latency_geo", "reaction_time", "rate_clamp")

FEATURES = EPSILON_FEATURES + CLAMP_FEATURES


class PrivacyLevel(Enum):
    OFF = "off"
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"

    @classmethod
    def parse(cls, value) -> "PrivacyLevel":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = [level.value for level in cls]
            raise ConfigError(f"Unknown privacy level '{value}', expected one of {names}") from None


def parse_features(value) -> FrozenSet[str]:
    """
    Normalise a feature selection.

    Args:
        value: None (all features), a list of names or a {name: bool} mapping

    Returns:
        frozenset: Enabled feature names
    """
    if value is None:
        return frozenset(FEATURES)
    if isinstance(value, str):
        value = [name.strip() for name in value.split(",") if name.strip()]
    if isinstance(value, dict):
        selected = {name for name, enabled in value.items() if enabled}
        names = set(value)
    else:
        selected = set(value)
        names = selected
    unknown = names - set(FEATURES)
    if unknown:
        raise ConfigError(f"Unknown feature(s) {sorted(unknown)}, expected names from {list(FEATURES)}")
    return frozenset(selected)


@dataclass(frozen=True)
class DefenseConfig:
    """
    Typed defense configuration.

    Overrides replace the preset epsilon of an attribute, or the clamp value
    (ms or Hz) of a network clamp.
    """

    level: PrivacyLevel = PrivacyLevel.OFF
    enabled: FrozenSet[str] = frozenset(FEATURES)
    overrides: Dict[str, float] = field(default_factory=dict)
    seed: int = 0
    rerandomize_per_session: bool = True
    arm_ratio_mode: str = "corrected"
    presets: dict = field(default_factory=load_presets, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "level", PrivacyLevel.parse(self.level))
        object.__setattr__(self, "enabled", parse_features(self.enabled))
        for name, value in self.overrides.items():
            if name not in FEATURES:
                raise ConfigError(f"Override for unknown feature '{name}'")
            if not isinstance(value, (int, float)) or not np.isfinite(value) or value <= 0:
                raise ConfigError(f"Override for '{name}' must be a positive number, got {value!r}")
        if self.arm_ratio_mode not in ARM_RATIO_MODES:
            raise ConfigError(f"Unknown arm_ratio_mode '{self.arm_ratio_mode}', expected one of {ARM_RATIO_MODES}")
        if not isinstance(self.seed, int):
            raise ConfigError(f"Seed must be an integer, got {self.seed!r}")

    @classmethod
    def from_settings(cls, settings: dict, presets: Optional[dict] = None) -> "DefenseConfig":
        """Build a configuration from a settings dictionary (see utils.settings)."""
        kwargs = dict(
            level=settings.get("level", "off"),
            enabled=parse_features(settings.get("features")),
            overrides=dict(settings.get("overrides") or {}),
            seed=settings.get("seed", 0),
            rerandomize_per_session=bool(settings.get("rerandomize_per_session", True)),
            arm_ratio_mode=settings.get("arm_ratio_mode", "corrected"),
        )
        if presets is not None:
            kwargs["presets"] = presets
        return cls(**kwargs)

    @property
    def active(self) -> FrozenSet[str]:
        """Enabled features; the off level disables everything."""
        if self.level is PrivacyLevel.OFF:
            return frozenset()
        return self.enabled

    def epsilon(self, attribute: str) -> float:
        if attribute in self.overrides:
            return float(self.overrides[attribute])
        return float(self.presets["attributes"][attribute]["epsilon"][self.level.value])

    def params(self, attribute: str) -> PrivacyParams:
        entry = self.presets["attributes"][attribute]
        return PrivacyParams(self.epsilon(attribute), float(entry["lower"]), float(entry["upper"]))

    def clamp(self, feature: str) -> float:
        if feature in self.overrides:
            return float(self.overrides[feature])
        return float(self.presets["clamps"][feature][self.level.value])


def effective_clamps(config: DefenseConfig) -> Dict[str, float]:
    """
    Active network clamps after the maximum rule.

    When both the geolocation and reaction-time clamps are active, the larger
    of the two protects both.
    """
    clamps = {name: config.clamp(name) for name in CLAMP_FEATURES if name in config.active}
    if "latency_geo" in clamps and "reaction_time" in clamps:
        shared = max(clamps["latency_geo"], clamps["reaction_time"])
        clamps["latency_geo"] = clamps["reaction_time"] = shared
    return clamps


@dataclass
class Session:
    """A running session. Offsets and retained truth are frozen after begin_session."""

    config: DefenseConfig
    truth: RetainedTruth
    offsets: SessionOffsets
    ledger: BudgetLedger
    session_id: str
    frames_processed: int = 0
    last_t: Optional[float] = None

    @property
    def position_defenses(self) -> FrozenSet[str]:
        return self.config.active & frozenset(POSITION_DEFENSES)


def _noisy(config, attribute, value, rng, *keys):
    params = config.params(attribute)
    noisy = bounded_laplace(value, params, rng.derive(attribute, *keys))
    logger.debug(f"Drew noisy {attribute} with epsilon {params.epsilon:g}")
    return noisy


def begin_session(config: DefenseConfig, truth: GroundTruth, session_id) -> Session:
    """
    Draw the session's noisy attribute values and set up its ledger.

    Args:
        config (DefenseConfig): Defense configuration
        truth (GroundTruth): Calibrated ground truth
        session_id: Session key; ignored when rerandomize_per_session is off

    Returns:
        Session: Ready to process frames

    Raises:
        MissingTruthError: An enabled defense needs a ground-truth field that is not set
    """
    active = config.active
    key = str(session_id) if config.rerandomize_per_session else "fixed"
    rng = RandomSource(config.seed).derive(key)
    ledger = BudgetLedger()

    def enabled(attribute, *required):
        if attribute not in active:
            return False
        for name in required:
            truth.require(name, attribute)
        return True

    values = dict(
        height=truth.height,
        depth=truth.squat_depth,
        span=truth.wingspan,
        ratio=truth.arm_ratio,
        room_width=truth.room_width,
        room_length=truth.room_length,
    )
    ipd_offset = pitch_offset = 0.0
    mirrored = False

    if enabled("height", "height"):
        values["height"] = _noisy(config, "height", truth.height, rng)
        ledger.record("height", config.epsilon("height"))
    if enabled("depth", "height", "squat_depth"):
        values["depth"] = _noisy(config, "depth", truth.squat_depth, rng)
        ledger.record("depth", config.epsilon("depth"))
    if enabled("wingspan", "arm_r", "arm_l"):
        values["span"] = _noisy(config, "wingspan", truth.wingspan, rng)
        ledger.record("wingspan", config.epsilon("wingspan"))
    if enabled("arm_ratio", "arm_r", "arm_l"):
        values["ratio"] = _noisy(config, "arm_ratio", truth.arm_ratio, rng)
        ledger.record("arm_ratio", config.epsilon("arm_ratio"))
    if enabled("room", "room_width", "room_length"):
        values["room_width"] = _noisy(config, "room", truth.room_width, rng, "width")
        values["room_length"] = _noisy(config, "room", truth.room_length, rng, "length")
        ledger.record("room", config.epsilon("room"))
    if enabled("ipd", "ipd"):
        ipd_offset = _noisy(config, "ipd", truth.ipd, rng) - truth.ipd
        ledger.record("ipd", config.epsilon("ipd"))
    if enabled("pitch", "pitch"):
        pitch_offset = _noisy(config, "pitch", truth.pitch, rng) - truth.pitch
        ledger.record("pitch", config.epsilon("pitch"))
    if enabled("handedness", "handedness"):
        epsilon = config.epsilon("handedness")
        reported = randomized_response(truth.handedness, rr_bias_for_epsilon(epsilon), rng.derive("handedness"))
        mirrored = reported != truth.handedness
        ledger.record("handedness", epsilon)

    offsets = SessionOffsets(ipd_offset=ipd_offset, pitch_offset=pitch_offset, mirrored=mirrored, **values)
    logger.debug(f"Session {session_id} started at level '{config.level.value}' (total epsilon {ledger.total:g})")
    return Session(config=config, truth=truth.retained(), offsets=offsets, ledger=ledger, session_id=str(session_id))


def _apply(session: Session, telemetry):
    active = session.config.active
    out = compose_positions(
        telemetry, session.truth, session.offsets, session.position_defenses, session.config.arm_ratio_mode
    )
    if "ipd" in active:
        out = apply_ipd(out, session.offsets)
    if "pitch" in active:
        out = apply_pitch(out, session.offsets)
    return out


def process_frame(session: Session, frame: TelemetryFrame) -> TelemetryFrame:
    """
    Apply the session's defenses to one frame.

    Raises:
        StreamOrderError: The frame is not later than the previous one
    """
    if session.last_t is not None and frame.t <= session.last_t:
        raise StreamOrderError(f"Frame at t={frame.t} ms does not follow t={session.last_t} ms")
    out = _apply(session, frame)
    session.last_t = frame.t
    session.frames_processed += 1
    return out


def process_stream(session: Session, stream: TelemetryStream) -> TelemetryStream:
    """Vectorised process_frame over a whole stream."""
    if len(stream) == 0:
        return stream
    if np.any(stream.dt <= 0) or (session.last_t is not None and stream.t[0] <= session.last_t):
        raise StreamOrderError("Stream timestamps must be strictly increasing")
    out = _apply(session, stream)
    session.last_t = float(stream.t[-1])
    session.frames_processed += len(stream)
    return out


def defend_stream(session: Session, stream: TelemetryStream) -> TelemetryStream:
    """Frame transforms followed by the active network clamps."""
    out = process_stream(session, stream)
    clamps = effective_clamps(session.config)
    if "latency_geo" in clamps:
        out = netshield.clamp_latency_channel(out, clamps["latency_geo"])
    if "reaction_time" in clamps:
        out = netshield.clamp_reaction(out, clamps["reaction_time"])
    if "rate_clamp" in clamps:
        out = netshield.clamp_rate(out, clamps["rate_clamp"])
    return out


def session_report(session: Session) -> dict:
    """
    Summarise a session without revealing any offset.

    Returns:
        dict: Level, enabled features, per-attribute epsilon, total, clamps and frame count
    """
    config = session.config
    return {
        "session_id": session.session_id,
        "level": config.level.value,
        "enabled": sorted(config.active),
        "epsilons": session.ledger.as_dict(),
        "total_epsilon": session.ledger.total,
        "clamps": effective_clamps(config),
        "frames_processed": session.frames_processed,
    }
