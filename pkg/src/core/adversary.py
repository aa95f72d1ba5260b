"""
Attribute-harvesting and identification attacks.

Each estimator reads a finished TelemetryStream the way a server-side observer
would, without access to ground truth. The population-level attacks
(geolocation by multilateration and nearest-neighbour identification) work on
round-trip times and feature vectors respectively.
"""

from dataclasses import dataclass
from typing import Callable, Dict, Hashable, List, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import least_squares

from src.core.errors import ConfigError, DegenerateGeometryError, EstimationError, UnidentifiableError
from src.core.telemetry import TelemetryStream, pair_responses
from utils.logging_utils import get_logger

logger = get_logger(__name__)

MIN_HEIGHT_FRAMES = 100

# Arms whose head-relative reach differs by less than this are a tie (m)
ARM_TIE_M = 0.001

# Speed of light in km per ms
DEFAULT_PROPAGATION_KM_PER_MS = 300.0

# RMS RTT residual (ms) above which a geolocation fix is flagged
LOW_CONFIDENCE_RESIDUAL_MS = 0.5

GRID_POINTS = 121

FEATURE_NAMES = (
    "height",
    "wingspan",
    "arm_ratio",
    "ipd",
    "room_w",
    "room_l",
    "depth",
    "pitch",
    "reaction",
    "refresh_rate",
)


@dataclass(frozen=True)
class AttributeEstimate:
    attribute: str
    value: Union[float, bool, str, Tuple[float, float]]
    units: str

    def to_dict(self):
        value = list(self.value) if isinstance(self.value, tuple) else self.value
        return {"attribute": self.attribute, "value": value, "units": self.units}


def _require_frames(stream: TelemetryStream, minimum: int, attack: str):
    if len(stream) < minimum:
        raise EstimationError(f"{attack} needs at least {minimum} frame(s), got {len(stream)}")


def estimate_height(stream: TelemetryStream, use_max: bool = False) -> float:
    """
    Height from the headset's vertical coordinate.

    Args:
        stream (TelemetryStream): Observed session
        use_max (bool): Take the highest sample instead of the 99th percentile

    Returns:
        float: Height estimate in meters
    """
    _require_frames(stream, MIN_HEIGHT_FRAMES, "Height estimation")
    y_h = stream.head[:, 1]
    return float(np.max(y_h) if use_max else np.percentile(y_h, 99))


def estimate_wingspan(stream: TelemetryStream) -> float:
    """Largest observed floor-plane separation between the controllers."""
    _require_frames(stream, 1, "Wingspan estimation")
    gap = stream.right - stream.left
    return float(np.max(np.hypot(gap[:, 0], gap[:, 2])))


def estimate_room(stream: TelemetryStream) -> Tuple[float, float]:
    """Range of head movement along x and z: (width, length)."""
    _require_frames(stream, 1, "Room estimation")
    return float(np.ptp(stream.head[:, 0])), float(np.ptp(stream.head[:, 2]))


def estimate_depth(stream: TelemetryStream, height_est: float = None) -> float:
    """Squat depth as the estimated height minus the lowest headset coordinate."""
    if height_est is None:
        height_est = estimate_height(stream)
    _require_frames(stream, 1, "Depth estimation")
    return float(height_est - np.min(stream.head[:, 1]))


def estimate_ipd(stream: TelemetryStream) -> float:
    """Median gap between the eye positions, in millimeters."""
    if stream.eyes is None or len(stream) == 0:
        raise EstimationError("IPD estimation needs an eye channel")
    gap = np.linalg.norm(stream.eyes[:, 1, :] - stream.eyes[:, 0, :], axis=-1)
    return float(np.median(gap) * 1000.0)


def estimate_pitch(stream: TelemetryStream) -> float:
    if stream.pitch_hz is None or len(stream) == 0:
        raise EstimationError("Pitch estimation needs a pitch channel")
    return float(np.median(stream.pitch_hz))


def estimate_handedness(stream: TelemetryStream) -> bool:
    """
    Majority hand over interaction events.

    Returns:
        bool: True for right-handed

    Raises:
        EstimationError: No interaction events, or an exact tie
    """
    hands = [e.hand for e in stream.events_of("interaction")]
    right, left = hands.count("right"), hands.count("left")
    if right == left:
        reason = "no interaction events" if not hands else f"a tie ({right} each)"
        raise EstimationError(f"Cannot decide handedness from {reason}")
    return right > left


def arm_reach(stream: TelemetryStream) -> Tuple[float, float]:
    """Largest head-relative floor-plane reach of the right and left controllers."""
    _require_frames(stream, 1, "Arm reach estimation")
    head = stream.head
    reach = []
    for hand in (stream.right, stream.left):
        reach.append(float(np.max(np.hypot(hand[:, 0] - head[:, 0], hand[:, 2] - head[:, 2]))))
    return reach[0], reach[1]


def estimate_longer_arm(stream: TelemetryStream) -> str:
    """'right', 'left' or 'tie' (reach within 1 mm)."""
    right, left = arm_reach(stream)
    if abs(right - left) < ARM_TIE_M:
        return "tie"
    return "right" if right > left else "left"


def estimate_arm_ratio(stream: TelemetryStream) -> float:
    """Right-arm fraction of the combined head-relative reach."""
    right, left = arm_reach(stream)
    if right + left <= 0:
        raise EstimationError("Controllers never leave the head; arm ratio is undefined")
    return right / (right + left)


def estimate_refresh_rate(stream: TelemetryStream) -> float:
    _require_frames(stream, 2, "Refresh rate estimation")
    return float(1000.0 / np.median(stream.dt))


def estimate_reaction(stream: TelemetryStream) -> float:
    """Mean delay between each stimulus and its response, in ms."""
    pairs, _ = pair_responses(stream.events)
    if not pairs:
        raise EstimationError("Reaction estimation needs at least one stimulus/response pair")
    return float(np.mean([response.t - stimulus.t for stimulus, response in pairs]))


@dataclass(frozen=True)
class GeoFix:
    """Multilateration result: position (km), RMS RTT residual (ms) and a confidence flag."""

    x: float
    y: float
    rms_residual: float
    low_confidence: bool

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


def range_for_rtt(rtt_ms, propagation: float = DEFAULT_PROPAGATION_KM_PER_MS):
    """One-way distance (km) implied by a round-trip time under RTT = 2 d / propagation."""
    return np.asarray(rtt_ms) * propagation / 2.0


def _check_anchors(anchors: np.ndarray):
    if len(anchors) < 3:
        raise DegenerateGeometryError(f"Multilateration needs at least 3 anchors, got {len(anchors)}")
    centred = anchors - anchors.mean(axis=0)
    singular = np.linalg.svd(centred, compute_uv=False)
    if singular[-1] <= 1e-9 * max(singular[0], 1.0):
        raise DegenerateGeometryError("Multilateration anchors are collinear")


def geolocate(
    rtts: Sequence[Tuple[Sequence[float], float]],
    propagation: float = DEFAULT_PROPAGATION_KM_PER_MS,
) -> GeoFix:
    """
    Locate a client from round-trip times to known anchors.

    A coarse grid search over the region the RTTs can reach seeds a
    least-squares refinement of sum((2 |p - anchor| / propagation - rtt)^2).

    Args:
        rtts: (anchor (x, y) in km, rtt in ms) pairs
        propagation (float): Signal speed in km/ms

    Returns:
        GeoFix: Estimated position; low_confidence is set when the RTTs are all
        identical (no range information) or the fit leaves a large residual

    Raises:
        DegenerateGeometryError: Fewer than 3 anchors, or collinear anchors
    """
    anchors = np.array([anchor for anchor, _ in rtts], dtype=float).reshape(-1, 2)
    observed = np.array([rtt for _, rtt in rtts], dtype=float)
    _check_anchors(anchors)

    def residuals(point):
        return 2.0 * np.linalg.norm(anchors - point, axis=1) / propagation - observed

    reach = float(range_for_rtt(observed.max(), propagation))
    low, high = anchors.min(axis=0) - reach, anchors.max(axis=0) + reach
    gx, gy = np.meshgrid(np.linspace(low[0], high[0], GRID_POINTS), np.linspace(low[1], high[1], GRID_POINTS))
    grid = np.column_stack([gx.ravel(), gy.ravel()])
    distances = np.linalg.norm(grid[:, None, :] - anchors[None, :, :], axis=2)
    cost = np.sum((2.0 * distances / propagation - observed) ** 2, axis=1)
    start = grid[int(np.argmin(cost))]

    result = least_squares(residuals, start, xtol=1e-12, ftol=1e-12, gtol=1e-12)
    rms = float(np.sqrt(np.mean(result.fun ** 2)))
    flat = np.ptp(observed) == 0
    logger.debug(f"Geolocation fit: rms residual {rms:.4f} ms after {result.nfev} evaluations")
    return GeoFix(
        x=float(result.x[0]),
        y=float(result.x[1]),
        rms_residual=rms,
        low_confidence=bool(flat or rms > LOW_CONFIDENCE_RESIDUAL_MS),
    )


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Per-attribute features in FEATURE_NAMES order with a presence mask."""

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(len(FEATURE_NAMES))
        mask = np.array(self.mask, dtype=bool).reshape(len(FEATURE_NAMES))
        mask &= np.isfinite(values)
        values = np.where(mask, values, np.nan)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def from_dict(cls, features: Dict[str, float]) -> "FeatureVector":
        values = [features.get(name, np.nan) for name in FEATURE_NAMES]
        mask = [name in features and features[name] is not None for name in FEATURE_NAMES]
        values = [np.nan if v is None else v for v in values]
        return cls(np.array(values, dtype=float), np.array(mask))

    def to_dict(self):
        return {name: float(v) for name, v, present in zip(FEATURE_NAMES, self.values, self.mask) if present}


def extract_features(stream: TelemetryStream) -> FeatureVector:
    """Run every feature estimator; attacks that cannot estimate leave their feature masked."""
    features = {}

    def attempt(names, estimator):
        try:
            value = estimator(stream)
        except EstimationError as e:
            logger.debug(f"Feature(s) {names} unavailable: {e}")
            return
        for name, v in zip(names, value if isinstance(value, tuple) else (value,)):
            features[name] = v

    attempt(("height",), estimate_height)
    attempt(("wingspan",), estimate_wingspan)
    attempt(("arm_ratio",), estimate_arm_ratio)
    attempt(("ipd",), estimate_ipd)
    attempt(("room_w", "room_l"), estimate_room)
    if "height" in features:
        attempt(("depth",), lambda s: estimate_depth(s, features["height"]))
    attempt(("pitch",), estimate_pitch)
    attempt(("reaction",), estimate_reaction)
    attempt(("refresh_rate",), estimate_refresh_rate)
    return FeatureVector.from_dict(features)


def _normalisation(population: Sequence[Tuple[Hashable, FeatureVector]]):
    if not population:
        raise UnidentifiableError("Cannot identify against an empty population")
    matrix = np.array([vector.values for _, vector in population])
    present = ~np.isnan(matrix)
    counts = present.sum(axis=0)
    filled = np.where(present, matrix, 0.0)
    mean = np.divide(filled.sum(axis=0), counts, out=np.zeros(matrix.shape[1]), where=counts > 0)
    spread = np.where(present, matrix - mean, 0.0)
    std = np.sqrt(np.divide((spread ** 2).sum(axis=0), counts, out=np.zeros(matrix.shape[1]), where=counts > 0))
    std = np.where(std > 0, std, 1.0)
    return (matrix - mean) / std, mean, std


def _nearest(ids, normalised, query: FeatureVector, mean, std):
    z = (query.values - mean) / std
    common = ~np.isnan(normalised) & query.mask
    usable = common.any(axis=1)
    if not usable.any():
        raise UnidentifiableError("Query shares no feature with any population entry")
    diff = np.where(common, normalised - z, 0.0)
    distance = np.sqrt((diff ** 2).sum(axis=1))
    candidates = [(distance[i], str(ids[i]), i) for i in range(len(ids)) if usable[i]]
    return ids[min(candidates)[2]]


def identify(population: Sequence[Tuple[Hashable, FeatureVector]], query: FeatureVector):
    """
    Nearest neighbour on z-normalised features.

    Features are normalised per attribute over the population; the distance
    uses the features present in both the query and the entry. Ties resolve to
    the smallest user id so the result does not depend on population order.

    Returns:
        The user id of the closest entry

    Raises:
        UnidentifiableError: Empty population, or no shared feature
    """
    return identify_many(population, [query])[0]


def identify_many(population: Sequence[Tuple[Hashable, FeatureVector]], queries: Sequence[FeatureVector]) -> List:
    normalised, mean, std = _normalisation(population)
    ids = [user_id for user_id, _ in population]
    return [_nearest(ids, normalised, query, mean, std) for query in queries]


# Stream attacks by name: (estimator, units)
ATTACKS: Dict[str, Tuple[Callable[[TelemetryStream], object], str]] = {
    "height": (estimate_height, "m"),
    "wingspan": (estimate_wingspan, "m"),
    "arm_ratio": (estimate_arm_ratio, "fraction"),
    "longer_arm": (estimate_longer_arm, "label"),
    "ipd": (estimate_ipd, "mm"),
    "room": (estimate_room, "m"),
    "depth": (estimate_depth, "m"),
    "pitch": (estimate_pitch, "Hz"),
    "handedness": (estimate_handedness, "right-handed"),
    "refresh_rate": (estimate_refresh_rate, "Hz"),
    "reaction": (estimate_reaction, "ms"),
}

# Attacks that need more than one stream
POPULATION_ATTACKS = ("geolocation", "identity")


def run_attack(name: str, stream: TelemetryStream) -> AttributeEstimate:
    """Run one stream attack by name."""
    if name not in ATTACKS:
        raise ConfigError(f"Unknown attack '{name}', expected one of {sorted(ATTACKS)}")
    estimator, units = ATTACKS[name]
    return AttributeEstimate(name, estimator(stream), units)
