"""
Instantaneous ground-truth calibration.

The user stands upright in a T-pose at the centre of the play area while one
snapshot of head, eyes, hands and the floor plane is taken. Everything the
defenses need is derived from that single snapshot.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.core.errors import CalibrationError, InvalidInputError
from src.core.transforms import GroundTruth
from utils.logging_utils import get_logger

logger = get_logger(__name__)

# Hands closer than this to the head (horizontally) cannot be a T-pose
MIN_ARM_REACH_M = 0.05

DEFAULT_ASSUMED_DEPTH_M = 0.913
DEFAULT_PITCH_HZ = 170.0


@dataclass(frozen=True, eq=False)
class CalibrationSnapshot:
    """One-time snapshot of the tracked points and the play area."""

    head: np.ndarray
    left_eye: np.ndarray
    right_eye: np.ndarray
    left_hand: np.ndarray
    right_hand: np.ndarray
    floor_origin: np.ndarray
    floor_normal: np.ndarray
    room_width: float
    room_length: float

    def __post_init__(self):
        for name in ("head", "left_eye", "right_eye", "left_hand", "right_hand", "floor_origin", "floor_normal"):
            value = np.array(getattr(self, name), dtype=float)
            if value.shape != (3,) or not np.all(np.isfinite(value)):
                raise InvalidInputError(f"Snapshot '{name}' must be three finite coordinates, got {value!r}")
            object.__setattr__(self, name, value)
        for name in ("room_width", "room_length"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise InvalidInputError(f"Snapshot '{name}' must be positive, got {value}")

    @classmethod
    def from_dict(cls, data) -> "CalibrationSnapshot":
        try:
            return cls(**data)
        except TypeError as e:
            raise InvalidInputError(f"Malformed calibration snapshot: {e}") from None

    def to_dict(self):
        return {
            name: (value.tolist() if isinstance(value, np.ndarray) else value)
            for name, value in self.__dict__.items()
        }


def _unit_normal(normal: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(normal)
    if not np.isfinite(norm) or norm < 1e-9:
        raise CalibrationError(f"Floor plane normal {normal.tolist()} is degenerate")
    if abs(norm - 1.0) > 1e-9:
        logger.debug(f"Normalising floor normal of length {norm:.6f}")
    return normal / norm


def _horizontal_reach(hand, head, normal):
    """Length of the head-to-hand vector projected onto the floor plane."""
    delta = hand - head
    return float(np.linalg.norm(delta - np.dot(delta, normal) * normal))


def calibrate(
    snapshot: CalibrationSnapshot,
    assumed_depth: float = DEFAULT_ASSUMED_DEPTH_M,
    pitch: Optional[float] = None,
    right_handed: bool = True,
) -> GroundTruth:
    """
    Estimate ground truth from a T-pose snapshot.

    Args:
        snapshot (CalibrationSnapshot): Tracked points and floor plane
        assumed_depth (float): Squat depth in meters; it cannot be measured from one pose
        pitch (float, optional): Voice pitch in Hz; DEFAULT_PITCH_HZ when not measured
        right_handed (bool): Handedness from configuration

    Returns:
        GroundTruth: Calibrated attributes

    Raises:
        CalibrationError: Degenerate floor normal, or a hand within 5 cm of the head
    """
    normal = _unit_normal(snapshot.floor_normal)

    height = abs(float(np.dot(snapshot.head - snapshot.floor_origin, normal)))
    arm_r = _horizontal_reach(snapshot.right_hand, snapshot.head, normal)
    arm_l = _horizontal_reach(snapshot.left_hand, snapshot.head, normal)
    for side, reach in (("right", arm_r), ("left", arm_l)):
        if reach < MIN_ARM_REACH_M:
            raise CalibrationError(
                f"The {side} hand is {reach * 100:.1f} cm from the head; calibration expects a T-pose"
            )
    if height <= 0:
        raise CalibrationError("Head lies on the floor plane")

    ipd_mm = float(np.linalg.norm(snapshot.right_eye - snapshot.left_eye)) * 1000.0

    logger.debug("Calibrated ground truth from snapshot")
    return GroundTruth(
        height=height,
        arm_r=arm_r,
        arm_l=arm_l,
        ipd=ipd_mm,
        pitch=DEFAULT_PITCH_HZ if pitch is None else pitch,
        squat_depth=assumed_depth,
        room_width=snapshot.room_width,
        room_length=snapshot.room_length,
        handedness=right_handed,
    )
