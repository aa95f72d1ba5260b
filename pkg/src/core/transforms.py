"""
Coordinate transforms that hide anthropometric and environmental attributes.

Additive defenses (IPD, voice pitch) shift a static channel by a fixed offset.
Multiplicative defenses (height, squat depth, wingspan, arm ratio, room size)
rescale a coordinate range so that its zero point stays put and its extreme
lands exactly on the session's noisy value. Handedness is hidden by mirroring.

Every function here is pure and accepts either a TelemetryFrame or a
TelemetryStream; arrays are indexed with a leading ellipsis so the same code
works on one sample and on a whole session.
"""

import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Collection, Optional, Union

import numpy as np

from src.core.errors import InvalidInputError, InvalidParamsError, MissingTruthError
from src.core.telemetry import TelemetryFrame, TelemetryStream

Telemetry = Union[TelemetryFrame, TelemetryStream]

ARM_RATIO_MODES = ("corrected", "literal")

# Position defenses in composition order
POSITION_DEFENSES = ("room", "height", "depth", "wingspan", "arm_ratio", "handedness")

X, Y, Z = 0, 1, 2


@dataclass(frozen=True)
class GroundTruth:
    """
    Calibrated sensitive attributes of one user.

    Fields are optional so a partial calibration can still drive the defenses it
    covers; a defense that needs a missing field raises MissingTruthError.
    Lengths are in meters, ipd in millimeters, pitch in Hz.
    """

    height: Optional[float] = None
    arm_r: Optional[float] = None
    arm_l: Optional[float] = None
    ipd: Optional[float] = None
    pitch: Optional[float] = None
    squat_depth: Optional[float] = None
    room_width: Optional[float] = None
    room_length: Optional[float] = None
    handedness: Optional[bool] = None

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None or f.name == "handedness":
                continue
            if not math.isfinite(value) or value <= 0:
                raise InvalidInputError(f"Ground truth '{f.name}' must be positive and finite, got {value}")
            object.__setattr__(self, f.name, float(value))
        if self.handedness is not None:
            object.__setattr__(self, "handedness", bool(self.handedness))

    @property
    def wingspan(self) -> Optional[float]:
        if self.arm_r is None or self.arm_l is None:
            return None
        return self.arm_r + self.arm_l

    @property
    def arm_ratio(self) -> Optional[float]:
        """Right-arm fraction of the wingspan."""
        span = self.wingspan
        return None if span is None else self.arm_r / span

    def require(self, name: str, defense: Optional[str] = None):
        value = getattr(self, name)
        if value is None:
            raise MissingTruthError(name, defense)
        return value

    def retained(self) -> "RetainedTruth":
        """The subset of fields the frame transforms need after a session starts."""
        return RetainedTruth(
            height=self.height,
            squat_depth=self.squat_depth,
            arm_r=self.arm_r,
            arm_l=self.arm_l,
            room_width=self.room_width,
            room_length=self.room_length,
        )

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data) -> "GroundTruth":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known - {"wingspan", "arm_ratio", "user_id"}
        if unknown:
            raise InvalidInputError(f"Unknown ground truth field(s): {sorted(unknown)}")
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass(frozen=True)
class RetainedTruth:
    """Ground truth kept for the lifetime of a session (geometry only)."""

    height: Optional[float] = None
    squat_depth: Optional[float] = None
    arm_r: Optional[float] = None
    arm_l: Optional[float] = None
    room_width: Optional[float] = None
    room_length: Optional[float] = None

    wingspan = GroundTruth.wingspan
    arm_ratio = GroundTruth.arm_ratio
    require = GroundTruth.require


@dataclass(frozen=True)
class SessionOffsets:
    """
    Noisy attribute values frozen for one session.

    A value of None means the corresponding defense never had ground truth to
    work from; the session only calls transforms whose values are set.
    """

    height: Optional[float] = None
    depth: Optional[float] = None
    span: Optional[float] = None
    ratio: Optional[float] = None
    room_width: Optional[float] = None
    room_length: Optional[float] = None
    ipd_offset: float = 0.0
    pitch_offset: float = 0.0
    mirrored: bool = False


@dataclass(frozen=True)
class PolarDecomposition:
    """Controller positions relative to their midpoint on the floor plane."""

    d_r: np.ndarray
    d_l: np.ndarray
    alpha_r: np.ndarray
    alpha_l: np.ndarray
    mid_x: np.ndarray
    mid_z: np.ndarray


def _polar(dx, dz):
    d = np.hypot(dx, dz)
    alpha = np.arctan2(dz, dx)
    alpha = np.where(alpha <= -np.pi, np.pi, alpha)
    alpha = np.where(d == 0, 0.0, alpha)
    return d, alpha


def polar_transform(x_r, z_r, x_l, z_l) -> PolarDecomposition:
    """
    Decompose controller positions around their floor-plane midpoint.

    Args:
        x_r, z_r: Right controller floor coordinates (scalars or arrays)
        x_l, z_l: Left controller floor coordinates

    Returns:
        PolarDecomposition: Radii d_r == d_l and angles in (-pi, pi]; the angle is 0
        for a zero-length radius.
    """
    x_r, z_r, x_l, z_l = (np.asarray(v, dtype=float) for v in (x_r, z_r, x_l, z_l))
    mid_x = (x_r + x_l) / 2.0
    mid_z = (z_r + z_l) / 2.0
    d_r, alpha_r = _polar(x_r - mid_x, z_r - mid_z)
    d_l, alpha_l = _polar(x_l - mid_x, z_l - mid_z)
    return PolarDecomposition(d_r, d_l, alpha_r, alpha_l, mid_x, mid_z)


def _with_column(points, axis, delta):
    moved = points.copy()
    moved[..., axis] = moved[..., axis] + delta
    return moved


def _translate(telemetry: Telemetry, axis: int, delta) -> Telemetry:
    """Shift head, controllers and eyes along one axis."""
    delta = np.asarray(delta, dtype=float)
    eyes = telemetry.eyes
    if eyes is not None:
        eyes = _with_column(eyes, axis, delta[..., None])
    return replace(
        telemetry,
        head=_with_column(telemetry.head, axis, delta),
        right=_with_column(telemetry.right, axis, delta),
        left=_with_column(telemetry.left, axis, delta),
        eyes=eyes,
    )


def _flag(telemetry: Telemetry, flag: str) -> Telemetry:
    return replace(telemetry, flags=telemetry.flags | {flag})


def apply_ipd(telemetry: Telemetry, offsets: SessionOffsets) -> Telemetry:
    """
    Widen or narrow the eye gap by offsets.ipd_offset millimeters.

    Both eyes move symmetrically along their connecting axis about their
    own midpoint, which stays fixed even though tracked eyes sit in front of
    and below the head point. The head point is untouched. Frames without
    eyes pass through with the "ipd_noop" flag.
    """
    if telemetry.eyes is None:
        return _flag(telemetry, "ipd_noop")
    if offsets.ipd_offset == 0:
        return telemetry

    left_eye = telemetry.eyes[..., 0, :]
    right_eye = telemetry.eyes[..., 1, :]
    mid = (left_eye + right_eye) / 2.0
    axis = right_eye - left_eye
    gap = np.linalg.norm(axis, axis=-1, keepdims=True)
    unit = np.divide(axis, gap, out=np.zeros_like(axis), where=gap > 0)
    half = (gap + offsets.ipd_offset / 1000.0) / 2.0
    half = np.where(gap > 0, half, 0.0)

    eyes = np.stack([mid - unit * half, mid + unit * half], axis=-2)
    eyes = np.where(gap[..., None] > 0, eyes, telemetry.eyes)
    return replace(telemetry, eyes=eyes)


def apply_pitch(telemetry: Telemetry, offsets: SessionOffsets) -> Telemetry:
    """Shift the voice pitch channel by offsets.pitch_offset Hz."""
    if telemetry.pitch_hz is None:
        return _flag(telemetry, "pitch_noop")
    if offsets.pitch_offset == 0:
        return telemetry
    return replace(telemetry, pitch_hz=telemetry.pitch_hz + offsets.pitch_offset)


def height_offset(y_h, truth, offsets: SessionOffsets):
    height = truth.require("height", "height")
    return y_h * (offsets.height / height) - y_h


def depth_offset(y_h, truth, offsets: SessionOffsets):
    height = truth.require("height", "depth")
    depth = truth.require("squat_depth", "depth")
    return (height - ((height - y_h) / depth) * offsets.depth) - y_h


def apply_height(telemetry: Telemetry, truth, offsets: SessionOffsets) -> Telemetry:
    """
    Rescale vertical range so the floor stays at 0 and full height maps to height'.

    The head-derived offset is added to the head, both controllers and the eyes.
    """
    return _translate(telemetry, Y, height_offset(telemetry.head[..., Y], truth, offsets))


def apply_depth(telemetry: Telemetry, truth, offsets: SessionOffsets) -> Telemetry:
    """Rescale the squat range below standing height so the lowest squat reads depth'."""
    return _translate(telemetry, Y, depth_offset(telemetry.head[..., Y], truth, offsets))


def apply_room(telemetry: Telemetry, truth, offsets: SessionOffsets) -> Telemetry:
    """Scale the head's floor position by W'/W and L'/L around the room centre."""
    width = truth.require("room_width", "room")
    length = truth.require("room_length", "room")
    x_h = telemetry.head[..., X]
    z_h = telemetry.head[..., Z]
    moved = _translate(telemetry, X, x_h * (offsets.room_width / width) - x_h)
    return _translate(moved, Z, z_h * (offsets.room_length / length) - z_h)


def _displace_radially(points, offset, alpha):
    moved = points.copy()
    moved[..., X] = moved[..., X] + offset * np.cos(alpha)
    moved[..., Z] = moved[..., Z] + offset * np.sin(alpha)
    return moved


def apply_wingspan(telemetry: Telemetry, truth, offsets: SessionOffsets) -> Telemetry:
    """
    Scale both controllers radially about their midpoint so full extension spans span'.

    Each side is measured against half the true wingspan, which is the
    midpoint-relative reach at full extension.
    """
    span = truth.require("arm_r", "wingspan") + truth.require("arm_l", "wingspan")
    polar = polar_transform(
        telemetry.right[..., X], telemetry.right[..., Z], telemetry.left[..., X], telemetry.left[..., Z]
    )
    scale = offsets.span / span
    offset_r = polar.d_r * scale - polar.d_r
    offset_l = polar.d_l * scale - polar.d_l
    return replace(
        telemetry,
        right=_displace_radially(telemetry.right, offset_r, polar.alpha_r),
        left=_displace_radially(telemetry.left, offset_l, polar.alpha_l),
    )


def arm_reference(truth, offsets: SessionOffsets, after_wingspan: bool = False):
    """
    Head-relative reach of each arm at full T-pose extension and the span they add up to.

    Args:
        truth: GroundTruth or RetainedTruth with both arm lengths
        offsets: Session offsets (span' is read when after_wingspan is set)
        after_wingspan (bool): Whether the wingspan defense already rescaled the controllers

    Returns:
        tuple: (reach_r, reach_l, span)
    """
    arm_r = truth.require("arm_r", "arm_ratio")
    arm_l = truth.require("arm_l", "arm_ratio")
    if not after_wingspan:
        return arm_r, arm_l, arm_r + arm_l
    skew = (arm_r - arm_l) / 2.0
    half = offsets.span / 2.0
    return half + skew, half - skew, offsets.span


def apply_arm_ratio(
    telemetry: Telemetry,
    truth,
    offsets: SessionOffsets,
    mode: str = "corrected",
    after_wingspan: bool = False,
) -> Telemetry:
    """
    Rescale each controller's reach from the head so the apparent arm ratio becomes ratio'.

    Args:
        telemetry: Frame or stream
        truth: Ground truth with arm lengths
        offsets: Session offsets holding ratio'
        mode (str): "corrected" keeps the full-extension span and moves the left
            arm to span * (1 - ratio'); "literal" uses span * (1 / ratio') for the
            left arm as the original formula reads
        after_wingspan (bool): Measure reach against the post-wingspan T-pose

    Returns:
        Transformed frame or stream
    """
    if mode not in ARM_RATIO_MODES:
        raise InvalidParamsError(f"Unknown arm ratio mode '{mode}', expected one of {ARM_RATIO_MODES}")
    ratio = offsets.ratio
    if ratio is None or not 0 < ratio < 1:
        raise InvalidParamsError(f"Noisy arm ratio must lie in (0, 1), got {ratio}")

    reach_r, reach_l, span = arm_reference(truth, offsets, after_wingspan)
    target_r = span * ratio
    target_l = span * (1.0 - ratio) if mode == "corrected" else span * (1.0 / ratio)

    head = telemetry.head
    d_r, alpha_r = _polar(telemetry.right[..., X] - head[..., X], telemetry.right[..., Z] - head[..., Z])
    d_l, alpha_l = _polar(telemetry.left[..., X] - head[..., X], telemetry.left[..., Z] - head[..., Z])
    offset_r = (d_r / reach_r) * target_r - d_r
    offset_l = (d_l / reach_l) * target_l - d_l
    return replace(
        telemetry,
        right=_displace_radially(telemetry.right, offset_r, alpha_r),
        left=_displace_radially(telemetry.left, offset_l, alpha_l),
    )


def _negate_x(points):
    if points is None:
        return None
    flipped = points.copy()
    flipped[..., X] = -flipped[..., X]
    return flipped


def apply_mirror(telemetry: Telemetry, offsets: SessionOffsets) -> Telemetry:
    """Reflect across the x = 0 plane and swap left/right channels and event hands."""
    if not offsets.mirrored:
        return telemetry
    eyes = _negate_x(telemetry.eyes)
    if eyes is not None:
        eyes = eyes[..., ::-1, :].copy()
    return replace(
        telemetry,
        head=_negate_x(telemetry.head),
        right=_negate_x(telemetry.left),
        left=_negate_x(telemetry.right),
        eyes=eyes,
        events=tuple(e.mirrored() for e in telemetry.events),
    )


def compose_positions(
    telemetry: Telemetry,
    truth,
    offsets: SessionOffsets,
    enabled: Collection[str],
    mode: str = "corrected",
) -> Telemetry:
    """
    Apply the enabled position defenses in their fixed order.

    Order: room, height and depth, wingspan, arm ratio, mirror. With both
    vertical defenses on, depth rescales the squat range below standing height
    and height then lifts the standing level to height' by a constant, so the
    head reads height' standing and height' - depth' at the lowest squat.
    """
    out = telemetry
    if "room" in enabled:
        out = apply_room(out, truth, offsets)

    y_h = out.head[..., Y]
    if "height" in enabled and "depth" in enabled:
        lift = offsets.height - truth.require("height", "height")
        out = _translate(out, Y, depth_offset(y_h, truth, offsets) + lift)
    elif "height" in enabled:
        out = _translate(out, Y, height_offset(y_h, truth, offsets))
    elif "depth" in enabled:
        out = _translate(out, Y, depth_offset(y_h, truth, offsets))

    if "wingspan" in enabled:
        out = apply_wingspan(out, truth, offsets)
    if "arm_ratio" in enabled:
        out = apply_arm_ratio(out, truth, offsets, mode, after_wingspan="wingspan" in enabled)
    if "handedness" in enabled:
        out = apply_mirror(out, offsets)
    return out
