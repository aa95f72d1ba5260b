import pytest

from src.core.calibration import CalibrationSnapshot, calibrate
from src.core.errors import CalibrationError, InvalidInputError


def _snapshot(**changes):
    data = dict(
        head=[0.0, 1.7, 0.0],
        left_eye=[-0.0315, 1.65, 0.05],
        right_eye=[0.0315, 1.65, 0.05],
        left_hand=[-0.85, 1.4, 0.0],
        right_hand=[0.85, 1.4, 0.0],
        floor_origin=[0.0, 0.0, 0.0],
        floor_normal=[0.0, 1.0, 0.0],
        room_width=4.0,
        room_length=3.0,
    )
    data.update(changes)
    return CalibrationSnapshot(**data)


def test_height_is_distance_to_floor():
    assert calibrate(_snapshot()).height == pytest.approx(1.7)


def test_unnormalised_normal_accepted():
    assert calibrate(_snapshot(floor_normal=[0.0, 2.5, 0.0])).height == pytest.approx(1.7)


def test_raised_floor_origin():
    assert calibrate(_snapshot(floor_origin=[1.0, 0.2, -1.0])).height == pytest.approx(1.5)


def test_ipd_in_millimeters():
    assert calibrate(_snapshot()).ipd == pytest.approx(63.0)


def test_arms_and_wingspan():
    truth = calibrate(_snapshot())
    assert truth.arm_r == pytest.approx(0.85)
    assert truth.arm_l == pytest.approx(0.85)
    assert truth.wingspan == pytest.approx(1.7)


def test_defaults_fill_unmeasurable_fields():
    truth = calibrate(_snapshot(), assumed_depth=0.6, pitch=140.0, right_handed=False)
    assert truth.squat_depth == 0.6
    assert truth.pitch == 140.0
    assert truth.handedness is False
    assert (truth.room_width, truth.room_length) == (4.0, 3.0)


def test_default_pitch_and_depth():
    truth = calibrate(_snapshot())
    assert truth.squat_depth == pytest.approx(0.913)
    assert truth.pitch == pytest.approx(170.0)


def test_degenerate_normal():
    with pytest.raises(CalibrationError):
        calibrate(_snapshot(floor_normal=[0.0, 0.0, 0.0]))


def test_hands_at_head_rejected():
    with pytest.raises(CalibrationError):
        calibrate(_snapshot(right_hand=[0.02, 1.4, 0.01]))


def test_malformed_snapshot():
    with pytest.raises(InvalidInputError):
        _snapshot(head=[0.0, 1.7])
    with pytest.raises(InvalidInputError):
        CalibrationSnapshot.from_dict({"head": [0, 1.7, 0]})


def test_dict_round_trip():
    snapshot = _snapshot()
    assert CalibrationSnapshot.from_dict(snapshot.to_dict()).to_dict() == snapshot.to_dict()
