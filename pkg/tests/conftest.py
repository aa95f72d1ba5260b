"""Shared fixtures for the core test suite."""

import numpy as np
import pytest

from src.core.mechanisms import RandomSource
from src.core.telemetry import TelemetryFrame, TelemetryStream
from src.core.transforms import GroundTruth, SessionOffsets
from utils.settings import load_presets


@pytest.fixture
def rng():
    return RandomSource(1234)


@pytest.fixture(scope="session")
def presets():
    return load_presets()


@pytest.fixture
def truth():
    """A complete right-handed body used across transform and session tests."""
    return GroundTruth(
        height=1.7,
        arm_r=0.9,
        arm_l=0.8,
        ipd=63.0,
        pitch=120.0,
        squat_depth=0.5,
        room_width=4.0,
        room_length=3.0,
        handedness=True,
    )


@pytest.fixture
def identity_offsets(truth):
    return SessionOffsets(
        height=truth.height,
        depth=truth.squat_depth,
        span=truth.wingspan,
        ratio=truth.arm_ratio,
        room_width=truth.room_width,
        room_length=truth.room_length,
    )


def make_frame(head=(0.0, 1.7, 0.0), right=(0.3, 1.0, 0.0), left=(-0.3, 1.0, 0.0), t=0.0, **kwargs):
    return TelemetryFrame(t=t, head=head, right=right, left=left, **kwargs)


def make_stream(n=100, rate=90.0, height=1.7, **kwargs):
    """A user standing still at the room centre with relaxed hands."""
    t = np.arange(n) * (1000.0 / rate)
    head = np.tile([0.0, height, 0.0], (n, 1))
    right = np.tile([0.2, height - 0.75, 0.0], (n, 1))
    left = np.tile([-0.2, height - 0.75, 0.0], (n, 1))
    return TelemetryStream(t=t, head=head, right=right, left=left, **kwargs)
