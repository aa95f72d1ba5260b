"""
Network-attribute clamps.

Latency is one-way bounded (packets can be held back, never sped up), so the
clamps here only ever add delay or drop frames:

- clamp_latency holds packets until their round trip reaches the clamp
- clamp_reaction pads every matched response by a fixed delay
- clamp_rate re-emits the stream on a fixed grid with sample-and-hold
"""

from dataclasses import dataclass, replace
from typing import Iterable, List, Optional

import numpy as np

from src.core.errors import InvalidInputError, InvalidParamsError
from src.core.telemetry import TelemetryFrame, TelemetryStream, pair_responses
from utils.logging_utils import get_logger

logger = get_logger(__name__)

# Timestamp resolution in milliseconds
TIME_RESOLUTION_MS = 1e-3

# Relative tolerance for treating an input rate as equal to the clamp
RATE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class TimedPacket:
    """A broadcast frame with its send time and simulated round-trip time (ms)."""

    frame: Optional[TelemetryFrame]
    send_time: float
    intrinsic_rtt: float
    observed_rtt: Optional[float] = None

    def __post_init__(self):
        if not np.isfinite(self.intrinsic_rtt) or self.intrinsic_rtt <= 0:
            raise InvalidInputError(f"Intrinsic RTT must be positive, got {self.intrinsic_rtt}")
        if self.observed_rtt is None:
            object.__setattr__(self, "observed_rtt", float(self.intrinsic_rtt))

    @property
    def added_delay(self) -> float:
        return self.observed_rtt - self.intrinsic_rtt


def _check_positive(name, value):
    if not np.isfinite(value) or value <= 0:
        raise InvalidParamsError(f"{name} must be positive, got {value}")


def clamp_latency(packets: Iterable[TimedPacket], clamp: float) -> List[TimedPacket]:
    """
    Delay packets so every observed RTT is at least the clamp.

    Args:
        packets: Packets in send order
        clamp (float): Round-trip clamp in ms

    Returns:
        list: Packets in the same order with observed_rtt = max(intrinsic_rtt, clamp)
    """
    _check_positive("Latency clamp", clamp)
    out = []
    last_send = -np.inf
    for packet in packets:
        if packet.send_time < last_send:
            raise InvalidInputError(
                f"Packet send times must be non-decreasing ({packet.send_time} after {last_send})"
            )
        last_send = packet.send_time
        out.append(replace(packet, observed_rtt=max(packet.intrinsic_rtt, float(clamp))))
    return out


def clamp_latency_channel(stream: TelemetryStream, clamp: float) -> TelemetryStream:
    """Apply the latency clamp to the rtt_ms sidecar of a recording."""
    _check_positive("Latency clamp", clamp)
    if stream.rtt_ms is None:
        logger.debug("Stream has no RTT channel; latency clamp skipped")
        return stream
    return replace(stream, rtt_ms=np.maximum(stream.rtt_ms, float(clamp)))


def clamp_reaction(stream: TelemetryStream, pad: float) -> TelemetryStream:
    """
    Delay every response that answers a stimulus by `pad` ms.

    Responses without a preceding unmatched stimulus are passed through with a
    warning.
    """
    if not np.isfinite(pad) or pad < 0:
        raise InvalidParamsError(f"Reaction pad must be non-negative, got {pad}")
    if pad == 0:
        return stream

    pairs, unmatched = pair_responses(stream.events)
    if unmatched:
        logger.warning(f"⚠️ {len(unmatched)} response(s) without a matching stimulus passed through")

    matched = {id(response) for _, response in pairs}
    events = tuple(e.delayed(pad) if id(e) in matched else e for e in stream.events)
    return replace(stream, events=events)


def clamp_rate(stream: TelemetryStream, rate: float) -> TelemetryStream:
    """
    Re-emit the stream on a fixed 1000/rate ms grid.

    Each grid slot carries the most recent input frame at or before it. Streams
    already at the clamp are returned unchanged; slower streams pass through with
    a warning because frames cannot be fabricated.

    Args:
        stream (TelemetryStream): Input frames in time order
        rate (float): Output rate in Hz

    Returns:
        TelemetryStream: Resampled stream
    """
    _check_positive("Rate clamp", rate)
    if len(stream) < 2:
        return stream

    input_rate = 1000.0 / float(np.median(stream.dt))
    if abs(input_rate - rate) <= RATE_TOLERANCE * rate:
        return stream
    if input_rate < rate:
        logger.warning(f"⚠️ Input rate {input_rate:.2f} Hz is below the {rate:g} Hz clamp; passing through")
        return stream

    step = 1000.0 / rate
    start, end = stream.t[0], stream.t[-1]
    slots = np.arange(int(np.floor((end - start) / step + 1e-9)) + 1)
    grid = start + slots * step
    # A small tolerance keeps frames that sit on a grid point despite rounding
    picks = np.searchsorted(stream.t, grid + 1e-6, side="right") - 1
    held = stream.take(picks)
    return replace(held, t=np.round(grid / TIME_RESOLUTION_MS) * TIME_RESOLUTION_MS)
