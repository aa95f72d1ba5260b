"""
Telemetry data types.

A TelemetryFrame is one tracked sample (head, controllers, optional eyes and
side channels). A TelemetryStream holds a whole session column-wise so that
transforms and attacks run vectorised; both expose the same field names, with
an extra leading axis on the stream.

Coordinates follow the Y-up play-space convention: x and z span the floor,
y is height above the floor, the origin sits at the room centre.
"""

from dataclasses import dataclass, field, replace
from typing import FrozenSet, Iterable, Iterator, List, Optional, Tuple

import numpy as np

from src.core.errors import InvalidInputError

EVENT_KINDS = ("stimulus", "response", "interaction")
HANDS = ("left", "right", "none")

SWAPPED_HAND = {"left": "right", "right": "left", "none": "none"}


@dataclass(frozen=True)
class Event:
    """A discrete event with its own timestamp in milliseconds."""

    kind: str
    hand: str = "none"
    t: float = 0.0

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise InvalidInputError(f"Unknown event kind '{self.kind}', expected one of {EVENT_KINDS}")
        if self.hand not in HANDS:
            raise InvalidInputError(f"Unknown event hand '{self.hand}', expected one of {HANDS}")
        if not np.isfinite(self.t):
            raise InvalidInputError(f"Event timestamp must be finite, got {self.t}")

    def mirrored(self) -> "Event":
        return replace(self, hand=SWAPPED_HAND[self.hand])

    def delayed(self, delay_ms: float) -> "Event":
        return replace(self, t=self.t + delay_ms)


def _as_points(value, shape, name):
    array = np.array(value, dtype=float)
    if array.shape != shape:
        raise InvalidInputError(f"'{name}' must have shape {shape}, got {array.shape}")
    if not np.all(np.isfinite(array)):
        raise InvalidInputError(f"'{name}' contains non-finite coordinates")
    return array


@dataclass(frozen=True, eq=False)
class TelemetryFrame:
    """
    One timestamped tracking sample.

    Attributes:
        t: Milliseconds since session start
        head, right, left: (x, y, z) positions in meters
        eyes: Optional (2, 3) array, row 0 the left eye and row 1 the right eye
        pitch_hz: Optional voice pitch channel
        events: Events attached to this frame
        rtt_ms: Optional round-trip time sidecar
        flags: Pass-through markers set by transforms (e.g. "ipd_noop")
    """

    t: float
    head: np.ndarray
    right: np.ndarray
    left: np.ndarray
    eyes: Optional[np.ndarray] = None
    pitch_hz: Optional[float] = None
    events: Tuple[Event, ...] = ()
    rtt_ms: Optional[float] = None
    flags: FrozenSet[str] = field(default_factory=frozenset)

    def __post_init__(self):
        if not np.isfinite(self.t) or self.t < 0:
            raise InvalidInputError(f"Frame timestamp must be finite and non-negative, got {self.t}")
        object.__setattr__(self, "t", float(self.t))
        for name in ("head", "right", "left"):
            object.__setattr__(self, name, _as_points(getattr(self, name), (3,), name))
        if self.eyes is not None:
            object.__setattr__(self, "eyes", _as_points(self.eyes, (2, 3), "eyes"))
        for name in ("pitch_hz", "rtt_ms"):
            value = getattr(self, name)
            if value is not None:
                if not np.isfinite(value):
                    raise InvalidInputError(f"'{name}' must be finite, got {value}")
                object.__setattr__(self, name, float(value))
        object.__setattr__(self, "events", tuple(self.events))
        object.__setattr__(self, "flags", frozenset(self.flags))

    def same_as(self, other: "TelemetryFrame") -> bool:
        """Exact equality of every channel."""
        return (
            self.t == other.t
            and _same(self.head, other.head)
            and _same(self.right, other.right)
            and _same(self.left, other.left)
            and _same(self.eyes, other.eyes)
            and self.pitch_hz == other.pitch_hz
            and self.events == other.events
            and self.rtt_ms == other.rtt_ms
        )


def _same(a, b):
    if a is None or b is None:
        return a is None and b is None
    return np.array_equal(a, b)


@dataclass(frozen=True, eq=False)
class TelemetryStream:
    """
    A session of frames stored column-wise.

    Events are kept in one tuple for the whole stream, ordered by time.
    """

    t: np.ndarray
    head: np.ndarray
    right: np.ndarray
    left: np.ndarray
    eyes: Optional[np.ndarray] = None
    pitch_hz: Optional[np.ndarray] = None
    events: Tuple[Event, ...] = ()
    rtt_ms: Optional[np.ndarray] = None
    flags: FrozenSet[str] = field(default_factory=frozenset)

    def __post_init__(self):
        t = np.array(self.t, dtype=float).reshape(-1)
        if not np.all(np.isfinite(t)) or np.any(t < 0):
            raise InvalidInputError("Stream timestamps must be finite and non-negative")
        n = len(t)
        object.__setattr__(self, "t", t)
        for name in ("head", "right", "left"):
            object.__setattr__(self, name, _as_points(getattr(self, name), (n, 3), name))
        if self.eyes is not None:
            object.__setattr__(self, "eyes", _as_points(self.eyes, (n, 2, 3), "eyes"))
        for name in ("pitch_hz", "rtt_ms"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, _as_points(value, (n,), name))
        object.__setattr__(self, "events", tuple(sorted(self.events, key=lambda e: e.t)))
        object.__setattr__(self, "flags", frozenset(self.flags))

    def __len__(self) -> int:
        return len(self.t)

    @property
    def dt(self) -> np.ndarray:
        """Inter-frame intervals in milliseconds."""
        return np.diff(self.t)

    def events_of(self, kind: str) -> List[Event]:
        return [e for e in self.events if e.kind == kind]

    @classmethod
    def from_frames(cls, frames: Iterable[TelemetryFrame]) -> "TelemetryStream":
        """Stack frames into a stream; optional channels must be present in all frames or none."""
        frames = list(frames)
        if not frames:
            raise InvalidInputError("Cannot build a stream from zero frames")

        def optional(name):
            present = [getattr(f, name) is not None for f in frames]
            if all(present):
                return np.array([getattr(f, name) for f in frames], dtype=float)
            if any(present):
                raise InvalidInputError(f"Channel '{name}' is present in some frames but not all")
            return None

        n = len(frames)
        return cls(
            t=np.array([f.t for f in frames]),
            head=np.array([f.head for f in frames]).reshape(n, 3),
            right=np.array([f.right for f in frames]).reshape(n, 3),
            left=np.array([f.left for f in frames]).reshape(n, 3),
            eyes=optional("eyes"),
            pitch_hz=optional("pitch_hz"),
            events=tuple(e for f in frames for e in f.events),
            rtt_ms=optional("rtt_ms"),
            flags=frozenset().union(*(f.flags for f in frames)),
        )

    def event_slots(self) -> np.ndarray:
        """Index of the frame each event is attached to: the last frame not after the event."""
        times = np.array([e.t for e in self.events], dtype=float)
        return np.maximum(np.searchsorted(self.t, times, side="right") - 1, 0)

    def frames(self) -> Iterator[TelemetryFrame]:
        per_frame: List[List[Event]] = [[] for _ in range(len(self))]
        for event, slot in zip(self.events, self.event_slots()):
            per_frame[slot].append(event)
        for i in range(len(self)):
            yield self.frame(i, tuple(per_frame[i]))

    def frame(self, i: int, events: Tuple[Event, ...] = ()) -> TelemetryFrame:
        return TelemetryFrame(
            t=self.t[i],
            head=self.head[i],
            right=self.right[i],
            left=self.left[i],
            eyes=None if self.eyes is None else self.eyes[i],
            pitch_hz=None if self.pitch_hz is None else self.pitch_hz[i],
            events=events,
            rtt_ms=None if self.rtt_ms is None else self.rtt_ms[i],
            flags=self.flags,
        )

    def take(self, indices) -> "TelemetryStream":
        """Sub-stream of the given frame indices; events are kept unchanged."""
        indices = np.asarray(indices, dtype=int)

        def pick(array):
            return None if array is None else array[indices]

        return replace(
            self,
            t=self.t[indices],
            head=self.head[indices],
            right=self.right[indices],
            left=self.left[indices],
            eyes=pick(self.eyes),
            pitch_hz=pick(self.pitch_hz),
            rtt_ms=pick(self.rtt_ms),
        )

    def same_as(self, other: "TelemetryStream") -> bool:
        return (
            len(self) == len(other)
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.head, other.head)
            and np.array_equal(self.right, other.right)
            and np.array_equal(self.left, other.left)
            and _same(self.eyes, other.eyes)
            and _same(self.pitch_hz, other.pitch_hz)
            and _same(self.rtt_ms, other.rtt_ms)
            and self.events == other.events
        )


def pair_responses(events: Iterable[Event]):
    """
    Match each response to the most recent preceding unmatched stimulus.

    Returns:
        tuple: (pairs, unmatched) where pairs is a list of (stimulus, response)
        and unmatched lists the responses that found no stimulus
    """
    pending: List[Event] = []
    pairs: List[Tuple[Event, Event]] = []
    unmatched: List[Event] = []
    for event in sorted(events, key=lambda e: e.t):
        if event.kind == "stimulus":
            pending.append(event)
        elif event.kind == "response":
            if pending:
                pairs.append((pending.pop(), event))
            else:
                unmatched.append(event)
    return pairs, unmatched
