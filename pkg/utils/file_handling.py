"""
File helpers: the line-delimited telemetry format and report writers.

Telemetry files hold one JSON object per frame with keys in a fixed order
(t_ms, head, right, left, then the optional eyes, pitch_hz, events, rtt_ms).
Floats are written in their shortest round-trip form, so a file that is read
and written back without changes is byte-identical. A recording may end with a
{"session_report": ...} line, which readers skip.
"""

import csv
import json
import os
from pathlib import Path
from typing import Iterable, List, Optional, Tuple, Union

import numpy as np

from src.core.errors import InvalidInputError, TelemetryFormatError
from src.core.telemetry import Event, TelemetryFrame, TelemetryStream
from utils.logging_utils import get_logger

logger = get_logger(__name__)

REQUIRED_KEYS = ("t_ms", "head", "right", "left")
OPTIONAL_KEYS = ("eyes", "pitch_hz", "events", "rtt_ms")
REPORT_KEY = "session_report"


def _floats(array) -> List[float]:
    return [float(v) for v in np.asarray(array, dtype=float).reshape(-1)]


def frame_to_record(frame: TelemetryFrame) -> dict:
    """Serialise a frame into an ordered dictionary of plain Python values."""
    record = {
        "t_ms": float(frame.t),
        "head": _floats(frame.head),
        "right": _floats(frame.right),
        "left": _floats(frame.left),
    }
    if frame.eyes is not None:
        record["eyes"] = _floats(frame.eyes)
    if frame.pitch_hz is not None:
        record["pitch_hz"] = float(frame.pitch_hz)
    if frame.events:
        record["events"] = [{"kind": e.kind, "hand": e.hand, "t_ms": float(e.t)} for e in frame.events]
    if frame.rtt_ms is not None:
        record["rtt_ms"] = float(frame.rtt_ms)
    return record


def record_to_frame(record: dict) -> TelemetryFrame:
    """Parse one frame record; raises InvalidInputError on missing or malformed fields."""
    if not isinstance(record, dict):
        raise InvalidInputError(f"Expected a JSON object, got {type(record).__name__}")
    missing = [key for key in REQUIRED_KEYS if key not in record]
    if missing:
        raise InvalidInputError(f"Missing field(s) {missing}")
    unknown = set(record) - set(REQUIRED_KEYS) - set(OPTIONAL_KEYS)
    if unknown:
        raise InvalidInputError(f"Unknown field(s) {sorted(unknown)}")

    eyes = record.get("eyes")
    events = []
    for item in record.get("events") or []:
        try:
            events.append(Event(item["kind"], item.get("hand", "none"), float(item.get("t_ms", record["t_ms"]))))
        except (KeyError, TypeError, ValueError) as e:
            raise InvalidInputError(f"Malformed event {item!r}: {e}") from None
    try:
        return TelemetryFrame(
            t=float(record["t_ms"]),
            head=record["head"],
            right=record["right"],
            left=record["left"],
            eyes=None if eyes is None else np.asarray(eyes, dtype=float).reshape(2, 3),
            pitch_hz=record.get("pitch_hz"),
            events=tuple(events),
            rtt_ms=record.get("rtt_ms"),
        )
    except InvalidInputError:
        raise
    except (TypeError, ValueError) as e:
        raise InvalidInputError(str(e)) from None


def read_telemetry(path: Union[str, Path]) -> TelemetryStream:
    """
    Read a telemetry recording into a stream.

    Args:
        path: Recording in the line-delimited format

    Returns:
        TelemetryStream: Frames of the recording

    Raises:
        TelemetryFormatError: A line is not valid JSON or not a valid frame (1-based line number)
    """
    frames = []
    try:
        with open(path, "r", encoding="utf-8") as f:
            for line_number, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as e:
                    raise TelemetryFormatError(f"Invalid JSON: {e.msg}", str(path), line_number) from None
                if isinstance(record, dict) and REPORT_KEY in record:
                    continue
                try:
                    frames.append(record_to_frame(record))
                except InvalidInputError as e:
                    raise TelemetryFormatError(str(e), str(path), line_number) from None
    except OSError as e:
        raise OSError(f"Cannot read telemetry file {path}: {e.strerror}") from e

    if not frames:
        raise TelemetryFormatError("Recording contains no frames", str(path))
    try:
        return TelemetryStream.from_frames(frames)
    except InvalidInputError as e:
        raise TelemetryFormatError(str(e), str(path)) from None


def write_telemetry(
    path: Union[str, Path],
    telemetry: Union[TelemetryStream, Iterable[TelemetryFrame]],
    session_report: Optional[dict] = None,
) -> Path:
    """
    Write frames in the line-delimited format, optionally followed by a session report line.

    Returns:
        Path: The written file
    """
    target = Path(path)
    ensure_dir(target.parent)
    frames = telemetry.frames() if isinstance(telemetry, TelemetryStream) else telemetry
    with open(target, "w", encoding="utf-8", newline="\n") as f:
        for frame in frames:
            f.write(json.dumps(frame_to_record(frame)) + "\n")
        if session_report is not None:
            f.write(json.dumps({REPORT_KEY: session_report}, sort_keys=True) + "\n")
    logger.debug(f"Wrote telemetry to {target}")
    return target


def read_session_report(path: Union[str, Path]) -> Optional[dict]:
    """Return the trailing session report of a recording, if any."""
    report = None
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if REPORT_KEY in line:
                record = json.loads(line)
                if isinstance(record, dict) and REPORT_KEY in record:
                    report = record[REPORT_KEY]
    return report


def read_json(path: Union[str, Path]):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise InvalidInputError(f"Invalid JSON in {path}: {e}") from None
    except OSError as e:
        raise OSError(f"Cannot read {path}: {e.strerror}") from e


def write_json(path: Union[str, Path], data) -> Path:
    """Write JSON with sorted keys and a trailing newline (byte-stable output)."""
    target = Path(path)
    ensure_dir(target.parent)
    with open(target, "w", encoding="utf-8", newline="\n") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")
    return target


def write_csv(path: Union[str, Path], rows: List[dict], fieldnames: Optional[List[str]] = None) -> Path:
    """Write a list of dictionaries as CSV; columns follow `fieldnames` or the first row."""
    target = Path(path)
    ensure_dir(target.parent)
    fieldnames = fieldnames or (list(rows[0]) if rows else [])
    with open(target, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    return target


def read_csv(path: Union[str, Path]) -> Tuple[List[str], List[dict]]:
    """Read a CSV file into (fieldnames, rows)."""
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        return list(reader.fieldnames or []), list(reader)


def ensure_dir(path: Union[str, Path]) -> Path:
    os.makedirs(path, exist_ok=True)
    return Path(path)
