"""
Core modules for the telemetry incognito engine.

mechanisms   bounded Laplace, randomized response, budget ledger
telemetry    frame and stream types
transforms   per-attribute position and channel transforms
calibration  ground truth from a T-pose snapshot
session      defense configuration, per-session offsets, frame processing
netshield    latency, reaction time and refresh rate clamps
adversary    attribute estimators, geolocation, identification
synthpop     synthetic users and scripted sessions
harness      experiments, metrics and reports
"""

__all__ = [
    "adversary",
    "calibration",
    "errors",
    "harness",
    "mechanisms",
    "netshield",
    "session",
    "synthpop",
    "telemetry",
    "transforms",
]
