"""
Experiment harness.

Replays synthetic sessions through the defenses at each privacy level, runs the
attack suite on what a server would observe, and aggregates accuracy-within-
threshold and R^2 figures with bootstrap confidence intervals.
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core import adversary
from src.core.calibration import calibrate
from src.core.errors import ConfigError, EstimationError, InvalidParamsError
from src.core.mechanisms import RandomSource
from src.core.netshield import TimedPacket, clamp_latency
from src.core.session import DefenseConfig, PrivacyLevel, begin_session, defend_stream, effective_clamps, session_report
from src.core.synthpop import DISTRIBUTIONS, SyntheticUser, calibration_snapshot, generate_session, sample_population
from src.core.transforms import GroundTruth
from utils.file_handling import read_telemetry, write_csv, write_json, write_telemetry
from utils.logging_utils import get_logger
from utils.parallel import ordered_map
from utils.settings import load_presets, load_settings

logger = get_logger(__name__)

KNOWN_ATTACKS = tuple(adversary.ATTACKS) + adversary.POPULATION_ATTACKS

# Accuracy thresholds per attack, in the attack's units (room in m^2)
THRESHOLDS: Dict[str, Tuple[float, ...]] = {
    "height": (0.05, 0.07),
    "wingspan": (0.07, 0.12),
    "arm_ratio": (0.01,),
    "longer_arm": (0.01, 0.03),
    "ipd": (0.5,),
    "room": (2.0, 3.0),
    "depth": (0.05, 0.10),
    "pitch": (10.0,),
    "reaction": (20.0, 50.0),
    "refresh_rate": (3.0,),
    "geolocation": (400.0, 500.0),
}

# Attacks scored by exact match
CATEGORICAL = ("handedness", "identity")

# Multilateration anchors (km); synthetic homes lie inside this square
ANCHORS_KM = ((0.0, 0.0), (2000.0, 0.0), (0.0, 2000.0), (2000.0, 2000.0))

SWEEP_ATTRIBUTES = ("height", "depth", "wingspan", "arm_ratio", "room", "ipd", "pitch")

DECIMALS = 6


def _arm_difference(stream):
    right, left = adversary.arm_reach(stream)
    return right - left


def _room_area(stream):
    width, length = adversary.estimate_room(stream)
    return width * length


# Numeric value each attack is scored on
SCORED_ESTIMATORS = {
    "height": adversary.estimate_height,
    "wingspan": adversary.estimate_wingspan,
    "arm_ratio": adversary.estimate_arm_ratio,
    "longer_arm": _arm_difference,
    "ipd": adversary.estimate_ipd,
    "room": _room_area,
    "depth": adversary.estimate_depth,
    "pitch": adversary.estimate_pitch,
    "reaction": adversary.estimate_reaction,
    "refresh_rate": adversary.estimate_refresh_rate,
    "handedness": adversary.estimate_handedness,
}


def true_value(attack: str, user: SyntheticUser, frame_rate: Optional[float] = None):
    truth = user.truth
    return {
        "height": lambda: truth.height,
        "wingspan": lambda: truth.wingspan,
        "arm_ratio": lambda: truth.arm_ratio,
        "longer_arm": lambda: truth.arm_r - truth.arm_l,
        "ipd": lambda: truth.ipd,
        "room": lambda: truth.room_width * truth.room_length,
        "depth": lambda: truth.squat_depth,
        "pitch": lambda: truth.pitch,
        "reaction": lambda: user.reaction_ms,
        "refresh_rate": lambda: float(frame_rate or user.device_rate),
        "handedness": lambda: truth.handedness,
    }[attack]()


@dataclass(frozen=True)
class ExperimentSpec:
    """Population, session script, levels and attacks of one experiment."""

    population: int = 100
    sessions_per_user: int = 2
    duration_s: float = 60.0
    frame_rate_hz: Optional[float] = None
    levels: Tuple[str, ...] = ("off", "low", "medium", "high")
    attacks: Tuple[str, ...] = KNOWN_ATTACKS
    seed: int = 0
    distribution: str = "uniform"
    jitter_m: float = 0.005
    features: Optional[Tuple[str, ...]] = None
    workers: int = 4
    bootstrap_resamples: int = 1000
    confidence: float = 0.99
    output_dir: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        object.__setattr__(self, "attacks", tuple(self.attacks))
        if self.features is not None:
            object.__setattr__(self, "features", tuple(self.features))
        if not self.levels:
            raise ConfigError("Experiment needs at least one privacy level")
        for level in self.levels:
            PrivacyLevel.parse(level)
        if not self.attacks:
            raise ConfigError("Experiment needs at least one attack")
        unknown = set(self.attacks) - set(KNOWN_ATTACKS)
        if unknown:
            raise ConfigError(f"Unknown attack(s) {sorted(unknown)}, expected names from {list(KNOWN_ATTACKS)}")
        if self.population < 1 or self.sessions_per_user < 1 or self.workers < 1:
            raise ConfigError("population, sessions_per_user and workers must be positive")
        if "identity" in self.attacks and self.sessions_per_user < 2:
            raise ConfigError("The identity attack needs at least 2 sessions per user")
        if self.duration_s < 10:
            raise ConfigError(f"duration_s must be at least 10, got {self.duration_s}")
        if self.frame_rate_hz is not None and self.frame_rate_hz <= 0:
            raise ConfigError(f"frame_rate_hz must be positive, got {self.frame_rate_hz}")
        if self.distribution not in DISTRIBUTIONS:
            raise ConfigError(f"Unknown distribution '{self.distribution}', expected one of {DISTRIBUTIONS}")
        if not 0 < self.confidence < 1 or self.bootstrap_resamples < 1:
            raise ConfigError("confidence must lie in (0, 1) and bootstrap_resamples must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown experiment spec key(s) {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Invalid JSON in experiment spec {path}: {e}") from None
        except OSError as e:
            raise OSError(f"Cannot read experiment spec {path}: {e.strerror}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"Experiment spec {path} must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}


@dataclass
class AttackReport:
    """Accuracy and R^2 rows per attack, level and threshold."""

    spec: dict
    rows: List[dict] = field(default_factory=list)

    def to_dict(self):
        return {"spec": self.spec, "rows": self.rows}

    def row(self, attack: str, level: str, threshold=None) -> dict:
        for row in self.rows:
            if row["attack"] == attack and row["level"] == level and (threshold is None or row["threshold"] == threshold):
                return row
        raise KeyError(f"No report row for {attack} at level {level}")


def _round(value):
    if value is None or not np.isfinite(value):
        return None
    return round(float(value), DECIMALS)


def r_squared(estimates, truths) -> float:
    """
    Coefficient of determination of the least-squares line relating estimates to truth.

    Pairs with a missing estimate are dropped; NaN when either side is constant.
    """
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(truths, dtype=float)
    keep = np.isfinite(est) & np.isfinite(tru)
    return float(_r_squared_rows(est[keep][None, :], tru[keep][None, :])[0])


def _r_squared_rows(x, y):
    if x.shape[1] < 2:
        return np.full(x.shape[0], np.nan)
    xm = x - x.mean(axis=1, keepdims=True)
    ym = y - y.mean(axis=1, keepdims=True)
    denominator = (xm ** 2).sum(axis=1) * (ym ** 2).sum(axis=1)
    numerator = (xm * ym).sum(axis=1) ** 2
    return np.divide(numerator, denominator, out=np.full(x.shape[0], np.nan), where=denominator > 0)


def bootstrap_ci(values, rng: RandomSource, resamples: int, confidence: float) -> Tuple[float, float, float]:
    """Mean of values with a percentile bootstrap interval."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return float("nan"), float("nan"), float("nan")
    mean = float(arr.mean())
    if arr.size == 1:
        return mean, mean, mean
    idx = rng.generator.integers(0, arr.size, size=(int(resamples), arr.size))
    samples = arr[idx].mean(axis=1)
    tail = (1.0 - confidence) / 2.0
    return mean, float(np.quantile(samples, tail)), float(np.quantile(samples, 1.0 - tail))


def bootstrap_r_squared(estimates, truths, rng: RandomSource, resamples: int, confidence: float):
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(truths, dtype=float)
    keep = np.isfinite(est) & np.isfinite(tru)
    est, tru = est[keep], tru[keep]
    point = r_squared(est, tru)
    if est.size < 2 or not np.isfinite(point):
        return point, float("nan"), float("nan")
    idx = rng.generator.integers(0, est.size, size=(int(resamples), est.size))
    samples = _r_squared_rows(est[idx], tru[idx])
    samples = samples[np.isfinite(samples)]
    if samples.size == 0:
        return point, float("nan"), float("nan")
    tail = (1.0 - confidence) / 2.0
    return point, float(np.quantile(samples, tail)), float(np.quantile(samples, 1.0 - tail))


def _session_seed(seed: int, user_id: str, session: int) -> int:
    return RandomSource(seed).derive("session", user_id, session).seed


def _safe(estimator, stream):
    try:
        value = estimator(stream)
    except EstimationError as e:
        logger.debug(f"Estimate unavailable: {e}")
        return float("nan")
    return float(value)


def calibrated_truth(user: SyntheticUser) -> GroundTruth:
    """Calibrate from the user's T-pose; depth and pitch cannot be read from one pose and are supplied."""
    return calibrate(
        calibration_snapshot(user),
        assumed_depth=user.truth.squat_depth,
        pitch=user.truth.pitch,
        right_handed=user.truth.handedness,
    )


def observed_rtts(location_km, config: DefenseConfig, propagation=adversary.DEFAULT_PROPAGATION_KM_PER_MS):
    """RTTs a server at each anchor would observe, after the active latency clamp."""
    location = np.asarray(location_km, dtype=float)
    packets = [
        TimedPacket(None, 0.0, float(2.0 * np.linalg.norm(location - np.asarray(anchor)) / propagation))
        for anchor in ANCHORS_KM
    ]
    clamps = effective_clamps(config)
    if "latency_geo" in clamps:
        packets = clamp_latency(packets, clamps["latency_geo"])
    return [(anchor, packet.observed_rtt) for anchor, packet in zip(ANCHORS_KM, packets)]


def _user_results(spec: ExperimentSpec, configs: Dict[str, DefenseConfig], user: SyntheticUser) -> dict:
    truth = calibrated_truth(user)
    stream_attacks = [a for a in spec.attacks if a in SCORED_ESTIMATORS]
    results = {level: {"estimates": {a: [] for a in stream_attacks}, "features": [], "geo_error": []}
               for level in configs}

    for s in range(spec.sessions_per_user):
        stream = generate_session(user, spec.duration_s, spec.frame_rate_hz, _session_seed(spec.seed, user.user_id, s))
        for level, config in configs.items():
            session = begin_session(config, truth, f"{user.user_id}:{s}")
            observed = defend_stream(session, stream)
            bucket = results[level]
            for attack in stream_attacks:
                bucket["estimates"][attack].append(_safe(SCORED_ESTIMATORS[attack], observed))
            if "identity" in spec.attacks:
                bucket["features"].append(adversary.extract_features(observed))
            if "geolocation" in spec.attacks:
                fix = adversary.geolocate(observed_rtts(user.location_km, config))
                bucket["geo_error"].append(float(np.linalg.norm(fix.position - np.asarray(user.location_km))))
    return results


def _metric_rows(attack, level, estimates, truths, rng, spec, categorical=False):
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(truths, dtype=float)
    rows = []
    if categorical:
        correct = np.where(np.isfinite(est), est == tru, False).astype(float)
        acc, lo, hi = bootstrap_ci(correct * 100.0, rng.derive("accuracy"), spec.bootstrap_resamples, spec.confidence)
        return [dict(attack=attack, level=level, n=int(est.size), threshold="exact", accuracy=_round(acc),
                     accuracy_lo=_round(lo), accuracy_hi=_round(hi), r2=None, r2_lo=None, r2_hi=None,
                     mean_abs_error=None)]

    error = np.abs(est - tru)
    mae = float(np.nanmean(error)) if np.any(np.isfinite(error)) else float("nan")
    if attack == "geolocation":
        r2 = r2_lo = r2_hi = None
    else:
        r2, r2_lo, r2_hi = bootstrap_r_squared(est, tru, rng.derive("r2"), spec.bootstrap_resamples, spec.confidence)
    for threshold in THRESHOLDS[attack]:
        within = np.where(np.isfinite(error), error <= threshold, False).astype(float) * 100.0
        acc, lo, hi = bootstrap_ci(within, rng.derive("accuracy", threshold), spec.bootstrap_resamples,
                                   spec.confidence)
        rows.append(dict(attack=attack, level=level, n=int(est.size), threshold=threshold, accuracy=_round(acc),
                         accuracy_lo=_round(lo), accuracy_hi=_round(hi), r2=_round(r2), r2_lo=_round(r2_lo),
                         r2_hi=_round(r2_hi), mean_abs_error=_round(mae)))
    return rows


def _level_configs(spec: ExperimentSpec, levels, overrides=None, features=None):
    presets = load_presets()
    return {
        PrivacyLevel.parse(level).value: DefenseConfig(
            level=level,
            enabled=features if features is not None else spec.features,
            overrides=dict(overrides or {}),
            seed=spec.seed,
            presets=presets,
        )
        for level in levels
    }


def run_experiment(spec: ExperimentSpec) -> AttackReport:
    """
    Run every attack at every privacy level over a synthetic population.

    Every random stream is keyed to (seed, user, session), so the report does
    not depend on worker scheduling.

    Returns:
        AttackReport: One row per attack, level and threshold; written to
        spec.output_dir when set
    """
    logger.info("=" * 80)
    logger.info(f"📋 Experiment: {spec.population} user(s) x {spec.sessions_per_user} session(s), "
                f"levels {list(spec.levels)}")
    logger.info("=" * 80)

    users = sample_population(spec.population, spec.seed, spec.distribution, spec.jitter_m)
    configs = _level_configs(spec, spec.levels)
    per_user = ordered_map(lambda user: _user_results(spec, configs, user), users, spec.workers, "sessions")

    report = AttackReport(spec=spec.to_dict())
    root = RandomSource(spec.seed).derive("bootstrap")
    for level in configs:
        for attack in spec.attacks:
            rng = root.derive(level, attack)
            if attack == "identity":
                gallery = [(u.user_id, r[level]["features"][0]) for u, r in zip(users, per_user)]
                queries = [r[level]["features"][1] for r in per_user]
                guesses = adversary.identify_many(gallery, queries)
                hits = [float(guess == u.user_id) for guess, u in zip(guesses, users)]
                report.rows += _metric_rows(attack, level, hits, [1.0] * len(hits), rng, spec, categorical=True)
            elif attack == "geolocation":
                errors = [e for r in per_user for e in r[level]["geo_error"]]
                report.rows += _metric_rows(attack, level, errors, [0.0] * len(errors), rng, spec)
            else:
                estimates = [e for r in per_user for e in r[level]["estimates"][attack]]
                truths = [float(true_value(attack, u, spec.frame_rate_hz))
                          for u in users for _ in range(spec.sessions_per_user)]
                report.rows += _metric_rows(attack, level, estimates, truths, rng, spec,
                                            categorical=attack in CATEGORICAL)
        logger.info(f"✅ Level '{level}' scored")

    if spec.output_dir:
        write_report(report, spec.output_dir)
    return report


def write_report(report: AttackReport, output_dir) -> Tuple[Path, Path]:
    """Write report.csv and report.json into output_dir."""
    directory = Path(output_dir)
    csv_path = write_csv(directory / "report.csv", report.rows, list(report.rows[0]) if report.rows else None)
    json_path = write_json(directory / "report.json", report.to_dict())
    logger.info(f"✅ Report written to {csv_path} and {json_path}")
    return csv_path, json_path


def epsilon_sweep(attribute: str, epsilons: Sequence[float], spec: ExperimentSpec) -> List[Tuple[float, float]]:
    """
    R^2 of the attack on one attribute as its epsilon varies.

    Only the swept defense is enabled; its epsilon is set by override. Each user
    contributes their first session.

    Returns:
        list: (epsilon, R^2) pairs in the order given
    """
    if attribute not in SWEEP_ATTRIBUTES:
        raise InvalidParamsError(f"Cannot sweep '{attribute}', expected one of {SWEEP_ATTRIBUTES}")
    if len(epsilons) < 3:
        raise InvalidParamsError(f"An epsilon sweep needs at least 3 values, got {len(epsilons)}")
    for epsilon in epsilons:
        if not epsilon > 0:
            raise InvalidParamsError(f"Sweep epsilons must be positive, got {epsilon}")

    logger.info(f"📋 Sweeping {attribute} over epsilons {list(epsilons)}")
    users = sample_population(spec.population, spec.seed, spec.distribution, spec.jitter_m)
    configs = [
        _level_configs(spec, ["high"], overrides={attribute: eps}, features=[attribute])["high"] for eps in epsilons
    ]
    estimator = SCORED_ESTIMATORS[attribute]

    def worker(user):
        stream = generate_session(user, spec.duration_s, spec.frame_rate_hz, _session_seed(spec.seed, user.user_id, 0))
        truth = calibrated_truth(user)
        return [_safe(estimator, defend_stream(begin_session(c, truth, f"{user.user_id}:0"), stream)) for c in configs]

    estimates = np.array(ordered_map(worker, users, spec.workers, "sweep"))
    truths = [true_value(attribute, user) for user in users]
    curve = [(float(eps), _round(r_squared(estimates[:, i], truths))) for i, eps in enumerate(epsilons)]
    logger.info(f"✅ Sweep finished: {curve}")
    return curve


def replay_file(
    input_path,
    config_path,
    output_path,
    truth: Optional[GroundTruth] = None,
    level: Optional[str] = None,
    features=None,
    seed: Optional[int] = None,
    session_id: str = "replay",
) -> dict:
    """
    Defend a recorded session and write it with its session report appended.

    Args:
        input_path: Recording in the telemetry format
        config_path: Defense configuration file, or None for the defaults
        output_path: Destination recording
        truth (GroundTruth, optional): Calibrated ground truth; not needed at level off
        level, features, seed: Overrides of the configuration file values
        session_id (str): Session key for the offsets

    Returns:
        dict: The session report
    """
    settings = load_settings(config_path)
    if level is not None:
        settings["level"] = level
    if features is not None:
        settings["features"] = features
    if seed is not None:
        settings["seed"] = seed
    config = DefenseConfig.from_settings(settings)

    stream = read_telemetry(input_path)
    session = begin_session(config, truth or GroundTruth(), session_id)
    defended = defend_stream(session, stream)
    report = session_report(session)
    write_telemetry(output_path, defended, report)
    logger.info(f"✅ Replayed {len(stream)} frame(s) at level '{config.level.value}' into {output_path}")
    return report
