#!/usr/bin/env python3
"""
Telemetry Incognito

Local differential privacy defenses for VR telemetry, with the attacks they
are measured against.

Usage:
    python main.py <command> [options]

Examples:
    # Synthesize 10 users with one 60 s session each
    python main.py synth --users 10 --duration 60 --seed 7 --out data/

    # Defend a recording at the high privacy level
    python main.py replay --in data/user0000.jsonl --level high --truth data/user0000.truth.json --out defended.jsonl

    # Run the attack suite on a recording
    python main.py attack --in defended.jsonl --attacks height,wingspan,room

    # Full experiment from a spec file
    python main.py experiment --spec experiment.json --out results/

    # Height R^2 as epsilon varies
    python main.py sweep --attribute height --epsilons 0.1,1,3,5 --out sweep.csv
"""

import argparse
import json
import sys
from pathlib import Path

ROOT_DIR = Path(__file__).resolve().parent
if str(ROOT_DIR) not in sys.path:
    sys.path.insert(0, str(ROOT_DIR))

from src.core import adversary  # noqa: E402
from src.core.calibration import CalibrationSnapshot, calibrate  # noqa: E402
from src.core.errors import EstimationError, ValidationError  # noqa: E402
from src.core.harness import (  # noqa: E402
    ExperimentSpec,
    epsilon_sweep,
    replay_file,
    run_experiment,
    write_report,
)
from src.core.synthpop import generate_session, sample_population  # noqa: E402
from src.core.transforms import GroundTruth  # noqa: E402
from utils.file_handling import (  # noqa: E402
    ensure_dir,
    read_json,
    read_telemetry,
    write_csv,
    write_json,
    write_telemetry,
)
from utils.logging_utils import get_logger, setup_logger  # noqa: E402
from utils.settings import load_settings  # noqa: E402

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_RUNTIME_ERROR = 1
EXIT_VALIDATION_ERROR = 2

# Ground truth field each attack is compared with
TRUTH_FIELDS = {
    "height": "height",
    "wingspan": "wingspan",
    "arm_ratio": "arm_ratio",
    "ipd": "ipd",
    "pitch": "pitch",
    "depth": "squat_depth",
}


def _csv_list(value):
    return [item.strip() for item in value.split(",") if item.strip()]


def _float_list(value):
    try:
        return [float(item) for item in _csv_list(value)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"Expected comma-separated numbers, got '{value}'")


def cmd_synth(args):
    """Write one recording per synthetic user plus population.json with their ground truth."""
    out = Path(args.out)
    users = sample_population(args.users, args.seed, args.distribution)
    for i, user in enumerate(users):
        stream = generate_session(user, args.duration, args.rate, seed=args.seed + i)
        write_telemetry(out / f"{user.user_id}.jsonl", stream)
        write_json(out / f"{user.user_id}.truth.json", user.truth.to_dict())
    write_json(out / "population.json", [user.to_dict() for user in users])
    logger.info(f"✅ Wrote {len(users)} synthetic session(s) to {out}")


def _load_truth(args, settings):
    if args.truth:
        return GroundTruth.from_dict(read_json(args.truth))
    if args.calibration:
        calibration = settings["calibration"]
        return calibrate(
            CalibrationSnapshot.from_dict(read_json(args.calibration)),
            assumed_depth=calibration["assumed_depth_m"],
            pitch=calibration["default_pitch_hz"],
            right_handed=calibration["right_handed"],
        )
    return None


def cmd_replay(args):
    settings = load_settings(args.config)
    report = replay_file(
        args.input,
        args.config,
        args.out,
        truth=_load_truth(args, settings),
        level=args.level,
        features=_csv_list(args.features) if args.features is not None else None,
        seed=args.seed,
        session_id=args.session_id,
    )
    logger.info(f"📋 Total epsilon {report['total_epsilon']:g} over {report['frames_processed']} frame(s)")


def cmd_attack(args):
    """Run stream attacks on a recording and write one estimate per line."""
    stream = read_telemetry(args.input)
    names = _csv_list(args.attacks) if args.attacks else list(adversary.ATTACKS)
    truth = GroundTruth.from_dict(read_json(args.truth)) if args.truth else None

    lines = []
    for name in names:
        try:
            record = adversary.run_attack(name, stream).to_dict()
        except EstimationError as e:
            logger.warning(f"⚠️ {name}: {e}")
            record = {"attribute": name, "value": None, "error": str(e)}
        if truth is not None and isinstance(record.get("value"), float) and name in TRUTH_FIELDS:
            actual = getattr(truth, TRUTH_FIELDS[name])
            if actual is not None:
                record["abs_error"] = abs(record["value"] - actual)
        lines.append(record)
        logger.info(f"  {name}: {record.get('value')}")

    if args.out:
        ensure_dir(Path(args.out).parent)
        with open(args.out, "w", encoding="utf-8") as f:
            for record in lines:
                f.write(json.dumps(record) + "\n")
        logger.info(f"✅ Estimates written to {args.out}")


def cmd_experiment(args):
    spec = ExperimentSpec.load(args.spec)
    report = run_experiment(spec)
    if args.out:
        write_report(report, args.out)
    elif not spec.output_dir:
        logger.warning("⚠️ No output directory given; report not written")


def cmd_sweep(args):
    spec = ExperimentSpec(
        population=args.users,
        sessions_per_user=1,
        duration_s=args.duration,
        seed=args.seed,
        attacks=(args.attribute,),
        workers=args.workers,
    )
    curve = epsilon_sweep(args.attribute, args.epsilons, spec)
    if args.out:
        write_csv(args.out, [{"epsilon": eps, "r2": r2} for eps, r2 in curve], ["epsilon", "r2"])
        logger.info(f"✅ Sweep written to {args.out}")


def build_parser():
    parser = argparse.ArgumentParser(
        description="Local differential privacy defenses and attacks for VR telemetry",
        formatter_class=argparse.RawTextHelpFormatter,
    )
    parser.add_argument("--log-level", default="INFO", help="Logging level (default: INFO)")
    parser.add_argument("--no-log-file", action="store_true", help="Log to the console only")
    commands = parser.add_subparsers(dest="command", required=True)

    synth = commands.add_parser("synth", help="Generate synthetic users and sessions")
    synth.add_argument("--users", type=int, default=10, help="Number of users (default: 10)")
    synth.add_argument("--duration", type=float, default=60.0, help="Session length in seconds (default: 60)")
    synth.add_argument("--rate", type=float, default=None, help="Frame rate in Hz (default: each user's device)")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--distribution", default="uniform", choices=["uniform", "truncated-normal"])
    synth.add_argument("--out", required=True, help="Output directory")
    synth.set_defaults(handler=cmd_synth)

    replay = commands.add_parser("replay", help="Defend a recorded session")
    replay.add_argument("--in", dest="input", required=True, help="Input recording")
    replay.add_argument("--config", default=None, help="Defense configuration (default: settings.json)")
    replay.add_argument("--level", choices=["off", "low", "medium", "high"], default=None)
    replay.add_argument("--features", default=None, help="Comma-separated enabled features")
    replay.add_argument("--seed", type=int, default=None)
    replay.add_argument("--truth", default=None, help="Ground truth JSON")
    replay.add_argument("--calibration", default=None, help="Calibration snapshot JSON")
    replay.add_argument("--session-id", default="replay")
    replay.add_argument("--out", required=True, help="Output recording")
    replay.set_defaults(handler=cmd_replay)

    attack = commands.add_parser("attack", help="Run attribute attacks on a recording")
    attack.add_argument("--in", dest="input", required=True)
    attack.add_argument("--truth", default=None, help="Ground truth JSON for error reporting")
    attack.add_argument("--attacks", default=None, help=f"Comma-separated subset of {', '.join(adversary.ATTACKS)}")
    attack.add_argument("--out", default=None, help="Estimates as JSON lines")
    attack.set_defaults(handler=cmd_attack)

    experiment = commands.add_parser("experiment", help="Run an experiment spec")
    experiment.add_argument("--spec", required=True, help="Experiment spec JSON")
    experiment.add_argument("--out", default=None, help="Report directory (default: spec output_dir)")
    experiment.set_defaults(handler=cmd_experiment)

    sweep = commands.add_parser("sweep", help="R^2 of one attack across epsilons")
    sweep.add_argument("--attribute", default="height")
    sweep.add_argument("--epsilons", type=_float_list, default=[0.1, 1.0, 3.0, 5.0])
    sweep.add_argument("--users", type=int, default=300)
    sweep.add_argument("--duration", type=float, default=30.0)
    sweep.add_argument("--seed", type=int, default=0)
    sweep.add_argument("--workers", type=int, default=4)
    sweep.add_argument("--out", default=None, help="CSV output")
    sweep.set_defaults(handler=cmd_sweep)
    return parser


def main(argv=None):
    """Entry point; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logger(args.log_level, log_dir=False if args.no_log_file else None)

    try:
        args.handler(args)
        return EXIT_OK
    except ValidationError as e:
        logger.error(f"⛔ {e}")
        return EXIT_VALIDATION_ERROR
    except KeyboardInterrupt:
        logger.error("🛑 Interrupted by user")
        return EXIT_RUNTIME_ERROR
    except Exception as e:
        logger.error(f"💥 {e}")
        logger.debug("Traceback:", exc_info=True)
        return EXIT_RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
