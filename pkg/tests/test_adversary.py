from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from src.core import adversary
from src.core.adversary import (
    FEATURE_NAMES,
    FeatureVector,
    estimate_arm_ratio,
    estimate_depth,
    estimate_handedness,
    estimate_height,
    estimate_ipd,
    estimate_longer_arm,
    estimate_pitch,
    estimate_reaction,
    estimate_refresh_rate,
    estimate_room,
    estimate_wingspan,
    extract_features,
    geolocate,
    identify,
    identify_many,
    range_for_rtt,
    run_attack,
)
from src.core.errors import ConfigError, DegenerateGeometryError, EstimationError, UnidentifiableError
from src.core.mechanisms import truncated_laplace_cdf
from src.core.netshield import TimedPacket, clamp_latency
from src.core.session import DefenseConfig, begin_session, process_stream
from src.core.synthpop import generate_session, sample_population
from src.core.telemetry import Event
from tests.conftest import make_stream

ANCHORS = [(0.0, 0.0), (2000.0, 0.0), (0.0, 2000.0), (2000.0, 2000.0)]


def _rtts(position, anchors=ANCHORS, bias=None):
    bias = bias or [0.0] * len(anchors)
    return [
        (anchor, 2.0 * np.hypot(position[0] - anchor[0], position[1] - anchor[1]) / 300.0 + b)
        for anchor, b in zip(anchors, bias)
    ]


class TestStreamEstimators:
    def test_constant_height(self):
        assert estimate_height(make_stream(n=200, height=1.64)) == pytest.approx(1.64)

    def test_height_needs_enough_frames(self):
        with pytest.raises(EstimationError):
            estimate_height(make_stream(n=50))

    def test_height_max_variant(self):
        stream = make_stream(n=200)
        head = stream.head.copy()
        head[7, 1] = 1.9
        spiky = make_stream(n=200)
        spiky = type(spiky)(t=spiky.t, head=head, right=spiky.right, left=spiky.left)
        assert estimate_height(spiky, use_max=True) == pytest.approx(1.9)
        assert estimate_height(spiky) == pytest.approx(1.7)

    def test_depth_without_squat_is_zero(self):
        assert estimate_depth(make_stream(n=200)) == pytest.approx(0.0)

    def test_stationary_room(self):
        assert estimate_room(make_stream(n=10)) == (0.0, 0.0)

    def test_relaxed_hands_wingspan(self):
        assert estimate_wingspan(make_stream(n=10)) == pytest.approx(0.4)

    def test_ipd_needs_eyes(self):
        with pytest.raises(EstimationError):
            estimate_ipd(make_stream(n=10))

    def test_ipd(self):
        n = 10
        eyes = np.tile([[-0.031, 1.65, 0.05], [0.031, 1.65, 0.05]], (n, 1, 1))
        assert estimate_ipd(make_stream(n=n, eyes=eyes)) == pytest.approx(62.0)

    def test_handedness_majority(self):
        events = tuple(Event("interaction", "right" if k % 10 else "left", float(k)) for k in range(20))
        assert estimate_handedness(make_stream(n=30, events=events)) is True

    def test_handedness_without_events(self):
        with pytest.raises(EstimationError):
            estimate_handedness(make_stream(n=10))

    def test_handedness_tie(self):
        events = (Event("interaction", "right", 1.0), Event("interaction", "left", 2.0))
        with pytest.raises(EstimationError):
            estimate_handedness(make_stream(n=10, events=events))

    def test_longer_arm(self):
        stream = make_stream(n=3)
        right = stream.right.copy()
        left = stream.left.copy()
        right[1, 0], left[1, 0] = 0.9, -0.8
        tpose = type(stream)(t=stream.t, head=stream.head, right=right, left=left)
        assert estimate_longer_arm(tpose) == "right"
        assert estimate_arm_ratio(tpose) == pytest.approx(0.9 / 1.7)

    def test_equal_arms_tie(self):
        assert estimate_longer_arm(make_stream(n=3)) == "tie"

    def test_refresh_rate(self):
        assert estimate_refresh_rate(make_stream(n=90, rate=90.0)) == pytest.approx(90.0)

    def test_refresh_rate_single_frame(self):
        with pytest.raises(EstimationError):
            estimate_refresh_rate(make_stream(n=1))

    def test_reaction(self):
        events = (Event("stimulus", "none", 100.0), Event("response", "right", 350.0))
        assert estimate_reaction(make_stream(n=100, events=events)) == pytest.approx(250.0)

    def test_reaction_without_pairs(self):
        with pytest.raises(EstimationError):
            estimate_reaction(make_stream(n=10))

    def test_run_attack_by_name(self):
        estimate = run_attack("room", make_stream(n=10))
        assert estimate.to_dict() == {"attribute": "room", "value": [0.0, 0.0], "units": "m"}

    def test_run_unknown_attack(self):
        with pytest.raises(ConfigError):
            run_attack("shoe_size", make_stream(n=10))


class TestGeolocation:
    def test_exact_rtts(self):
        fix = geolocate(_rtts((500.0, 700.0)))
        assert np.hypot(fix.x - 500.0, fix.y - 700.0) < 1.0
        assert not fix.low_confidence

    def test_user_at_anchor(self):
        fix = geolocate(_rtts((2000.0, 0.0)))
        assert np.hypot(fix.x - 2000.0, fix.y) < 1.0

    def test_biased_rtt_moves_fix(self):
        fix = geolocate(_rtts((500.0, 700.0), bias=[1.0, 0.0, 0.0, 0.0]))
        assert np.hypot(fix.x - 500.0, fix.y - 700.0) > 30.0

    @pytest.mark.parametrize("rtt", [0.0, 3.5, 12.0, 40.0])
    def test_range_is_half_rtt_times_propagation(self, rtt):
        assert range_for_rtt(rtt + 1.0) - range_for_rtt(rtt) == pytest.approx(150.0)
        # one millisecond of one-way delay is two of round trip
        assert range_for_rtt(rtt + 2.0) - range_for_rtt(rtt) == pytest.approx(300.0)
        assert range_for_rtt(rtt, propagation=200.0) == pytest.approx(rtt * 100.0)

    def test_too_few_anchors(self):
        with pytest.raises(DegenerateGeometryError):
            geolocate(_rtts((500.0, 700.0), anchors=ANCHORS[:2]))

    def test_collinear_anchors(self):
        with pytest.raises(DegenerateGeometryError):
            geolocate(_rtts((500.0, 700.0), anchors=[(0.0, 0.0), (1000.0, 0.0), (2000.0, 0.0)]))

    def test_clamped_rtts_are_low_confidence(self):
        rtts = _rtts((500.0, 700.0))
        packets = clamp_latency([TimedPacket(None, 0.0, rtt) for _, rtt in rtts], 50.0)
        fix = geolocate([(anchor, p.observed_rtt) for (anchor, _), p in zip(rtts, packets)])
        assert fix.low_confidence

    @pytest.mark.parametrize("position", [(200.0, 200.0), (1800.0, 400.0), (500.0, 1700.0), (1500.0, 1500.0)])
    def test_latency_clamp_degrades_fix_by_hundreds_of_km(self, position):
        rtts = _rtts(position)
        packets = clamp_latency([TimedPacket(None, 0.0, rtt) for _, rtt in rtts], 50.0)
        fix = geolocate([(anchor, p.observed_rtt) for (anchor, _), p in zip(rtts, packets)])
        assert np.hypot(fix.x - position[0], fix.y - position[1]) >= 100.0
        assert fix.low_confidence


def _vector(seed):
    gen = np.random.default_rng(seed)
    return FeatureVector(gen.normal(size=len(FEATURE_NAMES)), np.ones(len(FEATURE_NAMES), dtype=bool))


class TestIdentification:
    def test_exact_copy(self):
        population = [(f"user{i}", _vector(i)) for i in range(10)]
        assert identify(population, population[6][1]) == "user6"

    def test_population_order_does_not_matter(self):
        population = [(f"user{i}", _vector(i)) for i in range(10)]
        queries = [_vector(100 + i) for i in range(5)]
        shuffled = [population[i] for i in np.random.default_rng(3).permutation(10)]
        assert identify_many(population, queries) == identify_many(shuffled, queries)

    def test_tie_resolves_to_smallest_id(self):
        vector = _vector(1)
        population = [("b", vector), ("a", vector), ("c", _vector(2))]
        assert identify(population, vector) == "a"

    def test_missing_features_are_skipped(self):
        population = [("a", FeatureVector.from_dict({"height": 1.6, "ipd": 60.0})),
                      ("b", FeatureVector.from_dict({"height": 1.8, "ipd": 66.0}))]
        assert identify(population, FeatureVector.from_dict({"height": 1.78})) == "b"

    def test_no_shared_feature(self):
        population = [("a", FeatureVector.from_dict({"height": 1.6}))]
        with pytest.raises(UnidentifiableError):
            identify(population, FeatureVector.from_dict({"ipd": 60.0}))

    def test_empty_population(self):
        with pytest.raises(UnidentifiableError):
            identify([], _vector(0))

    def test_feature_dict_round_trip(self):
        features = {"height": 1.7, "reaction": 250.0}
        assert FeatureVector.from_dict(features).to_dict() == features

    def test_extract_features_masks_unavailable(self):
        vector = extract_features(make_stream(n=200))
        present = vector.to_dict()
        assert present["height"] == pytest.approx(1.7)
        assert "ipd" not in present
        assert "reaction" not in present
        assert present["refresh_rate"] == pytest.approx(90.0)


def test_every_named_attack_has_units():
    assert all(units for _, units in adversary.ATTACKS.values())


def _defended(user, level, seed=3, enabled=None, duration=60.0, session_id=None):
    config = DefenseConfig(level=level, seed=seed) if enabled is None else DefenseConfig(
        level=level, enabled=enabled, seed=seed)
    session = begin_session(config, user.truth, session_id or user.user_id)
    return session, process_stream(session, generate_session(user, duration, seed=2))


class TestDefendedRecovery:
    """The attacks read back the session's noisy values, not the true ones."""

    @pytest.fixture(scope="class")
    def users(self):
        return sample_population(6, seed=21)

    @pytest.mark.parametrize("level", ["low", "medium", "high"])
    def test_estimators_recover_noisy_values(self, users, level):
        for user in users:
            session, out = _defended(user, level)
            offsets, truth = session.offsets, user.truth
            assert estimate_height(out) == pytest.approx(offsets.height, rel=0.01)
            assert estimate_depth(out) == pytest.approx(offsets.depth, rel=0.01)
            assert estimate_wingspan(out) == pytest.approx(offsets.span, rel=0.01)
            ratio = 1.0 - offsets.ratio if offsets.mirrored else offsets.ratio
            assert estimate_arm_ratio(out) == pytest.approx(ratio, rel=0.01)
            width, length = estimate_room(out)
            assert width == pytest.approx(offsets.room_width, rel=0.01)
            assert length == pytest.approx(offsets.room_length, rel=0.01)
            assert estimate_ipd(out) == pytest.approx(truth.ipd + offsets.ipd_offset, rel=0.01)
            assert estimate_pitch(out) == pytest.approx(truth.pitch + offsets.pitch_offset, rel=0.01)
            assert estimate_handedness(out) == (truth.handedness != offsets.mirrored)

    def test_height_and_depth_recover_together(self, users):
        for user in users:
            session, out = _defended(user, "high", enabled={"height", "depth"})
            assert estimate_height(out) == pytest.approx(session.offsets.height, rel=0.01)
            assert estimate_depth(out) == pytest.approx(session.offsets.depth, rel=0.01)

    @pytest.mark.slow
    @pytest.mark.parametrize("attribute", ["height", "depth", "wingspan", "ipd"])
    def test_estimates_follow_truncated_laplace(self, users, attribute):
        user = users[0]
        config = DefenseConfig(level="high", seed=3)
        center = {
            "height": user.truth.height,
            "depth": user.truth.squat_depth,
            "wingspan": user.truth.wingspan,
            "ipd": user.truth.ipd,
        }[attribute]
        estimator = {
            "height": estimate_height,
            "depth": estimate_depth,
            "wingspan": estimate_wingspan,
            "ipd": estimate_ipd,
        }[attribute]
        recording = generate_session(user, 20.0, seed=2)
        estimates = [
            estimator(process_stream(begin_session(config, user.truth, f"s{i}"), recording)) for i in range(200)
        ]
        params = config.params(attribute)
        result = stats.kstest(estimates, lambda x: truncated_laplace_cdf(x, center, params))
        assert result.pvalue > 0.01

    def test_millimetre_rounding_keeps_estimates(self, users):
        for user in users[:3]:
            _, out = _defended(user, "medium")
            rounded = replace(
                out,
                head=np.round(out.head, 3),
                right=np.round(out.right, 3),
                left=np.round(out.left, 3),
                eyes=np.round(out.eyes, 3),
            )
            assert estimate_height(rounded) == pytest.approx(estimate_height(out), abs=1e-3)
            assert estimate_depth(rounded) == pytest.approx(estimate_depth(out), abs=1e-3)
            assert estimate_wingspan(rounded) == pytest.approx(estimate_wingspan(out), abs=1e-3)
            for a, b in zip(estimate_room(rounded), estimate_room(out)):
                assert a == pytest.approx(b, abs=1e-3)
