import math
from dataclasses import replace

import numpy as np
import pytest

from src.core import adversary
from src.core.calibration import calibrate
from src.core.errors import InvalidInputError, InvalidParamsError
from src.core.synthpop import calibration_snapshot, generate_session, sample_population


@pytest.fixture(scope="module")
def population():
    return sample_population(20, seed=5)


class TestPopulation:
    def test_single_user_within_bounds(self):
        [user] = sample_population(1, seed=0)
        assert 1.496 <= user.truth.height <= 1.826
        assert 1.556 <= user.truth.wingspan <= 1.899

    def test_every_attribute_within_bounds(self, population, presets):
        attributes = presets["attributes"]
        for user in population:
            truth = user.truth
            for name, value in [("height", truth.height), ("ipd", truth.ipd), ("pitch", truth.pitch),
                                ("depth", truth.squat_depth), ("wingspan", truth.wingspan),
                                ("arm_ratio", truth.arm_ratio), ("room", truth.room_width),
                                ("room", truth.room_length)]:
                assert attributes[name]["lower"] <= value <= attributes[name]["upper"] + 1e-12, name

    def test_seed_determinism(self):
        a = [user.to_dict() for user in sample_population(5, seed=9)]
        b = [user.to_dict() for user in sample_population(5, seed=9)]
        assert a == b

    def test_different_seeds_differ(self):
        assert sample_population(1, seed=1)[0].truth != sample_population(1, seed=2)[0].truth

    def test_mean_height(self):
        heights = [user.truth.height for user in sample_population(1000, seed=3)]
        assert np.mean(heights) == pytest.approx(1.661, abs=0.01)

    def test_truncated_normal_stays_in_bounds(self):
        for user in sample_population(50, seed=4, distribution="truncated-normal"):
            assert 1.496 <= user.truth.height <= 1.826

    def test_ids(self, population):
        assert population[0].user_id == "user0000"
        assert len({user.user_id for user in population}) == len(population)

    def test_invalid_arguments(self):
        with pytest.raises(InvalidInputError):
            sample_population(0, seed=1)
        with pytest.raises(InvalidParamsError):
            sample_population(3, seed=1, distribution="lognormal")


class TestSession:
    def test_frame_count(self, population):
        assert len(generate_session(population[0], duration=60.0, frame_rate=90.0)) == 5400

    def test_default_rate_is_device_rate(self, population):
        user = population[1]
        stream = generate_session(user, duration=10.0)
        assert len(stream) == round(10.0 * user.device_rate)

    def test_peak_height_without_jitter(self, population):
        user = replace(population[0], truth=replace(population[0].truth, height=1.7), jitter=0.0)
        stream = generate_session(user, duration=20.0, frame_rate=90.0)
        assert stream.head[:, 1].max() == 1.7

    def test_too_short(self, population):
        with pytest.raises(InvalidInputError):
            generate_session(population[0], duration=5.0)

    def test_replayable(self, population):
        a = generate_session(population[2], duration=12.0, seed=4)
        b = generate_session(population[2], duration=12.0, seed=4)
        assert a.same_as(b)

    def test_scripted_events(self, population):
        user = population[3]
        stream = generate_session(user, duration=30.0)
        interactions = stream.events_of("interaction")
        assert len(interactions) >= 20
        dominant = "right" if user.truth.handedness else "left"
        assert sum(e.hand == dominant for e in interactions) == math.ceil(0.85 * len(interactions))
        assert len(stream.events_of("stimulus")) >= 10
        assert len(stream.events_of("response")) == len(stream.events_of("stimulus"))

    def test_estimators_recover_truth(self, population):
        for user in population[:5]:
            truth = user.truth
            stream = generate_session(user, duration=60.0, seed=1)
            assert adversary.estimate_height(stream) == pytest.approx(truth.height, rel=0.01)
            assert adversary.estimate_wingspan(stream) == pytest.approx(truth.wingspan, rel=0.01)
            assert adversary.estimate_arm_ratio(stream) == pytest.approx(truth.arm_ratio, rel=0.01)
            assert adversary.estimate_ipd(stream) == pytest.approx(truth.ipd, rel=0.01)
            assert adversary.estimate_pitch(stream) == pytest.approx(truth.pitch, rel=0.01)
            assert adversary.estimate_depth(stream) == pytest.approx(truth.squat_depth, rel=0.01)
            width, length = adversary.estimate_room(stream)
            assert width == pytest.approx(truth.room_width, rel=0.01)
            assert length == pytest.approx(truth.room_length, rel=0.01)
            assert adversary.estimate_handedness(stream) == truth.handedness
            assert adversary.estimate_refresh_rate(stream) == pytest.approx(user.device_rate, rel=1e-6)
            assert adversary.estimate_reaction(stream) == pytest.approx(user.reaction_ms, abs=25.0)


def test_calibration_snapshot_recovers_truth(population):
    user = population[0]
    truth = calibrate(calibration_snapshot(user), assumed_depth=user.truth.squat_depth,
                      pitch=user.truth.pitch, right_handed=user.truth.handedness)
    assert truth.height == pytest.approx(user.truth.height)
    assert truth.arm_r == pytest.approx(user.truth.arm_r)
    assert truth.arm_l == pytest.approx(user.truth.arm_l)
    assert truth.ipd == pytest.approx(user.truth.ipd)
