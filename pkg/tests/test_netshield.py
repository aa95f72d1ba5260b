import numpy as np
import pytest

from src.core import adversary
from src.core.errors import InvalidInputError, InvalidParamsError
from src.core.netshield import TimedPacket, clamp_latency, clamp_latency_channel, clamp_rate, clamp_reaction
from src.core.telemetry import Event
from tests.conftest import make_stream


def _reaction_stream(delays):
    events = []
    for k, delay in enumerate(delays):
        stimulus = 1000.0 * (k + 1)
        events.append(Event("stimulus", "none", stimulus))
        events.append(Event("response", "right", stimulus + delay))
    return make_stream(n=1000, events=tuple(events))


class TestLatency:
    def test_fast_client_is_held_back(self):
        [packet] = clamp_latency([TimedPacket(None, 0.0, 12.0)], 25.0)
        assert packet.observed_rtt == 25.0
        assert packet.added_delay == pytest.approx(13.0)

    def test_slow_client_is_never_sped_up(self):
        [packet] = clamp_latency([TimedPacket(None, 0.0, 60.0)], 50.0)
        assert packet.observed_rtt == 60.0
        assert packet.added_delay == 0.0

    def test_clients_under_clamp_look_identical(self):
        packets = [TimedPacket(None, float(i), rtt) for i, rtt in enumerate([3.0, 7.5, 11.0, 19.9])]
        observed = [p.observed_rtt for p in clamp_latency(packets, 25.0)]
        assert np.var(observed) == 0.0

    def test_send_times_must_not_decrease(self):
        with pytest.raises(InvalidInputError):
            clamp_latency([TimedPacket(None, 5.0, 10.0), TimedPacket(None, 4.0, 10.0)], 25.0)

    @pytest.mark.parametrize("clamp", [0.0, -5.0, float("inf")])
    def test_rejects_bad_clamp(self, clamp):
        with pytest.raises(InvalidParamsError):
            clamp_latency([], clamp)

    def test_rtt_channel(self):
        stream = make_stream(n=4, rtt_ms=np.array([10.0, 40.0, 20.0, 60.0]))
        assert clamp_latency_channel(stream, 30.0).rtt_ms.tolist() == [30.0, 40.0, 30.0, 60.0]

    def test_stream_without_rtt_passes_through(self):
        stream = make_stream(n=4)
        assert clamp_latency_channel(stream, 30.0) is stream


class TestReaction:
    def test_pad_adds_to_reaction(self):
        padded = clamp_reaction(_reaction_stream([220.0]), 100.0)
        assert adversary.estimate_reaction(padded) == pytest.approx(320.0)

    def test_zero_pad_is_identity(self):
        stream = _reaction_stream([220.0])
        assert clamp_reaction(stream, 0.0) is stream

    def test_gap_between_users_survives(self):
        fast = adversary.estimate_reaction(clamp_reaction(_reaction_stream([200.0] * 5), 100.0))
        slow = adversary.estimate_reaction(clamp_reaction(_reaction_stream([300.0] * 5), 100.0))
        assert slow - fast == pytest.approx(100.0)

    def test_unmatched_response_passes_through(self):
        orphan = Event("response", "left", 50.0)
        stream = make_stream(n=200, events=(orphan, Event("stimulus", "none", 100.0), Event("response", "right", 400.0)))
        out = clamp_reaction(stream, 20.0)
        assert out.events[0] == orphan
        assert out.events[-1].t == pytest.approx(420.0)

    def test_interactions_are_not_delayed(self):
        stream = make_stream(n=10, events=(Event("interaction", "right", 30.0),))
        assert clamp_reaction(stream, 50.0).events[0].t == 30.0

    def test_rejects_negative_pad(self):
        with pytest.raises(InvalidParamsError):
            clamp_reaction(make_stream(n=10), -1.0)


class TestRate:
    def test_halves_frame_rate(self):
        stream = make_stream(n=240, rate=120.0)
        out = clamp_rate(stream, 60.0)
        assert len(out) == 120
        assert np.allclose(out.dt, 1000.0 / 60.0, atol=1e-3)

    def test_sample_and_hold_keeps_positions(self):
        stream = make_stream(n=240, rate=120.0)
        out = clamp_rate(stream, 60.0)
        assert np.array_equal(out.head, stream.head[::2])

    def test_equal_rate_is_identity(self):
        stream = make_stream(n=90, rate=90.0)
        assert clamp_rate(stream, 90.0) is stream

    def test_slower_input_passes_through(self):
        stream = make_stream(n=90, rate=60.0)
        assert clamp_rate(stream, 90.0) is stream

    def test_adversary_reads_clamped_rate(self):
        out = clamp_rate(make_stream(n=720, rate=144.0), 90.0)
        assert adversary.estimate_refresh_rate(out) == pytest.approx(90.0, abs=0.01)

    def test_events_survive(self):
        stream = make_stream(n=240, rate=120.0, events=(Event("interaction", "left", 505.0),))
        assert clamp_rate(stream, 60.0).events == stream.events
