import pytest

from crossmig.clock import ClockError, VirtualClock, ns_to_s, s_to_ns


def test_events_fire_in_time_order_with_insertion_tiebreak():
    clock = VirtualClock()
    fired = []
    clock.schedule(100, lambda: fired.append("b"))
    clock.schedule(50, lambda: fired.append("a"))
    clock.schedule(100, lambda: fired.append("c"))  # same time, inserted later
    clock.advance(100)
    assert fired == ["a", "b", "c"]
    assert clock.now_ns == 100


def test_time_never_moves_backward():
    clock = VirtualClock()
    clock.advance(10)
    with pytest.raises(ClockError):
        clock.advance_to(5)
    with pytest.raises(ClockError):
        clock.schedule(-1, lambda: None)


def test_callbacks_can_schedule_more_events():
    clock = VirtualClock()
    fired = []

    def tick():
        fired.append(clock.now_ns)
        if len(fired) < 3:
            clock.schedule(10, tick)

    clock.schedule(10, tick)
    clock.advance(100)
    assert fired == [10, 20, 30]


def test_cancelled_events_do_not_fire():
    clock = VirtualClock()
    fired = []
    handle = clock.schedule(10, lambda: fired.append(1))
    handle.cancel()
    clock.advance(20)
    assert fired == []
    assert clock.pending() == 0


def test_no_reentrant_advance():
    clock = VirtualClock()
    clock.schedule(5, lambda: clock.advance(1))
    with pytest.raises(ClockError):
        clock.advance(10)


def test_second_conversions_round_trip():
    assert s_to_ns(1.5) == 1_500_000_000
    assert ns_to_s(s_to_ns(0.0005)) == 0.0005
