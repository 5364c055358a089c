import pytest
from hypothesis import given, settings, strategies as st

from ibft.core import BOTTOM, Commit, PreparedState, Prepare, PrePrepare, RoundChange, Signer, SystemConfig
from ibft.instance import (
    Broadcast,
    Decide,
    Deliver,
    InstanceError,
    InstanceState,
    ScheduleTimer,
    Start,
    StopTimer,
    TimerExpired,
    Unicast,
)
from ibft.justification import PrepareCertificate, RoundChangeCertificate

CFG = SystemConfig(4, 1)


def machine(pid, value=b"v", base=1000):
    s = InstanceState(pid, CFG, base_timeout=base)
    s.start(0, value)
    return s


def signed(sender, payload, justification=None):
    return Signer(sender).sign(payload, justification)


def deliver(state, sender, payload, now=10, justification=None):
    return state.handle_event(Deliver(signed(sender, payload, justification)), now)


def payloads(actions):
    return [a.message.payload for a in actions if isinstance(a, (Broadcast, Unicast))]


def test_start_as_leader():
    s = InstanceState(0, CFG)
    actions = s.start(0, b"v")
    assert actions == [Broadcast(signed(0, PrePrepare(0, 1, b"v"))), ScheduleTimer(1000, 0)]
    assert (s.round, s.prepared, s.input_value) == (1, BOTTOM, b"v")


def test_start_as_follower():
    assert InstanceState(2, CFG).start(0, b"v") == [ScheduleTimer(1000, 0)]


def test_double_start_is_rejected():
    s = machine(1)
    with pytest.raises(InstanceError):
        s.start(0, b"v")
    with pytest.raises(InstanceError):
        s.handle_event(Start(0, b"v"), 0)


def test_event_before_start_is_rejected():
    with pytest.raises(InstanceError):
        InstanceState(0, CFG).handle_event(TimerExpired(), 0)


def test_preprepare_from_leader_triggers_prepare():
    s = machine(1)
    actions = deliver(s, 0, PrePrepare(0, 1, b"v"), now=100)
    assert actions == [ScheduleTimer(1000, 0), Broadcast(signed(1, Prepare(0, 1, b"v")))]
    assert s.timer == ("running", 1100)


def test_third_prepare_triggers_commit():
    s = machine(1)
    assert deliver(s, 0, Prepare(0, 1, b"v")) == []
    assert deliver(s, 2, Prepare(0, 1, b"v")) == []
    actions = deliver(s, 3, Prepare(0, 1, b"v"))
    assert payloads(actions) == [Commit(0, 1, b"v")]
    assert s.prepared == PreparedState(1, b"v")
    assert s.prepared_certificate.senders() == {0, 2, 3}


def test_duplicate_prepares_from_one_sender_count_once():
    s = machine(1)
    for _ in range(3):
        deliver(s, 0, Prepare(0, 1, b"v"))
    deliver(s, 2, Prepare(0, 1, b"v"))
    assert s.prepared == BOTTOM


def test_timer_expiry_broadcasts_round_change():
    s = machine(1)
    actions = s.handle_event(TimerExpired(), 1000)
    assert actions == [ScheduleTimer(2000, 0), Broadcast(signed(1, RoundChange(0, 2, BOTTOM)))]
    assert s.round == 2


def test_early_timer_event_is_ignored():
    s = machine(1)
    assert s.handle_event(TimerExpired(), 999) == []
    assert s.round == 1


def test_prepared_round_change_carries_certificate():
    s = machine(1)
    for p in (0, 2, 3):
        deliver(s, p, Prepare(0, 1, b"v"))
    actions = s.handle_event(TimerExpired(), 1000)
    rc = actions[1].message
    assert rc.payload == RoundChange(0, 2, PreparedState(1, b"v"))
    assert isinstance(rc.justification, PrepareCertificate)


def test_commit_quorum_from_earlier_round_decides():
    s = machine(1)
    s.handle_event(TimerExpired(), 1000)
    s.handle_event(TimerExpired(), 3000)
    assert s.round == 3
    deliver(s, 0, Commit(0, 1, b"v"))
    deliver(s, 2, Commit(0, 1, b"v"))
    actions = deliver(s, 3, Commit(0, 1, b"v"))
    assert [type(a) for a in actions] == [StopTimer, Decide]
    decide = actions[1]
    assert decide.value == b"v" and len(decide.certificate.commits) == 3
    assert s.timer == ("stopped", None)


def test_decide_once():
    s = machine(1)
    for p in (0, 2, 3):
        deliver(s, p, Commit(0, 1, b"v"))
    assert deliver(s, 1, Commit(0, 1, b"v")) == []
    for p in (0, 2, 3):
        assert deliver(s, p, Commit(0, 1, b"w")) == []
    assert s.decided[0] == b"v"


def test_decided_process_answers_round_changes_with_commits():
    s = machine(1)
    for p in (0, 2, 3):
        deliver(s, p, Commit(0, 1, b"v"))
    actions = deliver(s, 3, RoundChange(0, 2, BOTTOM))
    assert all(isinstance(a, Unicast) and a.dst == 3 for a in actions)
    assert payloads(actions) == [Commit(0, 1, b"v")] * 3
    # not once-per-round
    assert len(deliver(s, 3, RoundChange(0, 2, BOTTOM))) == 3


def test_preprepare_from_non_leader_is_ignored():
    s = machine(2)
    s.handle_event(TimerExpired(), 1000)
    assert s.round == 2
    assert deliver(s, 0, PrePrepare(0, 2, b"v"), now=1001) == []


def test_unjustified_round_two_preprepare_is_ignored():
    s = machine(2)
    s.handle_event(TimerExpired(), 1000)
    assert deliver(s, 1, PrePrepare(0, 2, b"v"), now=1001) == []
    assert s.dropped[-1][0] == "unjustified-pre-prepare"


def test_foreign_instance_is_rejected():
    s = machine(1)
    with pytest.raises(InstanceError):
        deliver(s, 0, Prepare(7, 1, b"v"))


def test_invalid_message_is_dropped_and_recorded():
    s = machine(1)
    assert deliver(s, 0, RoundChange(0, 2, PreparedState(1, b"v"))) == []
    assert s.dropped[-1][0] == "unjustified-prepared-claim"


def test_f_plus_one_higher_round_changes_trigger_catch_up():
    s = machine(2)
    deliver(s, 0, RoundChange(0, 3, BOTTOM))
    assert s.round == 1
    actions = deliver(s, 3, RoundChange(0, 4, BOTTOM))
    # jumps to the lower of the two rounds
    assert s.round == 3
    assert actions == [ScheduleTimer(4000, 0), Broadcast(signed(2, RoundChange(0, 3, BOTTOM)))]


def test_new_leader_proposes_on_round_change_quorum():
    s = machine(1, value=b"mine")  # leader of round 2
    own = s.handle_event(TimerExpired(), 1000)[1].message
    s.handle_event(Deliver(own), 1000)
    deliver(s, 0, RoundChange(0, 2, BOTTOM), now=1001)
    actions = deliver(s, 2, RoundChange(0, 2, BOTTOM), now=1002)
    pp = [a.message for a in actions if isinstance(a, Broadcast) and isinstance(a.message.payload, PrePrepare)]
    assert pp[0].payload == PrePrepare(0, 2, b"mine")
    assert isinstance(pp[0].justification, RoundChangeCertificate)
    # the leader also accepts its own proposal through R1 on self-delivery
    follow = s.handle_event(Deliver(pp[0]), 1002)
    assert payloads(follow) == [Prepare(0, 2, b"mine")]


def test_new_leader_reproposes_highest_prepared_value():
    s = machine(1, value=b"mine")
    own = s.handle_event(TimerExpired(), 1000)[1].message
    s.handle_event(Deliver(own), 1000)
    cert = PrepareCertificate(tuple(signed(p, Prepare(0, 1, b"old")) for p in (0, 2, 3)))
    deliver(s, 0, RoundChange(0, 2, PreparedState(1, b"old")), now=1001, justification=cert)
    actions = deliver(s, 2, RoundChange(0, 2, BOTTOM), now=1002)
    assert payloads(actions) == [PrePrepare(0, 2, b"old")]


# properties

events = st.lists(st.one_of(
    st.tuples(st.just("msg"), st.integers(0, 3), st.sampled_from(["pp", "p", "c", "rc"]),
              st.integers(1, 3), st.sampled_from([b"a", b"b"])),
    st.tuples(st.just("timer")),
), max_size=40)


def _play(pid, script):
    s = InstanceState(pid, CFG, base_timeout=10)
    out = [s.start(0, b"a")]
    now = 0
    history = []
    for ev in script:
        now += 5
        if ev[0] == "timer":
            now = max(now, s.timer[1] or now)
            out.append(s.handle_event(TimerExpired(), now))
        else:
            _, sender, kind, r, v = ev
            payload = {"pp": PrePrepare(0, r, v), "p": Prepare(0, r, v),
                       "c": Commit(0, r, v), "rc": RoundChange(0, r, BOTTOM)}[kind]
            out.append(s.handle_event(Deliver(signed(sender, payload)), now))
        history.append((s.round, s.prepared.round or 0, s.decided))
    return s, out, history


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 3), events)
def test_state_machine_properties(pid, script):
    s, out, history = _play(pid, script)
    # determinism
    _, out2, history2 = _play(pid, script)
    assert out == out2 and history == history2
    # once per round
    fired = [(rule, r) for rule, r, _ in s.rule_log if rule != "R3"]
    assert len(fired) == len(set(fired))
    # decide once and never changes
    decides = [a for acts in out for a in acts if isinstance(a, Decide)]
    assert len(decides) <= 1
    decided = [d for _, _, d in history if d is not None]
    assert all(d == decided[0] for d in decided)
    # monotone round and prepared round, prepared at most the current round
    for (r0, p0, _), (r1, p1, _) in zip(history, history[1:]):
        assert r1 >= r0 and p1 >= p0
    assert all(p <= r for r, p, _ in history)
