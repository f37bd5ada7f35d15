"""
Tests for the event matcher.

Tests cover:
- Registration against buffered events
- Precedence between consumers and Concrete-over-ANY slots
- Persistent tasks and persistent events
- Retrieval modes and named persistent task removal
- Quiescence counts
- Agreement with the full-scan reference matcher
"""
import random

import pytest

from src.bench.conformance import ReferenceMatcher, generate_scenario, run_matcher_scenario
from src.core import ANY, Event, PayloadKind, TaskDescriptor, TaskInstance, TaskState, expand_dependencies
from src.core.errors import DuplicatePersistentName, ZeroDependencyPersistent
from src.matcher import EventMatcher, PendingEventStore, RetrievalMode


def noop(events, count):
    return None


class Harness:
    """Builds descriptors with fresh submission indices for one matcher."""

    def __init__(self, rank: int = 0, world_size: int = 2):
        self.matcher = EventMatcher(rank)
        self.rank = rank
        self.world_size = world_size
        self.sequences = {}

    def task(self, *deps, persistent=False, name=None):
        expanded = expand_dependencies(deps, self.rank, self.world_size)
        index = self.matcher.next_submission_index()
        descriptor = TaskDescriptor(noop, expanded, persistent, name, index)
        return descriptor, self.matcher.register_task(descriptor)

    def event(self, source, identifier, value=None, persistent=False):
        seq = self.sequences.get(source, 0)
        self.sequences[source] = seq + 1
        if value is None:
            return Event(source, identifier, persistent=persistent, sequence=seq)
        return Event(
            source, identifier, PayloadKind.INT, 1,
            int(value).to_bytes(4, "little", signed=True), persistent, seq,
        )

    def deliver(self, *args, **kwargs):
        return self.matcher.deliver_event(self.event(*args, **kwargs))


@pytest.fixture
def harness():
    return Harness()


class TestRegisterTask:
    """Tests for register_task."""

    def test_zero_dependency_task_ready(self, harness):
        """Test a task with no dependencies is Ready at once."""
        _, ready = harness.task()
        assert len(ready) == 1
        assert ready[0].state is TaskState.READY

    def test_buffered_event_fills_new_task(self, harness):
        """Test a buffered event satisfies a later registration."""
        assert harness.deliver(0, "event1") == []
        _, ready = harness.task((0, "event1"))
        assert len(ready) == 1
        assert ready[0].slots[0].identifier == "event1"
        assert harness.matcher.buffered_events() == []

    def test_persistent_task_consumes_every_buffered_event(self, harness):
        """Test three buffered events give three activations of a persistent task."""
        for value in range(3):
            harness.deliver(1, "x", value)
        _, ready = harness.task((1, "x"), persistent=True)
        assert [int(i.slots[0].data[0]) for i in ready] == [0, 1, 2]

    def test_zero_dependency_persistent_rejected(self, harness):
        """Test a persistent task must have dependencies."""
        with pytest.raises(ZeroDependencyPersistent):
            harness.task(persistent=True)

    def test_duplicate_name_rejected(self, harness):
        """Test persistent names are unique among live tasks."""
        harness.task((0, "x"), persistent=True, name="updater")
        with pytest.raises(DuplicatePersistentName):
            harness.task((0, "y"), persistent=True, name="updater")


class TestDeliverEvent:
    """Tests for deliver_event."""

    def test_three_task_example(self, harness):
        """Test rank 1's view of the three-task program: slot order [33, 100]."""
        h = Harness(rank=1)
        h.task((0, "event1"))
        h.task((0, "event2"), (1, "event3"))
        ready = h.deliver(0, "event1")
        assert len(ready) == 1 and ready[0].slots[0].identifier == "event1"
        assert h.deliver(0, "event2", 33) == []
        ready = h.deliver(1, "event3", 100)
        values = [int(e.data[0]) for e in ready[0].slots]
        assert values == [33, 100]
        assert sum(values) == 133

    def test_earlier_task_wins(self, harness):
        """Test precedence follows submission order, even ANY over a later exact match."""
        first, _ = harness.task((ANY, "e"))
        harness.task((0, "e"))
        ready = harness.deliver(0, "e")
        assert ready[0].descriptor is first

    def test_concrete_slot_beats_any_slot(self, harness):
        """Test within one task the exact-source slot is filled first."""
        harness.task((ANY, "e"), (1, "e"))
        harness.deliver(1, "e", 5)
        instance = harness.matcher.filling_instances()[0]
        assert instance.slots[0] is None
        assert int(instance.slots[1].data[0]) == 5

    def test_unmatched_event_buffers(self, harness):
        """Test events nobody wants stay in the store."""
        harness.deliver(0, "nobody")
        assert [e.identifier for e in harness.matcher.buffered_events()] == ["nobody"]

    def test_per_pair_fifo(self, harness):
        """Test the older of two same-pair events is consumed first."""
        harness.deliver(0, "x", 1)
        harness.deliver(0, "x", 2)
        _, ready = harness.task((0, "x"))
        assert int(ready[0].slots[0].data[0]) == 1

    def test_persistent_instances_fill_oldest_first(self, harness):
        """Test a second instance only opens when the oldest has the slot taken."""
        harness.task((0, "a"), (1, "b"), persistent=True)
        harness.deliver(0, "a", 1)
        harness.deliver(0, "a", 2)
        ready = harness.deliver(1, "b", 3)
        assert [int(e.data[0]) for e in ready[0].slots] == [1, 3]
        assert len(harness.matcher.filling_instances()) == 1

    def test_persistent_rearm_count(self, harness):
        """Test N complete sets give N activations."""
        harness.task((0, "x"), persistent=True)
        ready = [i for v in range(5) for i in harness.deliver(0, "x", v)]
        assert len(ready) == 5


class TestPersistentEvents:
    """Tests for persistent event copies."""

    def test_copy_remains_after_consumption(self, harness):
        """Test a consumed persistent event leaves a copy in the store."""
        harness.deliver(0, "cfg", 7, persistent=True)
        for _ in range(3):
            _, ready = harness.task((0, "cfg"))
            assert int(ready[0].slots[0].data[0]) == 7
        assert len(harness.matcher.buffered_events()) == 1

    def test_persistent_task_takes_persistent_event_once_per_operation(self, harness):
        """Test a persistent task and persistent event do not loop forever."""
        harness.task((0, "cfg"), persistent=True)
        ready = harness.deliver(0, "cfg", 1, persistent=True)
        assert len(ready) == 1
        assert len(harness.matcher.buffered_events()) == 1

    def test_wait_filled_by_copies_returns_complete_without_owner(self, harness):
        """Test a wait completed while copies settle hands back no resume for its owner."""
        harness.deliver(0, "cfg", 4, persistent=True)
        descriptor, _ = harness.task((0, "unused"))
        owner = TaskInstance(descriptor=descriptor, instance_id=99)
        deps = expand_dependencies([(0, "cfg"), (0, "cfg")], 0, 2)
        record, ready = harness.matcher.register_wait(owner, deps)
        assert record.is_complete
        assert owner not in ready
        assert owner.pending_wait is None
        assert harness.matcher.pending_waits() == 0
        assert len(harness.matcher.buffered_events()) == 1

    def test_persistent_events_do_not_block_quiescence(self, harness):
        """Test a buffered persistent event is excluded from the counts."""
        harness.deliver(0, "cfg", 1, persistent=True)
        assert tuple(harness.matcher.quiescence_snapshot()) == (0, 0, 0)


class TestRetrieveMatching:
    """Tests for retrieve_matching."""

    def test_direct_hit(self, harness):
        """Test a buffered event satisfies a single dependency."""
        harness.deliver(0, "a")
        deps = expand_dependencies([(0, "a")], 0, 2)
        result = harness.matcher.retrieve_matching(deps, RetrievalMode.CONSUME_ALL_OR_NOTHING)
        assert result.satisfied and result.filled == 1

    def test_consume_available_takes_subset(self, harness):
        """Test available mode fills what it can."""
        harness.deliver(0, "a")
        deps = expand_dependencies([(0, "a"), (1, "b")], 0, 2)
        result = harness.matcher.retrieve_matching(deps, RetrievalMode.CONSUME_AVAILABLE)
        assert result.filled == 1 and not result.satisfied
        assert result.events[1] is None
        assert harness.matcher.buffered_events() == []

    def test_all_or_nothing_leaves_store(self, harness):
        """Test all-or-nothing consumes nothing when a slot is missing."""
        harness.deliver(0, "a")
        deps = expand_dependencies([(0, "a"), (1, "b")], 0, 2)
        result = harness.matcher.retrieve_matching(deps, RetrievalMode.CONSUME_ALL_OR_NOTHING)
        assert not result.satisfied and result.filled == 0
        assert len(harness.matcher.buffered_events()) == 1


class TestRemovePersistentTask:
    """Tests for remove_persistent_task."""

    def test_remove_known_and_unknown(self, harness):
        """Test removal reports whether the name existed."""
        harness.task((0, "x"), persistent=True, name="updater")
        assert harness.matcher.remove_persistent_task("updater") is True
        assert harness.matcher.remove_persistent_task("ghost") is False
        assert not harness.matcher.has_persistent_task("updater")

    def test_removal_discards_partial_instance(self, harness):
        """Test events after removal buffer instead of activating."""
        harness.task((0, "a"), (1, "b"), persistent=True, name="pair")
        harness.deliver(0, "a")
        harness.matcher.remove_persistent_task("pair")
        assert harness.deliver(1, "b") == []
        assert [e.identifier for e in harness.matcher.buffered_events()] == ["b"]


class TestQuiescenceSnapshot:
    """Tests for quiescence_snapshot."""

    def test_empty(self, harness):
        """Test an empty matcher reports zeros."""
        assert tuple(harness.matcher.quiescence_snapshot()) == (0, 0, 0)

    def test_unarmed_transient(self, harness):
        """Test one waiting transient task."""
        harness.task((0, "never"))
        assert tuple(harness.matcher.quiescence_snapshot()) == (1, 0, 1)

    def test_idle_persistent_task_excluded(self, harness):
        """Test persistent descriptors do not count."""
        harness.task((0, "never"), persistent=True)
        assert tuple(harness.matcher.quiescence_snapshot()) == (0, 0, 0)


class TestPendingEventStore:
    """Tests for the store's ordering."""

    def test_snapshot_in_arrival_order(self):
        """Test snapshot interleaves queues by arrival."""
        store = PendingEventStore()
        store.push(Event(1, "b"), 0)
        store.push(Event(0, "a"), 1)
        store.push(Event(1, "b", sequence=1), 2)
        assert [(e.event.source_rank, e.event.sequence) for e in store.snapshot()] == [(1, 0), (0, 0), (1, 1)]
        assert len(store.queue(1, "b")) == 2


class TestReferenceEquivalence:
    """The matcher agrees with the full-scan reference on generated scenarios."""

    @pytest.mark.parametrize("seed", range(5))
    def test_generated_scenarios(self, seed):
        """Test 400 scenarios per seed give identical traces."""
        rng = random.Random(seed)
        for _ in range(400):
            scenario = generate_scenario(rng)
            actual, expected = run_matcher_scenario(scenario)
            assert actual == expected, scenario.describe()

    def test_replay_is_deterministic(self):
        """Test replaying one scenario gives the same trace."""
        scenario = generate_scenario(random.Random(42))
        assert run_matcher_scenario(scenario) == run_matcher_scenario(scenario)

    @pytest.mark.parametrize("seed", range(3))
    def test_larger_scenarios(self, seed):
        """Test busier histories with more tasks and events still agree."""
        rng = random.Random(100 + seed)
        for _ in range(200):
            scenario = generate_scenario(rng, max_tasks=5, max_events=10)
            actual, expected = run_matcher_scenario(scenario)
            assert actual == expected, scenario.describe()

    def test_reference_precedence_by_hand(self):
        """Test the reference fills the earliest task, exact slot before ANY."""
        reference = ReferenceMatcher()
        first = TaskDescriptor(noop, expand_dependencies([(ANY, "e"), (1, "e")], 0, 2), False, None, 0)
        second = TaskDescriptor(noop, expand_dependencies([(1, "e")], 0, 2), False, None, 1)
        assert reference.register(first) == []
        assert reference.register(second) == []
        assert reference.deliver(Event(1, "e", sequence=0)) == []
        ready = reference.deliver(Event(1, "e", sequence=1))
        assert [(d.submission_index, [e.sequence for e in slots]) for d, slots in ready] == [(0, [1, 0])]

    def test_reference_persistent_event_once_per_call(self):
        """Test the reference gives a persistent event to a persistent task once per call."""
        reference = ReferenceMatcher()
        reference.register(TaskDescriptor(noop, expand_dependencies([(0, "cfg")], 0, 1), True, None, 0))
        config = Event(0, "cfg", persistent=True)
        assert len(reference.deliver(config)) == 1
        assert reference.buffered() == [config]
        assert len(reference.deliver(Event(0, "cfg", sequence=1))) == 2
        assert reference.buffered() == [config]
