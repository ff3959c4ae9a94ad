import math

import numpy as np
import pytest

from psnsim import routing
from psnsim.errors import ConfigurationError, ProtocolViolationError
from psnsim.routing import (
    DEST,
    SOURCE,
    PopulationView,
    ProtocolSpec,
    active_pairs,
    eligibility,
    fallback_boundary,
    givers,
    initial_state,
    is_active,
    on_contact,
    receiver_mask,
)


def view_from_rows(rows):
    rows = [np.asarray(r, dtype=float) for r in rows]
    rows = [r / np.linalg.norm(r) for r in rows]
    return PopulationView(np.array(rows))


@pytest.fixture
def basic_view():
    # Source on axis 1, destination on axis 2, relays with varied similarity
    # to the destination: 2 -> 0.0, 3 -> ~0.196, 4 -> ~0.962.
    return view_from_rows([
        [1, 0, 0, 0],
        [0, 1, 0, 0],
        [1, 0, 0, 0],
        [0.98, 0.196, 0.02, 0.02],
        [0.27, 0.96, 0.02, 0.02],
    ])


class TestProtocolSpec:
    def test_gamma_range(self):
        with pytest.raises(ConfigurationError):
            ProtocolSpec.ib(gamma=1.5)

    def test_two_copy_protocols_pin_copies(self):
        with pytest.raises(ConfigurationError):
            ProtocolSpec(kind=routing.FM, copies=3)
        with pytest.raises(ConfigurationError):
            ProtocolSpec(kind=routing.IB, copies=4)

    def test_direct_delivery_single_copy(self):
        assert ProtocolSpec.fm0().copies == 1
        with pytest.raises(ConfigurationError):
            ProtocolSpec(kind=routing.FM0, copies=2)

    def test_spray_copy_and_hop_bounds(self):
        with pytest.raises(ConfigurationError):
            ProtocolSpec.spray(copies=1)
        with pytest.raises(ConfigurationError):
            ProtocolSpec.spray(copies=4, max_hops=1)

    def test_modib_requires_copies_equal_dimension(self, basic_view):
        with pytest.raises(ConfigurationError):
            initial_state(ProtocolSpec(kind=routing.MOD_IB, copies=3),
                          basic_view)


class TestFirstMeeting:
    def test_transfer_splits_copies(self, basic_view):
        spec = ProtocolSpec.fm()
        state = initial_state(spec, basic_view)
        _, decision = on_contact(spec, state, SOURCE, 2, 1.0, basic_view)
        assert decision.transfer == (SOURCE, 2, 1)
        assert state.holders == {SOURCE: 1, 2: 1}
        assert state.t1 == 1.0
        assert state.depths[2] == 1

    def test_single_copy_holders_cannot_forward(self, basic_view):
        spec = ProtocolSpec.fm()
        state = initial_state(spec, basic_view)
        on_contact(spec, state, SOURCE, 2, 1.0, basic_view)
        assert givers(spec, state) == []
        assert not is_active(spec, state, SOURCE, 3, basic_view)
        with pytest.raises(ProtocolViolationError):
            on_contact(spec, state, SOURCE, 3, 2.0, basic_view)

    def test_delivery(self, basic_view):
        spec = ProtocolSpec.fm()
        state = initial_state(spec, basic_view)
        on_contact(spec, state, SOURCE, 2, 1.0, basic_view)
        _, decision = on_contact(spec, state, 2, DEST, 3.0, basic_view)
        assert decision.delivered
        assert state.delivered_at == 3.0
        assert state.delivery_hops == 2

    def test_direct_delivery_is_one_hop(self, basic_view):
        spec = ProtocolSpec.fm()
        state = initial_state(spec, basic_view)
        on_contact(spec, state, SOURCE, DEST, 0.5, basic_view)
        assert state.delivery_hops == 1


class TestThreshold:
    def test_gate_by_similarity(self, basic_view):
        spec = ProtocolSpec.ib(gamma=0.5, fallback_time=10.0)
        state = initial_state(spec, basic_view)
        assert not eligibility(spec, state, 2, basic_view)
        assert not eligibility(spec, state, 3, basic_view)
        assert eligibility(spec, state, 4, basic_view)

    def test_fallback_opens_the_gate(self, basic_view):
        spec = ProtocolSpec.ib(gamma=0.5, fallback_time=10.0)
        state = initial_state(spec, basic_view)
        state.elapsed = 10.0
        assert eligibility(spec, state, 2, basic_view)

    def test_boundary_reported_only_when_it_matters(self, basic_view):
        spec = ProtocolSpec.ib(gamma=0.5, fallback_time=10.0)
        state = initial_state(spec, basic_view)
        assert fallback_boundary(spec, state, basic_view) == 10.0
        state.elapsed = 10.0
        assert fallback_boundary(spec, state, basic_view) is None

    def test_zero_gamma_has_no_boundary(self, basic_view):
        spec = ProtocolSpec.ib(gamma=0.0, fallback_time=10.0)
        state = initial_state(spec, basic_view)
        assert fallback_boundary(spec, state, basic_view) is None

    def test_mask_matches_scalar_rule(self, basic_view):
        spec = ProtocolSpec.ib(gamma=0.5, fallback_time=10.0)
        state = initial_state(spec, basic_view)
        mask = receiver_mask(spec, state, basic_view)
        for node in range(2, basic_view.size):
            assert mask[node] == eligibility(spec, state, node, basic_view)


class TestStrictlyCloser:
    def test_must_beat_best_similarity(self, basic_view):
        spec = ProtocolSpec.fm_star()
        state = initial_state(spec, basic_view)
        # The source is orthogonal to the destination, so any relay with
        # positive similarity qualifies; node 2 (similarity 0) does not.
        assert not eligibility(spec, state, 2, basic_view)
        assert eligibility(spec, state, 3, basic_view)
        on_contact(spec, state, SOURCE, 3, 1.0, basic_view)
        assert not eligibility(spec, state, 3, basic_view)
        assert eligibility(spec, state, 4, basic_view)

    def test_best_similarity_tracks_transfers(self, basic_view):
        spec = ProtocolSpec.fm_star(copies=4)
        state = initial_state(spec, basic_view)
        on_contact(spec, state, SOURCE, 4, 1.0, basic_view)
        assert math.isclose(state.best_similarity,
                            float(basic_view.sims_to_dest[4]))
        assert not eligibility(spec, state, 3, basic_view)


class TestSpray:
    def test_half_split_and_hop_bound(self, basic_view):
        spec = ProtocolSpec.spray(copies=4, max_hops=2)
        state = initial_state(spec, basic_view)
        _, decision = on_contact(spec, state, SOURCE, 2, 1.0, basic_view)
        assert decision.transfer == (SOURCE, 2, 2)
        # Depth-1 holders may not forward under a 2-hop bound.
        assert givers(spec, state) == [SOURCE]
        assert not is_active(spec, state, 2, 3, basic_view)

    def test_three_hop_paths(self, basic_view):
        spec = ProtocolSpec.spray(copies=4, max_hops=3)
        state = initial_state(spec, basic_view)
        on_contact(spec, state, SOURCE, 2, 1.0, basic_view)
        assert 2 in givers(spec, state)
        _, decision = on_contact(spec, state, 2, 3, 2.0, basic_view)
        assert decision.transfer == (2, 3, 1)
        assert state.depths[3] == 2
        assert givers(spec, state) == [SOURCE]

    def test_copy_conservation(self, basic_view):
        spec = ProtocolSpec.spray(copies=4, max_hops=3)
        state = initial_state(spec, basic_view)
        on_contact(spec, state, SOURCE, 2, 1.0, basic_view)
        on_contact(spec, state, 2, 3, 2.0, basic_view)
        assert state.total_copies() == 4


class TestCoordinateWindows:
    @pytest.fixture
    def window_view(self):
        def relay(first, high_index):
            v = np.full(4, 0.01)
            v[0] = first
            v[high_index] = 0.82
            rest = math.sqrt(max(0.0, 1.0 - v[0] ** 2 - 0.82 ** 2 - 0.01 ** 2))
            free = next(i for i in range(1, 4) if i != high_index)
            v[free] = rest
            return v

        return PopulationView(np.array([
            [1, 0, 0, 0],
            [0, 1, 0, 0],
            relay(0.07, 2),
            relay(0.08, 2),
            relay(0.06, 3),
            [0.5, 0.5, 0.5, 0.5],
        ]))

    def test_window_eligibility(self, window_view):
        spec = ProtocolSpec.mod_ib(4)
        state = initial_state(spec, window_view)
        assert eligibility(spec, state, 2, window_view)
        assert eligibility(spec, state, 4, window_view)
        assert not eligibility(spec, state, 5, window_view)

    def test_one_copy_per_relay_and_claimed_coordinates(self, window_view):
        spec = ProtocolSpec.mod_ib(4)
        state = initial_state(spec, window_view)
        _, decision = on_contact(spec, state, SOURCE, 2, 1.0, window_view)
        assert decision.transfer == (SOURCE, 2, 1)
        assert state.holders[SOURCE] == 3
        # Node 3's only open window coordinate is now claimed by node 2.
        assert not eligibility(spec, state, 3, window_view)
        assert eligibility(spec, state, 4, window_view)

    def test_rejects_non_window_receiver(self, window_view):
        spec = ProtocolSpec.mod_ib(4)
        state = initial_state(spec, window_view)
        with pytest.raises(ProtocolViolationError):
            on_contact(spec, state, SOURCE, 5, 1.0, window_view)


class TestDirectDelivery:
    def test_no_relay_forwarding(self, basic_view):
        spec = ProtocolSpec.fm0()
        state = initial_state(spec, basic_view)
        assert givers(spec, state) == []
        assert not eligibility(spec, state, 2, basic_view)
        pairs = active_pairs(spec, state, basic_view)
        assert pairs == [(SOURCE, DEST)]


class TestActivePairs:
    def test_order_is_deterministic(self, basic_view):
        spec = ProtocolSpec.fm()
        state = initial_state(spec, basic_view)
        assert active_pairs(spec, state, basic_view) == [
            (SOURCE, DEST), (SOURCE, 2), (SOURCE, 3), (SOURCE, 4),
        ]
        on_contact(spec, state, SOURCE, 3, 1.0, basic_view)
        assert active_pairs(spec, state, basic_view) == [
            (SOURCE, DEST), (3, DEST),
        ]

    def test_delivery_always_active(self, basic_view):
        spec = ProtocolSpec.ib(gamma=1.0, fallback_time=100.0)
        state = initial_state(spec, basic_view)
        assert (SOURCE, DEST) in active_pairs(spec, state, basic_view)
