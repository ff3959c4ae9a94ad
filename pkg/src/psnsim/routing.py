"""Forwarding protocols as contact-driven state machines.

Nodes are integer indices: SOURCE = 0, DEST = 1, relays 2..n+1. A protocol
decides, for each meeting, whether copies move and whether the message is
delivered. Copies are only ever transferred, never duplicated, so the total
copy count stays at the initial allotment until delivery.

Protocol kinds
--------------
FM       two copies; the spare goes to the first node the source meets.
IB       like FM, but the spare goes only to a relay whose similarity to the
         destination is at least gamma, with a time fallback after which any
         relay qualifies.
FMStar   q copies split in halves along hop-bounded paths, forwarding only to
         nodes strictly more similar to the destination than every previous
         holder.
Spray    q copies split in halves, hop bounded, with a configurable
         receiver rule (first_meeting / threshold / strictly_closer).
ModIB    destination-oblivious: the source hands single copies to relays
         picked through coordinate windows so their interests are nearly
         orthogonal; relays only deliver.
FM0      direct delivery only (no relays); used as a baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ProtocolViolationError
from .interest_space import Population

SOURCE = 0
DEST = 1

FM = "FM"
IB = "IB"
FM_STAR = "FMStar"
MOD_IB = "ModIB"
SPRAY = "Spray"
FM0 = "FM0"
KINDS = (FM, IB, FM_STAR, MOD_IB, SPRAY, FM0)

FIRST_MEETING = "first_meeting"
THRESHOLD = "threshold"
STRICTLY_CLOSER = "strictly_closer"
COORD_WINDOW = "coordinate_window"
ELIGIBILITY_RULES = (FIRST_MEETING, THRESHOLD, STRICTLY_CLOSER)

# Coordinate windows for ModIB relay selection.
_W_FIRST = (0.05, 0.1)
_W_HIGH = (0.8, 0.85)


class PopulationView:
    """Array-backed view of a population with cached similarities.

    The protocol machinery works on this view so trial loops avoid per-node
    object churn; `Population` instances are converted on entry.
    """

    def __init__(self, coords: np.ndarray):
        coords = np.asarray(coords, dtype=float)
        if coords.ndim != 2 or coords.shape[0] < 2:
            raise ConfigurationError("population needs at least source and destination")
        self.coords = coords
        self.sims_to_dest = np.clip(coords @ coords[DEST], 0.0, 1.0)
        self._window_first = None
        self._window_high = None

    @classmethod
    def of(cls, pop) -> "PopulationView":
        if isinstance(pop, PopulationView):
            return pop
        if isinstance(pop, Population):
            return cls(pop.coords_matrix())
        return cls(np.asarray(pop, dtype=float))

    @property
    def size(self) -> int:
        return self.coords.shape[0]

    @property
    def n(self) -> int:
        return self.size - 2

    @property
    def m(self) -> int:
        return self.coords.shape[1]

    def window_masks(self):
        """ModIB coordinate windows: (first-coordinate mask, per-coordinate
        high-window boolean matrix over coordinates 2..m)."""
        if self._window_first is None:
            c = self.coords
            self._window_first = (c[:, 0] >= _W_FIRST[0]) & (c[:, 0] <= _W_FIRST[1])
            self._window_high = (c[:, 1:] >= _W_HIGH[0]) & (c[:, 1:] <= _W_HIGH[1])
        return self._window_first, self._window_high


@dataclass(frozen=True)
class ProtocolSpec:
    kind: str
    gamma: float = 0.0
    fallback_time: float | None = None
    copies: int = 2
    max_hops: int = 2
    eligibility: str = FIRST_MEETING

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown protocol kind {self.kind!r}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError(f"gamma must be in [0, 1], got {self.gamma}")
        if self.fallback_time is not None and self.fallback_time <= 0.0:
            raise ConfigurationError("fallback_time must be > 0")
        if self.eligibility not in ELIGIBILITY_RULES:
            raise ConfigurationError(f"unknown eligibility rule {self.eligibility!r}")
        if self.kind in (FM, IB) and self.copies != 2:
            raise ConfigurationError(f"{self.kind} uses exactly 2 copies")
        if self.kind == FM0:
            if self.copies != 1:
                raise ConfigurationError("FM0 keeps a single copy at the source")
        elif self.copies < 2:
            raise ConfigurationError("copies must be >= 2")
        if self.kind != FM0 and self.max_hops < 2:
            raise ConfigurationError("max_hops must be >= 2")

    @property
    def receiver_rule(self) -> str:
        """Effective relay-acceptance rule implied by the protocol kind."""
        if self.kind in (FM,):
            return FIRST_MEETING
        if self.kind == IB:
            return THRESHOLD
        if self.kind == FM_STAR:
            return STRICTLY_CLOSER
        if self.kind == MOD_IB:
            return COORD_WINDOW
        if self.kind == SPRAY:
            return self.eligibility
        return "none"  # FM0

    # Convenience constructors mirroring the config surface.
    @classmethod
    def fm(cls):
        return cls(kind=FM)

    @classmethod
    def ib(cls, gamma: float, fallback_time: float | None = None):
        return cls(kind=IB, gamma=gamma, fallback_time=fallback_time)

    @classmethod
    def fm_star(cls, copies: int = 2, max_hops: int = 2):
        return cls(kind=FM_STAR, copies=copies, max_hops=max_hops,
                   eligibility=STRICTLY_CLOSER)

    @classmethod
    def mod_ib(cls, m: int):
        return cls(kind=MOD_IB, copies=m)

    @classmethod
    def spray(cls, copies: int, max_hops: int = 2, eligibility: str = FIRST_MEETING,
              gamma: float = 0.0, fallback_time: float | None = None):
        return cls(kind=SPRAY, copies=copies, max_hops=max_hops,
                   eligibility=eligibility, gamma=gamma, fallback_time=fallback_time)

    @classmethod
    def fm0(cls):
        return cls(kind=FM0, copies=1, max_hops=2)


@dataclass(frozen=True)
class ForwardDecision:
    transfer: tuple[int, int, int] | None  # (giver, receiver, copies moved)
    delivered: bool

    def __post_init__(self):
        if self.transfer is not None:
            giver, receiver, copies = self.transfer
            if copies < 1:
                raise ConfigurationError("transfer must move at least one copy")
            if giver == receiver:
                raise ConfigurationError("transfer endpoints must differ")


@dataclass
class ProtocolState:
    """Evolving copy-holder state for one message."""

    holders: dict        # node -> copy count
    depths: dict         # node -> hop depth (source is 0)
    met_relay_log: list  # (node, similarity to destination), source seeded at t=0
    best_similarity: float
    claimed_coords: set  # ModIB: high-window coordinate indices already taken
    elapsed: float = 0.0
    delivered_at: float | None = None
    t1: float | None = None
    transfers: int = 0
    delivery_hops: int = 0

    @property
    def delivered(self) -> bool:
        return self.delivered_at is not None

    def total_copies(self) -> int:
        return sum(self.holders.values())


def initial_state(spec: ProtocolSpec, pop) -> ProtocolState:
    view = PopulationView.of(pop)
    if spec.kind == MOD_IB and spec.copies != view.m:
        raise ConfigurationError(
            f"ModIB needs copies == m ({view.m}), got {spec.copies}"
        )
    sim_sd = float(view.sims_to_dest[SOURCE])
    return ProtocolState(
        holders={SOURCE: spec.copies},
        depths={SOURCE: 0},
        met_relay_log=[(SOURCE, sim_sd)],
        best_similarity=sim_sd,
        claimed_coords=set(),
    )


def _modib_open_coord(view: PopulationView, state: ProtocolState,
                      candidate: int) -> int | None:
    """First unclaimed high-window coordinate of the candidate, if any."""
    first, high = view.window_masks()
    if not first[candidate]:
        return None
    for offset in np.flatnonzero(high[candidate]):
        coord = int(offset) + 1
        if coord not in state.claimed_coords:
            return coord
    return None


def eligibility(spec: ProtocolSpec, state: ProtocolState, candidate: int,
                pop) -> bool:
    """Would the protocol accept `candidate` (a copy-free node) as receiver?

    For IB the fallback opens the gate once state.elapsed reaches
    fallback_time ("after time n" in rate units).
    """
    view = PopulationView.of(pop)
    rule = spec.receiver_rule
    if rule == FIRST_MEETING:
        return True
    if rule == THRESHOLD:
        if spec.fallback_time is not None and state.elapsed >= spec.fallback_time:
            return True
        return float(view.sims_to_dest[candidate]) >= spec.gamma
    if rule == STRICTLY_CLOSER:
        return float(view.sims_to_dest[candidate]) > state.best_similarity
    if rule == COORD_WINDOW:
        return _modib_open_coord(view, state, candidate) is not None
    return False  # FM0: no relay forwarding


def receiver_mask(spec: ProtocolSpec, state: ProtocolState,
                  view: PopulationView) -> np.ndarray:
    """Vectorized eligibility over every node index (holders not excluded).

    Equivalent to calling `eligibility` per node; used by the trial engine.
    """
    rule = spec.receiver_rule
    if rule == FIRST_MEETING:
        return np.ones(view.size, dtype=bool)
    if rule == THRESHOLD:
        if spec.fallback_time is not None and state.elapsed >= spec.fallback_time:
            return np.ones(view.size, dtype=bool)
        return view.sims_to_dest >= spec.gamma
    if rule == STRICTLY_CLOSER:
        return view.sims_to_dest > state.best_similarity
    if rule == COORD_WINDOW:
        first, high = view.window_masks()
        open_cols = [
            c for c in range(high.shape[1]) if (c + 1) not in state.claimed_coords
        ]
        if not open_cols:
            return np.zeros(view.size, dtype=bool)
        return first & high[:, open_cols].any(axis=1)
    return np.zeros(view.size, dtype=bool)  # FM0


def givers(spec: ProtocolSpec, state: ProtocolState) -> list[int]:
    """Holders allowed to hand copies to a relay right now, in index order.

    A giver needs at least two copies and room under the hop bound for the
    receiver (receiver depth = giver depth + 1 must stay below max_hops so a
    final hop to the destination is still possible).
    """
    if spec.receiver_rule == "none":
        return []
    return sorted(
        node
        for node, count in state.holders.items()
        if count >= 2 and state.depths[node] + 1 < spec.max_hops
    )


def is_active(spec: ProtocolSpec, state: ProtocolState, giver: int,
              receiver: int, pop) -> bool:
    """Would a (giver -> receiver) meeting trigger a transfer or delivery now?"""
    if state.delivered or giver == receiver:
        return False
    if giver not in state.holders:
        return False
    if receiver == DEST:
        return True
    if receiver in state.holders:
        return False
    if state.holders[giver] < 2:
        return False
    if state.depths[giver] + 1 >= spec.max_hops:
        return False
    if spec.receiver_rule == "none":
        return False
    return eligibility(spec, state, receiver, pop)


def active_pairs(spec: ProtocolSpec, state: ProtocolState, pop) -> list:
    """Ordered (giver, receiver) pairs whose meeting would change state.

    Always includes (holder, DEST) for every holder. Pair order is fixed
    (holder->DEST first, then giver/relay pairs by index) so seeded runs are
    reproducible.
    """
    view = PopulationView.of(pop)
    pairs = [(h, DEST) for h in sorted(state.holders)]
    mask = receiver_mask(spec, state, view)
    for giver in givers(spec, state):
        for receiver in range(2, view.size):
            if receiver not in state.holders and mask[receiver]:
                pairs.append((giver, receiver))
    return pairs


def fallback_boundary(spec: ProtocolSpec, state: ProtocolState,
                      view: PopulationView) -> float | None:
    """Next instant at which the active-pair set changes without a meeting.

    Only threshold protocols have one: when the fallback fires, relays below
    gamma become eligible. Returns None when crossing the boundary would not
    change the pair set (e.g. gamma = 0), so engines that cap their clocks at
    the boundary consume randomness exactly like a protocol with no boundary.
    """
    if spec.receiver_rule != THRESHOLD or spec.fallback_time is None:
        return None
    if state.elapsed >= spec.fallback_time:
        return None
    if not givers(spec, state):
        return None
    below = view.sims_to_dest < spec.gamma
    below[DEST] = False
    for node in state.holders:
        below[node] = False
    if not below[2:].any():
        return None
    return spec.fallback_time


def on_contact(spec: ProtocolSpec, state: ProtocolState, giver: int,
               receiver: int, time: float, pop) -> tuple[ProtocolState, ForwardDecision]:
    """Apply a meeting between an active pair; deliver or move copies.

    Delivery is checked first: any holder meeting the destination delivers
    regardless of eligibility. Otherwise the giver hands floor(c/2) of its c
    copies (exactly one for ModIB, which allots one copy per relay).
    """
    view = PopulationView.of(pop)
    if giver not in state.holders:
        raise ProtocolViolationError(f"giver {giver} holds no copy")
    if receiver == DEST:
        state.elapsed = time
        state.delivered_at = time
        state.delivery_hops = state.depths[giver] + 1
        return state, ForwardDecision(transfer=None, delivered=True)
    if receiver in state.holders:
        raise ProtocolViolationError(f"receiver {receiver} already holds a copy")
    count = state.holders[giver]
    if count < 2:
        raise ProtocolViolationError(
            f"single-copy holder {giver} may only deliver to the destination"
        )
    if state.depths[giver] + 1 >= spec.max_hops:
        raise ProtocolViolationError("transfer would exceed the hop bound")

    moved = 1 if spec.kind == MOD_IB else count // 2
    if spec.kind == MOD_IB:
        coord = _modib_open_coord(view, state, receiver)
        if coord is None:
            raise ProtocolViolationError(
                f"node {receiver} does not satisfy the ModIB coordinate windows"
            )
        state.claimed_coords.add(coord)

    state.holders[giver] = count - moved
    state.holders[receiver] = moved
    state.depths[receiver] = state.depths[giver] + 1
    similarity = float(view.sims_to_dest[receiver])
    state.met_relay_log.append((receiver, similarity))
    if similarity > state.best_similarity:
        state.best_similarity = similarity
    state.elapsed = time
    state.transfers += 1
    if state.t1 is None:
        state.t1 = time
    return state, ForwardDecision(transfer=(giver, receiver, moved), delivered=False)
