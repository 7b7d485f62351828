"""Shared test utilities: scenario builder, fuzzer and brute-force oracles."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from gpi.keys import KeyPair, PublicIdentifier, generate_keypair
from gpi.ledger import (
    CommunityAdd,
    CommunityRemove,
    Declare,
    EventBody,
    Ledger,
    Pledge,
    Reset,
    ResetEndorsement,
    SignedEvent,
    Update,
    append_event,
)
from gpi.oracle import AgentRegistry
from gpi.registry import DEFAULT_RESET_QUORUM


@dataclass
class Scenario:
    """A ledger under construction together with its ground truth."""

    ledger: Ledger = field(default_factory=lambda: Ledger())
    registry: AgentRegistry = field(default_factory=AgentRegistry)
    keys: dict[str, KeyPair] = field(default_factory=dict)
    admin: KeyPair | None = None

    def key(self, name: str) -> KeyPair:
        kp = self.keys.get(name)
        if kp is None:
            kp = generate_keypair("mock", f"scenario:{name}".encode())
            self.keys[name] = kp
        return kp

    def ident(self, name: str) -> PublicIdentifier:
        return self.key(name).public

    def use_admin(self, agent: str = "admin") -> KeyPair:
        if self.admin is None:
            self.admin = self.key("__admin__")
            self.ledger = self.ledger.with_admins([self.admin.public])
            self.registry.agents.add(agent)
        return self.admin

    def post(self, body: EventBody, signer: KeyPair, agent: str) -> int:
        seq = len(self.ledger)
        self.ledger = append_event(self.ledger, body, signer)
        self.registry.actor[seq] = agent
        self.registry.agents.add(agent)
        return seq

    def declare(self, name: str, agent: str) -> int:
        kp = self.key(name)
        self.registry.key_owner.setdefault(kp.public, (agent,))
        return self.post(Declare(kp.public), kp, agent)

    def update(self, new: str, old: str, agent: str) -> int:
        kp = self.key(new)
        self.registry.key_owner.setdefault(kp.public, (agent,))
        return self.post(Update(kp.public, self.ident(old)), kp, agent)

    def reset(self, name: str, agent: str) -> int:
        return self.post(Reset(self.ident(name)), self.key(name), agent)

    def endorse(self, target: str, endorser: str, agent: str) -> int:
        body = ResetEndorsement(self.ident(target), self.ident(endorser))
        return self.post(body, self.key(endorser), agent)

    def pledge(self, surety_type: int, from_name: str, to_name: str, agent: str) -> int:
        body = Pledge(surety_type, self.ident(from_name), self.ident(to_name))
        return self.post(body, self.key(from_name), agent)

    def mutual_pledge(self, surety_type: int, a: str, b: str, agent_a: str, agent_b: str) -> tuple[int, int]:
        return (
            self.pledge(surety_type, a, b, agent_a),
            self.pledge(surety_type, b, a, agent_b),
        )

    def community_add(self, name: str) -> int:
        admin = self.use_admin()
        return self.post(CommunityAdd(self.ident(name)), admin, "admin")

    def community_remove(self, name: str) -> int:
        admin = self.use_admin()
        return self.post(CommunityRemove(self.ident(name)), admin, "admin")

    def compromise(self, name: str, thief: str) -> None:
        ident = self.ident(name)
        owners = self.registry.key_owner.get(ident, ())
        if thief not in owners:
            self.registry.key_owner[ident] = owners + (thief,)


def timing_scenarios() -> dict[str, Scenario]:
    """The three committed pledge-timing vectors, rebuilt from scratch.

    ``early_sybil``: the pledgee declared another identifier before the
    pledged one, so type-3 (and hence type-4) pledges on it are violated.
    ``late_declaration``: a fresh declaration lands after the pledged
    identifier's declaration (and after the pledge), violating type 4 only.
    ``honest_pair``: two single-identifier agents; nothing is violated.
    """

    def early_sybil() -> Scenario:
        sc = Scenario()
        sc.declare("earlier", "hp")
        sc.declare("pledged", "hp")
        sc.declare("voucher", "h")
        sc.pledge(3, "voucher", "pledged", "h")
        sc.pledge(4, "voucher", "pledged", "h")
        return sc

    def late_declaration() -> Scenario:
        sc = Scenario()
        sc.declare("pledged", "hp")
        sc.declare("voucher", "h")
        sc.pledge(3, "voucher", "pledged", "h")
        sc.pledge(4, "voucher", "pledged", "h")
        sc.declare("later", "hp")
        return sc

    def honest_pair() -> Scenario:
        sc = Scenario()
        sc.declare("alice", "ha")
        sc.declare("bob", "hb")
        for t in (1, 2, 3, 4):
            sc.mutual_pledge(t, "alice", "bob", "ha", "hb")
        return sc

    return {
        "timing_early_sybil": early_sybil(),
        "timing_late_declaration": late_declaration(),
        "timing_honest_pair": honest_pair(),
    }


def random_scenario(seed: int, n_events: int | None = None, with_resets: bool = True) -> Scenario:
    """A random mixed protocol log with full ground truth.

    Agents declare, update (validly and invalidly), pledge all four surety
    types (sometimes mutually), reset, endorse, and occasionally steal keys.
    """
    rng = np.random.default_rng(seed)
    sc = Scenario()
    agents = [f"a{i}" for i in range(int(rng.integers(2, 5)))]
    if n_events is None:
        n_events = int(rng.integers(6, 22))
    counter = 0
    declared: list[str] = []
    tip_of_agent: dict[str, str] = {}

    def fresh_name() -> str:
        nonlocal counter
        counter += 1
        return f"v{seed}_{counter}"

    actions = ["declare", "dup", "update", "bad_update", "pledge", "mutual", "reset", "endorse"]
    weights = np.array([0.22, 0.05, 0.16, 0.08, 0.16, 0.18, 0.08 if with_resets else 0.0, 0.07])
    weights /= weights.sum()
    for _ in range(n_events):
        act = rng.choice(actions, p=weights)
        agent = agents[int(rng.integers(len(agents)))]
        if act == "declare" or not declared:
            name = fresh_name()
            sc.declare(name, agent)
            declared.append(name)
            tip_of_agent.setdefault(agent, name)
        elif act == "dup":
            name = declared[int(rng.integers(len(declared)))]
            sc.declare(name, agent)
        elif act == "update":
            old = tip_of_agent.get(agent) or declared[int(rng.integers(len(declared)))]
            new = fresh_name()
            sc.update(new, old, agent)
            declared.append(new)
            tip_of_agent[agent] = new
        elif act == "bad_update":
            old = declared[int(rng.integers(len(declared)))]
            new = fresh_name()
            sc.update(new, old, agent)
            declared.append(new)
        elif act == "pledge":
            if len(declared) < 2:
                continue
            a, b = rng.choice(len(declared), size=2, replace=False)
            sc.pledge(int(rng.integers(1, 5)), declared[a], declared[b], agent)
        elif act == "mutual":
            if len(declared) < 2:
                continue
            a, b = rng.choice(len(declared), size=2, replace=False)
            other = agents[int(rng.integers(len(agents)))]
            sc.mutual_pledge(int(rng.integers(1, 5)), declared[a], declared[b], agent, other)
        elif act == "reset":
            name = declared[int(rng.integers(len(declared)))]
            sc.reset(name, agent)
        elif act == "endorse":
            if len(declared) < 2:
                continue
            a, b = rng.choice(len(declared), size=2, replace=False)
            sc.endorse(declared[a], declared[b], agent)
        if rng.random() < 0.03 and declared:
            sc.compromise(declared[int(rng.integers(len(declared)))], "thief")
    return sc


# ---------------------------------------------------------------------------
# Brute-force oracles: direct, non-incremental re-derivations
# ---------------------------------------------------------------------------

def bf_intro_events(events: list[SignedEvent]) -> dict[PublicIdentifier, int]:
    intro: dict[PublicIdentifier, int] = {}
    for ev in events:
        b = ev.body
        if isinstance(b, Declare) and b.v not in intro:
            intro[b.v] = ev.seq
        elif isinstance(b, Update) and b.new_v not in intro:
            intro[b.new_v] = ev.seq
        elif isinstance(b, Reset) and b.old_v not in intro:
            intro[b.old_v] = ev.seq
    return intro


def bf_mutual_neighbors(
    events: list[SignedEvent], v: PublicIdentifier, before: int
) -> set[PublicIdentifier]:
    intro = bf_intro_events(events[:before])
    if v not in intro:
        return set()
    out = set()
    for t in (2, 3, 4):
        for ev in events[:before]:
            if not isinstance(ev.body, Pledge) or ev.body.surety_type != t:
                continue
            if ev.body.from_v != v:
                continue
            u = ev.body.to_v
            if u not in intro:
                continue
            if any(
                isinstance(o.body, Pledge)
                and o.body.surety_type == t
                and o.body.from_v == u
                and o.body.to_v == v
                for o in events[:before]
            ):
                out.add(u)
    return out


def bf_nullified(
    events: list[SignedEvent],
    v: PublicIdentifier,
    before: int,
    quorum: Fraction = DEFAULT_RESET_QUORUM,
) -> bool:
    for ev in events[:before]:
        if not (isinstance(ev.body, Reset) and ev.body.old_v == v):
            continue
        neighbors = bf_mutual_neighbors(events, v, ev.seq)
        needed_frac = Fraction(quorum) * len(neighbors)
        needed = -(-needed_frac.numerator // needed_frac.denominator)
        if not neighbors:
            return True
        endorsers = {
            o.body.endorser_v
            for o in events[:before]
            if isinstance(o.body, ResetEndorsement)
            and o.body.target_v == v
            and o.seq > ev.seq
            and o.body.endorser_v in neighbors
        }
        if len(endorsers) >= needed:
            return True
    return False


def bf_update_valid(events: list[SignedEvent], seq: int) -> bool:
    """Direct recursive translation of the inductive validity rule."""
    body = events[seq].body
    assert isinstance(body, Update)
    intro = bf_intro_events(events)
    if intro.get(body.new_v) != seq:
        return False
    old = body.old_v
    if old not in intro or intro[old] >= seq:
        return False
    head = intro[old]
    head_body = events[head].body
    if isinstance(head_body, Update) and not bf_update_valid(events, head):
        return False
    for ev in events[:seq]:
        if (
            isinstance(ev.body, Update)
            and ev.body.old_v == old
            and intro.get(ev.body.new_v) == ev.seq
            and bf_update_valid(events, ev.seq)
        ):
            return False
    if bf_nullified(events, old, seq):
        return False
    return True


def bf_classify(
    events: list[SignedEvent], registry: AgentRegistry
) -> tuple[set[PublicIdentifier], set[PublicIdentifier], set[str]]:
    """(genuine, sybils, corrupt agents) straight from the definitions."""
    intro = bf_intro_events(events)
    fresh: list[tuple[int, PublicIdentifier]] = []
    inherit_from: dict[PublicIdentifier, PublicIdentifier] = {}
    for v, seq in intro.items():
        body = events[seq].body
        if isinstance(body, Update) and bf_update_valid(events, seq):
            inherit_from[v] = body.old_v
        else:
            fresh.append((seq, v))
    fresh.sort()

    def root_of(v: PublicIdentifier) -> PublicIdentifier:
        while v in inherit_from:
            v = inherit_from[v]
        return v

    def tip_as_of(root: PublicIdentifier, at: int) -> PublicIdentifier:
        tip = root
        changed = True
        while changed:
            changed = False
            for v, old in inherit_from.items():
                if old == tip and intro[v] < at:
                    tip = v
                    changed = True
                    break
        return tip

    genuine_roots: set[PublicIdentifier] = set()
    for seq, v in fresh:
        h = registry.actor_of(seq)
        earlier = [u for s, u in fresh if s < seq and registry.actor_of(s) == h]
        blocked = False
        for u in earlier:
            tip = tip_as_of(u, seq)
            if not bf_nullified(events, tip, seq):
                blocked = True
                break
        if not blocked:
            genuine_roots.add(v)

    genuine = {v for v in intro if root_of(v) in genuine_roots}
    sybils = set(intro) - genuine
    corrupt = {registry.actor_of(intro[root_of(v)]) for v in sybils}
    return genuine, sybils, corrupt
