"""Simulation-only ground truth about agents behind the ledger.

The protocol itself never references people: posted events only mention
keys.  For simulations and tests, however, we need to know which agent
performed each event in order to decide which identifiers are genuine,
which are sybils, which agents are corrupt, and which pledges are
violated.  The registry kept here lives strictly outside the protocol
boundary; nothing in the ledger, registry or surety modules depends on it.

Classification rules:

* An agent's first fresh declaration is genuine; any later fresh
  declaration while a previous lineage of theirs is still alive is a
  sybil, and the agent is corrupt.
* Identifiers introduced by valid updates inherit their lineage's status
  rather than counting as fresh declarations.
* A fresh declaration made after all of the agent's earlier lineages were
  nullified by effective resets starts a new genuine lineage: resetting
  an identifier and starting over does not make an honest agent corrupt.

An identifier is byzantine if it is a sybil or the genuine identifier of
a corrupt agent; the rest are harmless.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

from .keys import PublicIdentifier
from .ledger import Ledger, Pledge, Update
from .registry import DEFAULT_RESET_QUORUM, LedgerAnalysis, ProvenanceChain, analyze


class MissingActor(KeyError):
    def __init__(self, seq: int):
        super().__init__(f"no actor recorded for event {seq}")
        self.seq = seq


@dataclass
class AgentRegistry:
    """Ground-truth map of agents, key possession and event actors.

    ``key_owner`` lists every agent holding an identifier's secret; two or
    more holders mark the identifier compromised.  ``actor`` names the one
    agent that performed each event.
    """

    agents: set[str] = field(default_factory=set)
    key_owner: dict[PublicIdentifier, tuple[str, ...]] = field(default_factory=dict)
    actor: dict[int, str] = field(default_factory=dict)

    def actor_of(self, seq: int) -> str:
        try:
            return self.actor[seq]
        except KeyError:
            raise MissingActor(seq) from None

    def owners_of(self, v: PublicIdentifier) -> tuple[str, ...]:
        return self.key_owner.get(v, ())

    def compromised_identifiers(self) -> frozenset[PublicIdentifier]:
        return frozenset(v for v, owners in self.key_owner.items() if len(owners) >= 2)

    def to_json(self) -> str:
        return json.dumps(
            {
                "agents": sorted(self.agents),
                "key_owner": {
                    v.label: list(owners)
                    for v, owners in sorted(self.key_owner.items(), key=lambda kv: kv[0].label)
                },
                "actor": {str(seq): h for seq, h in sorted(self.actor.items())},
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "AgentRegistry":
        raw = json.loads(text)
        key_owner = {}
        for label, owners in raw.get("key_owner", {}).items():
            scheme, _, hexkey = label.partition(":")
            key_owner[PublicIdentifier(scheme, bytes.fromhex(hexkey))] = tuple(owners)
        return cls(
            agents=set(raw.get("agents", [])),
            key_owner=key_owner,
            actor={int(seq): h for seq, h in raw.get("actor", {}).items()},
        )


@dataclass(frozen=True)
class ClassificationReport:
    genuine: frozenset[PublicIdentifier]
    sybils: frozenset[PublicIdentifier]
    honest_agents: frozenset[str]
    corrupt_agents: frozenset[str]
    byzantine: frozenset[PublicIdentifier]
    harmless: frozenset[PublicIdentifier]

    def to_json(self) -> str:
        def labels(idents: frozenset[PublicIdentifier]) -> list[str]:
            return sorted(v.label for v in idents)

        return json.dumps(
            {
                "genuine": labels(self.genuine),
                "sybils": labels(self.sybils),
                "honest_agents": sorted(self.honest_agents),
                "corrupt_agents": sorted(self.corrupt_agents),
                "byzantine": labels(self.byzantine),
                "harmless": labels(self.harmless),
            },
            indent=2,
        )


@dataclass
class _Lineage:
    owner: str
    genuine: bool
    tip: PublicIdentifier
    members: list[PublicIdentifier]


@dataclass
class _OracleState:
    analysis: LedgerAnalysis
    lineages: list[_Lineage]
    lineage_of: dict[PublicIdentifier, int]
    fresh_intros: dict[str, list[int]]  # agent -> seqs of fresh declarations
    declarer: dict[PublicIdentifier, str]  # rightful owner (actor of intro event)


def _trace(ledger: Ledger, registry: AgentRegistry, quorum: Fraction | float) -> _OracleState:
    a = analyze(ledger, quorum)
    lineages: list[_Lineage] = []
    lineage_of: dict[PublicIdentifier, int] = {}
    fresh_intros: dict[str, list[int]] = {}
    declarer: dict[PublicIdentifier, str] = {}
    owner_lineages: dict[str, list[int]] = {}

    for seq in sorted(a.introduced_at):
        v = a.introduced_at[seq]
        h = registry.actor_of(seq)
        declarer[v] = h
        event = ledger[seq]
        if isinstance(event.body, Update) and a.update_valid.get(seq, False):
            lin = lineage_of[event.body.old_v]
            lineage_of[v] = lin
            lineages[lin].tip = v
            lineages[lin].members.append(v)
            continue
        # fresh declaration: genuine only if every earlier lineage of this
        # agent has been nullified by an effective reset before this event
        alive = [
            i
            for i in owner_lineages.get(h, [])
            if not a.is_nullified(lineages[i].tip, before=seq)
        ]
        lineage = _Lineage(owner=h, genuine=not alive, tip=v, members=[v])
        lineages.append(lineage)
        idx = len(lineages) - 1
        lineage_of[v] = idx
        owner_lineages.setdefault(h, []).append(idx)
        fresh_intros.setdefault(h, []).append(seq)

    return _OracleState(a, lineages, lineage_of, fresh_intros, declarer)


def classify(
    ledger: Ledger,
    registry: AgentRegistry,
    quorum_fraction: Fraction | float = DEFAULT_RESET_QUORUM,
) -> ClassificationReport:
    """Split declared identifiers into genuine/sybil and derive agent status."""
    state = _trace(ledger, registry, quorum_fraction)
    genuine: set[PublicIdentifier] = set()
    sybils: set[PublicIdentifier] = set()
    corrupt: set[str] = set()
    for lin in state.lineages:
        bucket = genuine if lin.genuine else sybils
        bucket.update(lin.members)
        if not lin.genuine:
            corrupt.add(lin.owner)
    agents = set(registry.agents) | set(registry.actor.values())
    honest = agents - corrupt
    byzantine = set(sybils) | {v for v in genuine if state.declarer[v] in corrupt}
    harmless = (genuine | sybils) - byzantine
    return ClassificationReport(
        genuine=frozenset(genuine),
        sybils=frozenset(sybils),
        honest_agents=frozenset(honest),
        corrupt_agents=frozenset(corrupt),
        byzantine=frozenset(byzantine),
        harmless=frozenset(harmless),
    )


# ---------------------------------------------------------------------------
# Surety violations
# ---------------------------------------------------------------------------
# The four criteria are cumulative.  "holder" below means an agent that
# possesses the target's secret key (anyone able to answer a signing
# challenge); the declarer is the actor of the target's first declaration.
#
#   type 1: nobody holds the target's key.
#   type 2: ... or the target was never declared, or some holder is not
#           the declarer (theft or compromise).
#   type 3: ... or the target is a sybil.
#   type 4: ... or the declarer makes any fresh personal-identifier
#           declaration after the target's declaration, no matter whether
#           that happens before or after the pledge itself.

def _pledge_violation_reason(
    state: _OracleState,
    sybils: frozenset[PublicIdentifier],
    registry: AgentRegistry,
    pledge: Pledge,
    as_type: int,
) -> str | None:
    to_v = pledge.to_v
    holders = registry.owners_of(to_v)
    if not holders:
        return "target-key-unheld"
    if as_type < 2:
        return None
    intro_seq = state.analysis.intro.get(to_v)
    if intro_seq is None:
        return "target-never-declared"
    owner = state.declarer[to_v]
    if any(h != owner for h in holders):
        return "holder-not-declarer"
    if as_type < 3:
        return None
    if to_v in sybils:
        return "target-sybil"
    if as_type < 4:
        return None
    if any(s > intro_seq for s in state.fresh_intros.get(owner, ())):
        return "later-declaration"
    return None


def _sybil_set(state: _OracleState) -> frozenset[PublicIdentifier]:
    out: set[PublicIdentifier] = set()
    for lineage in state.lineages:
        if not lineage.genuine:
            out.update(lineage.members)
    return frozenset(out)


def surety_violations(
    ledger: Ledger,
    registry: AgentRegistry,
    surety_type: int,
    quorum_fraction: Fraction | float = DEFAULT_RESET_QUORUM,
) -> frozenset[tuple[int, str]]:
    """Violated pledge events of the given type, with the reason for each."""
    if surety_type not in (1, 2, 3, 4):
        raise ValueError(f"surety type must be 1..4, got {surety_type}")
    state = _trace(ledger, registry, quorum_fraction)
    sybils = _sybil_set(state)
    out = set()
    for ev in ledger:
        if isinstance(ev.body, Pledge) and ev.body.surety_type == surety_type:
            reason = _pledge_violation_reason(state, sybils, registry, ev.body, surety_type)
            if reason is not None:
                out.add((ev.seq, reason))
    return frozenset(out)


def pledge_violation(
    ledger: Ledger,
    registry: AgentRegistry,
    seq: int,
    as_type: int,
    quorum_fraction: Fraction | float = DEFAULT_RESET_QUORUM,
) -> str | None:
    """Evaluate one pledge event under any cumulative criterion.

    Lets tests check that the criteria really nest: a pledge violated at
    type t is violated at every type above t.
    """
    event = ledger[seq]
    if not isinstance(event.body, Pledge):
        raise ValueError(f"event {seq} is not a pledge")
    state = _trace(ledger, registry, quorum_fraction)
    return _pledge_violation_reason(state, _sybil_set(state), registry, event.body, as_type)


def chain_has_single_actor(
    chain: ProvenanceChain, registry: AgentRegistry
) -> bool:
    """True iff one agent performed every declaration in the chain."""
    actors = {registry.actor_of(seq) for seq in chain.links}
    return len(actors) == 1
