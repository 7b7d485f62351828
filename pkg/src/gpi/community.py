"""Community histories, penetration metrics and the growth-guarantee checker.

A community is a subset of declared identifiers.  Replaying add/remove
events off the ledger yields its history; against an oracle
classification we measure

    sigma(A) = |A ∩ sybils| / |A|        (sybil penetration)
    beta(A)  = |A ∩ byzantine| / |A|     (byzantine penetration)

and ``theorem2_check`` evaluates the six sufficient conditions under
which one growth step A -> A' keeps byzantine penetration at or below a
target beta:

    1. every vertex of A' has degree <= d;
    2. every member of A' has internal degree >= alpha * d;
    3. |A ∩ B| / |A| <= beta;
    4. e(A'∩H, A'∩B) <= gamma * vol_{A'}(A'∩H);
    5. |A' \\ A| <= delta * |A|  and  beta + delta <= 1/2;
    6. Phi(G|_{A'}) > (gamma/alpha) * (1-beta)/beta.

All ratios are evaluated in exact rational arithmetic.  Condition 6 uses
exact conductance on small grown sets; beyond the enumeration threshold
the certified Cheeger bounds decide it conservatively, and the verdict
becomes ``inconclusive`` when neither bound settles the inequality.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import AbstractSet

from .keys import PublicIdentifier
from .ledger import CommunityAdd, CommunityRemove, Ledger
from .metrics import (
    EXACT_CONDUCTANCE_LIMIT,
    Graph,
    TooLarge,
    conductance_bounds,
    conductance_exact,
    cut_size,
)
from .oracle import ClassificationReport
from .registry import analyze
from .rng import LEMMA_INSTANCES, substream


class EmptyCommunity(ValueError):
    """Penetration ratios are undefined for an empty community."""


# ---------------------------------------------------------------------------
# Histories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CommunityHistory:
    """Snapshot per ledger event; ``snapshots[0]`` is the initial empty set.

    ``snapshots[i+1]`` is the community after event seq ``i``; invalid
    add/remove events repeat the previous snapshot.
    """

    snapshots: tuple[frozenset[PublicIdentifier], ...]
    provenance: tuple[int, ...]

    @property
    def final(self) -> frozenset[PublicIdentifier]:
        return self.snapshots[-1]


def history_from_ledger(ledger: Ledger) -> CommunityHistory:
    """Replay add/remove events: add only declared non-members, remove members."""
    declared: set[PublicIdentifier] = set()
    current: frozenset[PublicIdentifier] = frozenset()
    snapshots = [current]
    a = analyze(ledger)
    intro_at = a.introduced_at
    for ev in ledger:
        if ev.seq in intro_at:
            declared.add(intro_at[ev.seq])
        body = ev.body
        if isinstance(body, CommunityAdd):
            # the identifier must be declared strictly before the add event
            if body.v in declared and body.v not in current:
                current = current | {body.v}
        elif isinstance(body, CommunityRemove):
            if body.v in current:
                current = current - {body.v}
        snapshots.append(current)
    return CommunityHistory(tuple(snapshots), tuple(range(len(ledger))))


# ---------------------------------------------------------------------------
# Penetration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PenetrationReport:
    sigma: Fraction
    beta: Fraction
    size: int
    sybil_count: int
    byzantine_count: int


def penetration(
    community: AbstractSet[PublicIdentifier], report: ClassificationReport
) -> PenetrationReport:
    if not community:
        raise EmptyCommunity("penetration of an empty community is undefined")
    size = len(community)
    sybils = len(community & report.sybils)
    byz = len(community & report.byzantine)
    return PenetrationReport(
        sigma=Fraction(sybils, size),
        beta=Fraction(byz, size),
        size=size,
        sybil_count=sybils,
        byzantine_count=byz,
    )


# ---------------------------------------------------------------------------
# Growth-step checker
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Theorem2Params:
    """Degree bound and the four ratio parameters of the growth guarantee."""

    d: int
    alpha: Fraction
    beta: Fraction
    gamma: Fraction
    delta: Fraction

    def __post_init__(self) -> None:
        object.__setattr__(self, "alpha", Fraction(self.alpha))
        object.__setattr__(self, "beta", Fraction(self.beta))
        object.__setattr__(self, "gamma", Fraction(self.gamma))
        object.__setattr__(self, "delta", Fraction(self.delta))
        for name in ("alpha", "beta", "gamma", "delta"):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                raise ValueError(f"{name} must lie in [0,1], got {value}")
        if self.d < 0:
            raise ValueError("degree bound must be non-negative")

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "alpha": float(self.alpha),
            "beta": float(self.beta),
            "gamma": float(self.gamma),
            "delta": float(self.delta),
        }


@dataclass(frozen=True)
class ConditionResult:
    index: int
    description: str
    passed: bool | None  # None: not decidable with the certified bounds
    detail: str


@dataclass(frozen=True)
class ConditionReport:
    conditions: tuple[ConditionResult, ...]
    guarantee: bool
    verdict: str  # "pass" | "fail" | "inconclusive"
    conductance_mode: str  # "exact" | "cheeger"

    def to_dict(self) -> dict:
        return {
            "conditions": [
                {
                    "index": c.index,
                    "description": c.description,
                    "passed": c.passed,
                    "detail": c.detail,
                }
                for c in self.conditions
            ],
            "guarantee": self.guarantee,
            "verdict": self.verdict,
            "conductance_mode": self.conductance_mode,
        }


def byzantine_vertices(graph: Graph, report: ClassificationReport) -> frozenset[int]:
    """Map a classification onto graph vertices via their labels.

    Labels are matched on the bare hex key, so edge lists (which carry hex
    ids only) and classification dumps (scheme:hex) interoperate.
    """
    if graph.labels is None:
        raise ValueError("graph carries no labels to match identifiers against")
    byz_hex = {v.key_bytes.hex() for v in report.byzantine}
    out = set()
    for idx, label in enumerate(graph.labels):
        bare = label.rpartition(":")[2]
        if bare in byz_hex:
            out.add(idx)
    return frozenset(out)


def _internal_degree(graph: Graph, v: int, inside: AbstractSet[int]) -> int:
    return sum(1 for w in graph.adj[v] if w in inside)


def theorem2_check(
    graph: Graph,
    community: AbstractSet[int],
    grown: AbstractSet[int],
    params: Theorem2Params,
    byzantine: AbstractSet[int],
    exact_threshold: int = EXACT_CONDUCTANCE_LIMIT,
) -> ConditionReport:
    """Evaluate the six growth conditions for the step community -> grown."""
    a = frozenset(community)
    a_next = frozenset(grown)
    if not a <= a_next:
        raise ValueError("community must be a subset of the grown community")
    if not a_next <= set(range(graph.n)):
        raise ValueError("grown community contains unknown vertices")
    if not a:
        raise EmptyCommunity("the initial community must be nonempty")
    byz = frozenset(byzantine)
    harmless_in = a_next - byz
    byz_in = a_next & byz

    results: list[ConditionResult] = []

    max_deg = max(graph.degree(v) for v in a_next)
    results.append(
        ConditionResult(
            1,
            "degree bound over the grown community",
            max_deg <= params.d,
            f"max degree {max_deg} vs d={params.d}",
        )
    )

    if params.d > 0:
        min_internal = min(_internal_degree(graph, v, a_next) for v in a_next)
        cond2 = Fraction(min_internal, params.d) >= params.alpha
        detail2 = f"min internal degree {min_internal}/{params.d} vs alpha={params.alpha}"
    else:
        cond2 = params.alpha == 0
        detail2 = "degree bound is 0"
    results.append(ConditionResult(2, "internal degree floor", cond2, detail2))

    byz_share = Fraction(len(a & byz), len(a))
    results.append(
        ConditionResult(
            3,
            "byzantine share of the initial community",
            byz_share <= params.beta,
            f"|A∩B|/|A| = {byz_share} vs beta={params.beta}",
        )
    )

    sub, keep = graph.induced(a_next)
    pos = {old: new for new, old in enumerate(keep)}
    vol_h = sum(sub.degree(pos[v]) for v in harmless_in)
    e_hb = cut_size(graph, harmless_in, byz_in)
    results.append(
        ConditionResult(
            4,
            "harmless-byzantine boundary is scarce",
            Fraction(e_hb) <= params.gamma * vol_h,
            f"e(H,B)={e_hb} vs gamma*vol={float(params.gamma * vol_h):.6g}",
        )
    )

    growth = len(a_next - a)
    cond5 = Fraction(growth) <= params.delta * len(a) and params.beta + params.delta <= Fraction(1, 2)
    results.append(
        ConditionResult(
            5,
            "growth step bounded and beta+delta <= 1/2",
            cond5,
            f"|A'\\A|={growth}, delta*|A|={float(params.delta * len(a)):.6g}, "
            f"beta+delta={float(params.beta + params.delta):.6g}",
        )
    )

    mode = "exact"
    if params.alpha == 0 or params.beta == 0:
        cond6: bool | None = False
        detail6 = "conductance threshold undefined for alpha=0 or beta=0"
    else:
        threshold = (params.gamma / params.alpha) * (1 - params.beta) / params.beta
        try:
            phi = conductance_exact(sub, exact_threshold).value
            cond6 = phi > threshold
            detail6 = f"Phi(G|A') = {phi} vs threshold {float(threshold):.6g} (exact)"
        except TooLarge:
            mode = "cheeger"
            lower, upper = conductance_bounds(sub)
            if Fraction(lower) > threshold:
                cond6 = True
                detail6 = f"Cheeger lower bound {lower:.6g} > threshold {float(threshold):.6g}"
            elif Fraction(upper) <= threshold:
                cond6 = False
                detail6 = f"Cheeger upper bound {upper:.6g} <= threshold {float(threshold):.6g}"
            else:
                cond6 = None
                detail6 = (
                    f"threshold {float(threshold):.6g} falls between the Cheeger bounds "
                    f"[{lower:.6g}, {upper:.6g}]"
                )
    results.append(ConditionResult(6, "induced conductance above threshold", cond6, detail6))

    guarantee = all(c.passed is True for c in results)
    if guarantee:
        verdict = "pass"
    elif any(c.passed is False for c in results):
        verdict = "fail"
    else:
        verdict = "inconclusive"
    return ConditionReport(tuple(results), guarantee, verdict, mode)


def infer_params(
    graph: Graph,
    community: AbstractSet[int],
    grown: AbstractSet[int],
    byzantine: AbstractSet[int],
    beta: Fraction | float,
) -> Theorem2Params:
    """Tightest constants satisfying conditions 1, 2, 4 and 5; beta is yours.

    Exact rationals are returned so the constants re-check cleanly.
    """
    a = frozenset(community)
    a_next = frozenset(grown)
    if not a:
        raise EmptyCommunity("the initial community must be nonempty")
    if not a <= a_next:
        raise ValueError("community must be a subset of the grown community")
    byz = frozenset(byzantine)
    d = max(graph.degree(v) for v in a_next)
    if d > 0:
        alpha = min(Fraction(_internal_degree(graph, v, a_next), d) for v in a_next)
    else:
        alpha = Fraction(0)
    harmless_in = a_next - byz
    byz_in = a_next & byz
    sub, keep = graph.induced(a_next)
    pos = {old: new for new, old in enumerate(keep)}
    vol_h = sum(sub.degree(pos[v]) for v in harmless_in)
    e_hb = cut_size(graph, harmless_in, byz_in)
    gamma = Fraction(e_hb, vol_h) if vol_h else Fraction(0)
    delta = Fraction(len(a_next - a), len(a))
    return Theorem2Params(d=d, alpha=alpha, beta=Fraction(beta), gamma=gamma, delta=delta)


def theorem2_union_check(
    graph: Graph,
    first: AbstractSet[int],
    second: AbstractSet[int],
    params: Theorem2Params,
    byzantine: AbstractSet[int],
    exact_threshold: int = EXACT_CONDUCTANCE_LIMIT,
) -> tuple[ConditionReport, ConditionReport]:
    """Check a union of two overlapping communities from both sides.

    Both communities receive the guarantee for ``first | second`` exactly
    when both returned reports pass.
    """
    union = frozenset(first) | frozenset(second)
    return (
        theorem2_check(graph, first, union, params, byzantine, exact_threshold),
        theorem2_check(graph, second, union, params, byzantine, exact_threshold),
    )


# ---------------------------------------------------------------------------
# Random all-pass instances (soundness fodder for the checker)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LemmaInstance:
    graph: Graph
    community: frozenset[int]
    grown: frozenset[int]
    byzantine: frozenset[int]
    params: Theorem2Params


def random_lemma_instance(
    seed: int, index: int = 0, max_n: int = 16
) -> LemmaInstance | None:
    """One random instance engineered to satisfy all six conditions.

    Samples a connected dense-ish graph, a small byzantine set and a small
    growth step, infers the tightest constants and picks a feasible beta.
    Returns None when the sampled geometry admits no feasible beta (caller
    draws again); sampling is deterministic per (seed, index).
    """
    rng = substream(seed, LEMMA_INSTANCES, index)
    n = int(rng.integers(6, max_n + 1))
    p_edge = 0.45 + 0.4 * float(rng.random())
    for _ in range(40):
        edges = [
            (i, j)
            for i in range(n)
            for j in range(i + 1, n)
            if rng.random() < p_edge
        ]
        graph = Graph.from_edges(n, edges)
        if graph.is_connected() and min(graph.degrees) >= 1:
            break
    else:
        return None

    grown = frozenset(range(n))
    drop = int(rng.integers(0, max(1, n // 5) + 1))
    removable = list(rng.permutation(n))[:drop]
    community = grown - frozenset(int(v) for v in removable)
    if not community:
        community = grown
    n_byz = int(rng.integers(0, 3))
    byzantine = frozenset(int(v) for v in rng.permutation(n)[:n_byz])

    base = infer_params(graph, community, grown, byzantine, beta=Fraction(1, 2))
    phi = conductance_exact(graph.induced(grown)[0]).value
    if base.alpha == 0 or phi == 0:
        return None
    # beta must cover the byzantine share of A, exceed the conductance
    # threshold gamma/(gamma + phi*alpha), and leave room for delta
    share = Fraction(len(community & byzantine), len(community))
    floor = base.gamma / (base.gamma + phi * base.alpha)
    upper = Fraction(1, 2) - base.delta
    lower = max(share, floor)
    if lower >= upper:
        return None
    beta = lower + (upper - lower) * Fraction(1, 3)
    if beta <= floor:  # conductance condition is strict
        return None
    params = Theorem2Params(
        d=base.d, alpha=base.alpha, beta=beta, gamma=base.gamma, delta=base.delta
    )
    return LemmaInstance(graph, community, grown, byzantine, params)
