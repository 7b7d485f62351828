"""Stochastic community-growth simulations.

Three layers, each validating a different quantitative claim:

* ``run_markov_component`` — the scalar birth-reset chain for a single
  sybil component: each round the component is expelled with probability
  p*x/n, otherwise it grows by one with probability 1/k.  Its drift
  balances at the positive root of x^2 + x/k - n/(pk) = 0, which is
  bounded by sqrt(n/(pk)).  Note that the root is a drift fixed point,
  not the chain's arithmetic time average: in stationarity the chain
  satisfies E[x^2] + E[x]/k = n/(pk) exactly, so the root coincides with
  the moment-matched component size while the plain mean sits below it
  (the stationary law is roughly half-normal).  Results expose both.

* ``run_agent_sim`` — the full agent-based model: candidates obtain one
  type-3 surety edge to a member and join; sybils land in one of at most
  k components uniformly; each admission is followed by one uniform
  member inspection which, on detecting a sybil (probability p), expels
  that sybil's entire connected component.  Optionally emits a replayable
  signed event ledger plus the matching ground-truth registry.

* ``capped_admission_sim`` / ``expander_bound_experiment`` — admission
  streams with a per-candidate sybil probability cap, and the fixed
  expander-backbone experiment bounding time-averaged penetration by
  sqrt(lambda/p).

All randomness is drawn from counter-based streams keyed by (seed,
purpose, block), a fixed number of draws per round, so every trajectory
is bit-reproducible regardless of parallelism.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, NamedTuple, Sequence

import numpy as np

from .keys import KeyPair, PublicIdentifier, generate_keypair
from .ledger import (
    CommunityAdd,
    CommunityRemove,
    Declare,
    Ledger,
    Pledge,
    append_event,
)
from .metrics import Graph, generate_regular_expander, greedy_independent_set
from .oracle import AgentRegistry
from .rng import (
    AGENT_SIM,
    CAPPED_ADMISSION,
    EXPANDER_SIM,
    MARKOV_CHAIN,
    PLACEMENT,
    stream,
    substream,
)

_BLOCK = 1 << 15


class ConfigError(ValueError):
    """Simulation configuration violates a parameter constraint."""


class ExpanderViolation(RuntimeError):
    """The sampled backbone cannot satisfy the requested lambda target."""


Strategy = Literal["uniform", "greedy_independent_set"]


class MeanWithError(NamedTuple):
    mean: float
    stderr: float


def _mean_with_error(series: np.ndarray, nbatches: int = 100) -> MeanWithError:
    """Batch-means estimate; plain std/sqrt(n) would ignore autocorrelation."""
    m = len(series)
    if m == 0:
        return MeanWithError(math.nan, math.nan)
    mean = float(series.mean())
    b = min(nbatches, m)
    if b < 2:
        return MeanWithError(mean, math.nan)
    usable = (m // b) * b
    batches = series[:usable].reshape(b, -1).mean(axis=1)
    stderr = float(batches.std(ddof=1) / math.sqrt(b))
    return MeanWithError(mean, stderr)


@dataclass(frozen=True)
class SimConfig:
    n0: int
    p: float
    k: int
    sybil_rate: float
    steps: int
    burn_in: int
    seed: int
    adversary: Strategy = "uniform"
    # Admissions in the shipped dynamics always succeed (every candidate
    # arrives with a surety edge), so this flag is inert; it records the
    # modelling alternative of running detection even after a failed
    # admission, should a failure mode ever be added.
    detect_after_failed_admission: bool = False

    def __post_init__(self) -> None:
        if self.n0 < 1:
            raise ConfigError("initial community must have at least one member")
        if not 0 < self.p <= 1:
            raise ConfigError("detection probability must lie in (0, 1]")
        if self.k < 1:
            raise ConfigError("component budget k must be >= 1")
        if not 0 <= self.sybil_rate <= 1:
            raise ConfigError("sybil_rate must lie in [0, 1]")
        if self.steps < 1:
            raise ConfigError("steps must be positive")
        if not 0 <= self.burn_in < self.steps:
            raise ConfigError("burn_in must satisfy 0 <= burn_in < steps")
        if self.adversary not in ("uniform", "greedy_independent_set"):
            raise ConfigError(f"unknown adversary strategy {self.adversary!r}")

    @classmethod
    def from_dict(cls, raw: dict) -> "SimConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    def to_dict(self) -> dict:
        return {
            "n0": self.n0,
            "p": self.p,
            "k": self.k,
            "sybil_rate": self.sybil_rate,
            "steps": self.steps,
            "burn_in": self.burn_in,
            "seed": self.seed,
            "adversary": self.adversary,
            "detect_after_failed_admission": self.detect_after_failed_admission,
        }


# ---------------------------------------------------------------------------
# Scalar component chain
# ---------------------------------------------------------------------------

def steady_state_root(n: int, p: float, k: int) -> float:
    """Positive root of x^2 + x/k - n/(pk) = 0; always <= sqrt(n/(pk))."""
    if n < 1 or k < 1:
        raise ConfigError("n and k must be >= 1")
    if not 0 < p <= 1:
        raise ConfigError("detection probability must lie in (0, 1]")
    return (-1.0 / k + math.sqrt(1.0 / k**2 + 4.0 * n / (p * k))) / 2.0


@dataclass(frozen=True)
class MarkovChainResult:
    mean: float
    stderr: float
    mean_square: float
    steps: int
    burn_in: int


def moment_matched_component_size(result: MarkovChainResult, k: int) -> float:
    """Component size whose drift balances the chain's measured moments."""
    rhs = result.mean_square + result.mean / k
    return (-1.0 / k + math.sqrt(1.0 / k**2 + 4.0 * rhs)) / 2.0


def run_markov_component(
    n: int,
    p: float,
    k: int,
    steps: int,
    seed: int,
    burn_in: int | None = None,
) -> MarkovChainResult:
    """Simulate the scalar chain exactly; post-burn-in time average of x."""
    if burn_in is None:
        burn_in = steps // 10
    if not 0 <= burn_in < steps:
        raise ConfigError("burn_in must satisfy 0 <= burn_in < steps")
    steady_state_root(n, p, k)  # parameter validation
    x = 0
    total = 0.0
    total_sq = 0.0
    kept = steps - burn_in
    batch_count = min(100, kept)
    batch_len = kept // batch_count if batch_count else kept
    batch_sums: list[float] = []
    batch_acc = 0.0
    batch_n = 0
    grow_base = 1.0 / k
    pn = p / n
    i_global = 0
    for block_idx in range(-(-steps // _BLOCK)):
        u = substream(seed, MARKOV_CHAIN, block_idx).random(min(_BLOCK, steps - block_idx * _BLOCK))
        for ui in u:
            q = pn * x
            if ui < q:
                x = 0
            elif ui < q + (1.0 - q) * grow_base:
                x += 1
            if i_global >= burn_in:
                total += x
                total_sq += x * x
                if batch_count >= 2 and len(batch_sums) < batch_count:
                    batch_acc += x
                    batch_n += 1
                    if batch_n == batch_len:
                        batch_sums.append(batch_acc / batch_len)
                        batch_acc = 0.0
                        batch_n = 0
            i_global += 1
    mean = total / kept
    if len(batch_sums) >= 2:
        arr = np.array(batch_sums)
        stderr = float(arr.std(ddof=1) / math.sqrt(len(arr)))
    else:
        stderr = math.nan
    return MarkovChainResult(mean, stderr, total_sq / kept, steps, burn_in)


# ---------------------------------------------------------------------------
# Agent-based model
# ---------------------------------------------------------------------------

@dataclass
class SimResult:
    config: SimConfig
    sigma_series: np.ndarray
    size_series: np.ndarray
    sybil_series: np.ndarray
    component_count_series: np.ndarray
    max_component_series: np.ndarray
    component_sizes: list[tuple[int, ...]]
    expulsion_sizes: list[int]
    time_avg_sigma: MeanWithError
    time_avg_sybils: MeanWithError
    time_avg_size: MeanWithError
    time_avg_component: MeanWithError
    final_members: tuple[int, ...] = ()
    ledger: Ledger | None = None
    registry: AgentRegistry | None = None
    id_to_key: dict[int, PublicIdentifier] = field(default_factory=dict)

    @property
    def expulsion_count(self) -> int:
        return len(self.expulsion_sizes)


class _Emitter:
    """Builds the replayable ledger and ground-truth registry alongside a run."""

    def __init__(self, seed: int):
        self.admin = generate_keypair("mock", f"sim-admin:{seed}".encode())
        self.seed = seed
        self.ledger = Ledger(admins=[self.admin.public])
        self.registry = AgentRegistry()
        self.registry.agents.add("admin")
        self.keys: dict[int, KeyPair] = {}
        # the adversary's own genuine identifier predates all sybils, so
        # every sybil it later declares is a later declaration of its agent
        self.adversary_root = generate_keypair("mock", f"sim-adv:{seed}".encode())
        self._record(Declare(self.adversary_root.public), self.adversary_root, "adversary")

    def _record(self, body, keypair: KeyPair, agent: str) -> None:
        seq = len(self.ledger)
        self.ledger = append_event(self.ledger, body, keypair)
        self.registry.actor[seq] = agent
        self.registry.agents.add(agent)

    def key_for(self, ident: int) -> KeyPair:
        kp = self.keys.get(ident)
        if kp is None:
            kp = generate_keypair("mock", f"sim:{self.seed}:{ident}".encode())
            self.keys[ident] = kp
        return kp

    def agent_for(self, ident: int, sybil: bool) -> str:
        return "adversary" if sybil else f"h{ident}"

    def declare(self, ident: int, sybil: bool) -> None:
        kp = self.key_for(ident)
        agent = self.agent_for(ident, sybil)
        self.registry.key_owner[kp.public] = (agent,)
        self._record(Declare(kp.public), kp, agent)

    def admit(self, ident: int, sybil: bool, target: int, target_sybil: bool) -> None:
        self.declare(ident, sybil)
        kp = self.key_for(ident)
        tp = self.key_for(target)
        self._record(
            Pledge(3, tp.public, kp.public), tp, self.agent_for(target, target_sybil)
        )
        self._record(
            Pledge(3, kp.public, tp.public), kp, self.agent_for(ident, sybil)
        )
        self._record(CommunityAdd(kp.public), self.admin, "admin")

    def add_initial(self, ident: int) -> None:
        self.declare(ident, sybil=False)
        self._record(CommunityAdd(self.key_for(ident).public), self.admin, "admin")

    def remove(self, ident: int) -> None:
        self._record(CommunityRemove(self.key_for(ident).public), self.admin, "admin")


def run_agent_sim(
    config: SimConfig,
    emit_ledger: bool = False,
    verify_components: bool = False,
) -> SimResult:
    """Full agent-based run of the admission/detection/expulsion model.

    Each round admits one candidate (sybil with probability ``sybil_rate``)
    through a fresh type-3 surety edge, then inspects one uniform member;
    a detected sybil takes its whole connected component down with it.
    ``verify_components`` cross-checks every expulsion against a BFS over
    the recorded sybil edges (slow; meant for small property-test runs).
    """
    k = config.k
    members: list[int] = list(range(config.n0))
    pos: dict[int, int] = {ident: i for i, ident in enumerate(members)}
    is_sybil: dict[int, bool] = {ident: False for ident in members}
    honest_members: list[int] = list(members)
    components: list[list[int]] = []
    comp_of: dict[int, int] = {}
    anchors: list[int] = []  # honest attachment point of each component
    next_id = config.n0
    sybil_count = 0

    track_edges = emit_ledger or verify_components or config.adversary == "greedy_independent_set"
    neighbors: dict[int, set[int]] = {ident: set() for ident in members} if track_edges else {}
    sybil_adj: dict[int, set[int]] = {} if verify_components else {}

    emitter = _Emitter(config.seed) if emit_ledger else None
    if emitter is not None:
        for ident in members:
            emitter.add_initial(ident)

    steps = config.steps
    sigma = np.empty(steps)
    size_series = np.empty(steps, dtype=np.int64)
    sybil_series = np.empty(steps, dtype=np.int64)
    comp_count = np.empty(steps, dtype=np.int64)
    max_comp = np.empty(steps, dtype=np.int64)
    component_sizes: list[tuple[int, ...]] = []
    expulsion_sizes: list[int] = []

    def remove_member(ident: int) -> None:
        idx = pos.pop(ident)
        last = members.pop()
        if last != ident:
            members[idx] = last
            pos[last] = idx

    def attach(a: int, b: int) -> None:
        if track_edges:
            neighbors.setdefault(a, set()).add(b)
            neighbors.setdefault(b, set()).add(a)
        if verify_components and is_sybil.get(a) and is_sybil.get(b):
            sybil_adj.setdefault(a, set()).add(b)
            sybil_adj.setdefault(b, set()).add(a)

    def pick_founding_target(u: float) -> int:
        # uniform honest member; the greedy adversary retries a few times
        # for one not adjacent to an existing anchor (independent-set demo)
        idx = int(u * len(honest_members))
        target = honest_members[min(idx, len(honest_members) - 1)]
        if config.adversary == "greedy_independent_set":
            taken = set(anchors)
            for _ in range(16):
                clashes = target in taken or bool(neighbors.get(target, set()) & taken)
                if not clashes:
                    break
                u = (u * 9973.0) % 1.0
                idx = int(u * len(honest_members))
                target = honest_members[min(idx, len(honest_members) - 1)]
        return target

    row = 0
    for block_idx in range(-(-steps // _BLOCK)):
        rows = min(_BLOCK, steps - block_idx * _BLOCK)
        draws = substream(config.seed, AGENT_SIM, block_idx).random((rows, 5))
        for u_type, u_slot, u_member, u_inspect, u_detect in draws:
            cand = next_id
            next_id += 1
            if u_type < config.sybil_rate:
                is_sybil[cand] = True
                slot = int(u_slot * k)
                if slot < len(components):
                    comp = components[slot]
                    target = comp[min(int(u_member * len(comp)), len(comp) - 1)]
                    comp.append(cand)
                    comp_of[cand] = slot
                else:
                    target = pick_founding_target(u_member)
                    components.append([cand])
                    anchors.append(target)
                    comp_of[cand] = len(components) - 1
                sybil_count += 1
            else:
                is_sybil[cand] = False
                target = members[min(int(u_member * len(members)), len(members) - 1)]
                honest_members.append(cand)
            pos[cand] = len(members)
            members.append(cand)
            attach(target, cand)
            if emitter is not None:
                emitter.admit(cand, is_sybil[cand], target, is_sybil[target])

            inspected = members[min(int(u_inspect * len(members)), len(members) - 1)]
            if is_sybil[inspected] and u_detect < config.p:
                ci = comp_of[inspected]
                comp = components[ci]
                if verify_components:
                    reached = {inspected}
                    queue = [inspected]
                    while queue:
                        cur = queue.pop()
                        for nb in sybil_adj.get(cur, ()):
                            if nb in pos and nb not in reached:
                                reached.add(nb)
                                queue.append(nb)
                    if reached != set(comp):
                        raise AssertionError(
                            "expelled set is not the connected sybil component"
                        )
                for m in comp:
                    remove_member(m)
                    sybil_count -= 1
                    comp_of.pop(m, None)
                    if emitter is not None:
                        emitter.remove(m)
                last = components.pop()
                anchors_last = anchors.pop()
                if ci < len(components):
                    components[ci] = last
                    anchors[ci] = anchors_last
                    for m in last:
                        comp_of[m] = ci
                expulsion_sizes.append(len(comp))

            n_members = len(members)
            if verify_components:  # counters vs a from-scratch recount
                recount = sum(1 for m in members if is_sybil[m])
                if recount != sybil_count:
                    raise AssertionError("incremental sybil count drifted")
            sigma[row] = sybil_count / n_members
            size_series[row] = n_members
            sybil_series[row] = sybil_count
            comp_count[row] = len(components)
            max_comp[row] = max((len(c) for c in components), default=0)
            component_sizes.append(tuple(len(c) for c in components))
            row += 1

    tail = slice(config.burn_in, None)
    comp_mean_series = np.where(
        comp_count[tail] > 0, sybil_series[tail] / np.maximum(comp_count[tail], 1), 0.0
    )
    result = SimResult(
        config=config,
        sigma_series=sigma,
        size_series=size_series,
        sybil_series=sybil_series,
        component_count_series=comp_count,
        max_component_series=max_comp,
        component_sizes=component_sizes,
        expulsion_sizes=expulsion_sizes,
        time_avg_sigma=_mean_with_error(sigma[tail]),
        time_avg_sybils=_mean_with_error(sybil_series[tail].astype(float)),
        time_avg_size=_mean_with_error(size_series[tail].astype(float)),
        time_avg_component=_mean_with_error(comp_mean_series),
        final_members=tuple(members),
    )
    if emitter is not None:
        result.ledger = emitter.ledger
        result.registry = emitter.registry
        result.id_to_key = {i: kp.public for i, kp in emitter.keys.items()}
    return result


# ---------------------------------------------------------------------------
# Capped-admission stream
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CappedAdmissionResult:
    penetration: np.ndarray  # sigma(A) after each admission
    mean: float


def capped_admission_sim(
    sigma_cap: float, steps: int, seed: int, n0: int = 1
) -> CappedAdmissionResult:
    """Admissions from a sybil-free start, each sybil with probability <= cap.

    Penetration after step t is (sybils so far) / (n0 + t + 1); with the
    cap sigma the expected penetration of every snapshot stays <= sigma.
    """
    if not 0 <= sigma_cap <= 1:
        raise ConfigError("sigma_cap must lie in [0, 1]")
    if n0 < 1 or steps < 1:
        raise ConfigError("need n0 >= 1 and steps >= 1")
    rng = stream(seed, CAPPED_ADMISSION)
    draws = rng.random(steps) < sigma_cap
    counts = np.cumsum(draws)
    sizes = n0 + np.arange(1, steps + 1)
    series = counts / sizes
    return CappedAdmissionResult(series, float(series.mean()))


# observation2_sim is the interface name used by the CLI contract
observation2_sim = capped_admission_sim


# ---------------------------------------------------------------------------
# Expander backbone experiment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Placement:
    vertices: tuple[int, ...]
    fallback: bool


def adversary_place_components(
    graph: Graph, k: int, strategy: Strategy, seed: int = 0
) -> Placement:
    """k distinct attachment points; greedy mode prefers an independent set."""
    if k > graph.n:
        raise ValueError(f"cannot place {k} components on {graph.n} vertices")
    if strategy == "greedy_independent_set":
        independent = sorted(greedy_independent_set(graph))
        if len(independent) >= k:
            return Placement(tuple(independent[:k]), False)
        rng = stream(seed, PLACEMENT)
        picked = sorted(int(v) for v in rng.choice(graph.n, size=k, replace=False))
        return Placement(tuple(picked), True)
    if strategy == "uniform":
        rng = stream(seed, PLACEMENT)
        picked = sorted(int(v) for v in rng.choice(graph.n, size=k, replace=False))
        return Placement(tuple(picked), False)
    raise ValueError(f"unknown strategy {strategy!r}")


@dataclass(frozen=True)
class ExpanderFamily:
    n: int
    d: int


@dataclass(frozen=True)
class ExpanderSeedOutcome:
    seed: int
    lam: float
    k: int
    time_avg_sigma: float
    placement_fallback: bool


@dataclass(frozen=True)
class ExpanderExperimentReport:
    family: ExpanderFamily
    p: float
    lambda_target: float
    bound: float
    outcomes: tuple[ExpanderSeedOutcome, ...]
    max_sigma: float
    ok: bool

    def to_dict(self) -> dict:
        return {
            "n": self.family.n,
            "d": self.family.d,
            "p": self.p,
            "lambda_target": self.lambda_target,
            "bound": self.bound,
            "max_sigma": self.max_sigma,
            "ok": self.ok,
            "outcomes": [
                {
                    "seed": o.seed,
                    "lambda": o.lam,
                    "k": o.k,
                    "time_avg_sigma": o.time_avg_sigma,
                    "placement_fallback": o.placement_fallback,
                }
                for o in self.outcomes
            ],
        }


def _expander_single(
    family: ExpanderFamily,
    p: float,
    lambda_target: float,
    rounds: int,
    burn_in: int,
    seed: int,
) -> ExpanderSeedOutcome:
    sample = generate_regular_expander(family.n, family.d, seed)
    lam = sample.lam
    if lam > lambda_target:
        raise ExpanderViolation(
            f"seed {seed}: measured lambda {lam:.4f} exceeds target {lambda_target}"
        )
    n = family.n
    k = int(lam * n)
    placement = (
        adversary_place_components(sample.graph, k, "greedy_independent_set", seed)
        if k > 0
        else Placement((), False)
    )
    members: list[int] = list(range(n))  # honest backbone, fixed
    pos = {i: i for i in members}
    slots: list[list[int]] = [[] for _ in range(k)]
    comp_of: dict[int, int] = {}
    next_id = n
    sybil_count = 0
    sigma = np.empty(rounds)

    def remove_member(ident: int) -> None:
        idx = pos.pop(ident)
        last = members.pop()
        if last != ident:
            members[idx] = last
            pos[last] = idx

    row = 0
    for block_idx in range(-(-rounds // _BLOCK)):
        rows = min(_BLOCK, rounds - block_idx * _BLOCK)
        draws = substream(seed, EXPANDER_SIM, block_idx).random((rows, 4))
        for u_slot, u_member, u_inspect, u_detect in draws:
            if k > 0:
                slot = min(int(u_slot * k), k - 1)
                comp = slots[slot]
                # joining an existing component or re-founding it at its anchor
                comp.append(next_id)
                comp_of[next_id] = slot
                pos[next_id] = len(members)
                members.append(next_id)
                sybil_count += 1
                next_id += 1

                inspected = members[min(int(u_inspect * len(members)), len(members) - 1)]
                if inspected >= n and u_detect < p:
                    ci = comp_of[inspected]
                    for m in slots[ci]:
                        remove_member(m)
                        comp_of.pop(m, None)
                        sybil_count -= 1
                    slots[ci] = []
            sigma[row] = sybil_count / len(members)
            row += 1
    tail = sigma[burn_in:]
    return ExpanderSeedOutcome(
        seed=seed,
        lam=lam,
        k=k,
        time_avg_sigma=float(tail.mean()),
        placement_fallback=placement.fallback,
    )


def _expander_worker(args: tuple) -> ExpanderSeedOutcome:
    return _expander_single(*args)


def expander_bound_experiment(
    family: ExpanderFamily,
    p: float,
    seeds: Sequence[int],
    lambda_target: float,
    rounds: int = 20000,
    burn_in: int | None = None,
    jobs: int = 1,
) -> ExpanderExperimentReport:
    """Fixed expander backbone, adversarial sybil flood, measured penetration.

    Every seed samples a fresh d-regular backbone; its measured lambda must
    stay at or below the target (ExpanderViolation otherwise).  The
    adversary runs k = floor(lambda*n) components anchored on a greedy
    independent set, the worst placement the expander admits.  Reported
    time-averaged penetration is asserted against sqrt(lambda_target/p) by
    callers.
    """
    if not 0 < p <= 1:
        raise ConfigError("detection probability must lie in (0, 1]")
    if burn_in is None:
        burn_in = rounds // 10
    if not 0 <= burn_in < rounds:
        raise ConfigError("burn_in must satisfy 0 <= burn_in < rounds")
    bound = math.sqrt(lambda_target / p)
    args = [(family, p, lambda_target, rounds, burn_in, s) for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = tuple(pool.map(_expander_worker, args))
    else:
        outcomes = tuple(_expander_single(*a) for a in args)
    max_sigma = max((o.time_avg_sigma for o in outcomes), default=0.0)
    return ExpanderExperimentReport(
        family=family,
        p=p,
        lambda_target=lambda_target,
        bound=bound,
        outcomes=outcomes,
        max_sigma=max_sigma,
        ok=max_sigma <= bound,
    )


# corollary1_experiment is the interface name used by the CLI contract
corollary1_experiment = expander_bound_experiment
