"""Two-stage federated elimination protocol over a hierarchical partition.

Stage one is collaborative: the server walks the partition depth by depth,
each client samples every active cell a per-client share of the depth
threshold, the server merges the reports, eliminates cells whose optimistic
value falls below the best cell, and broadcasts the survivors with their
merged statistics.  Clients overwrite their local estimates of surviving
cells with the broadcast values; those cells are *protected* from then on.

Once the cell resolution drops below the optimal-value gap bound, every
client restarts from the root on its own (personalized elimination): cells
outside the protected sets are sampled up to the full depth threshold from
the client's own budget, the best cell is chosen over protected and local
cells alike, and only unprotected cells may be eliminated.  A cell thus
disappears for a client only after failing both the collaborative test and
the personal one.

The driver is synchronous and deterministic: given a suite and a master
seed, every pull, message and elimination event is reproducible.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .fedcore import (
    PROVENANCE_GLOBAL,
    PROVENANCE_LOCAL,
    ClientReport,
    ConfParams,
    NodeStats,
    ProtocolFault,
    ServerBroadcast,
    SmoothParams,
    confidence_bound,
    eliminate,
    merge_global,
    quota,
    select_best,
    tau,
)
from .objectives import ObjectiveSuite
from .partition import ROOT, BoxDomain, NodeId, PartitionSpec, children, parent, representative
from .seeding import PURPOSE_NOISE, substream


class Stage(enum.Enum):
    STAGE1 = "stage1"
    PE = "pe"
    EXHAUSTED = "exhausted"


@dataclass(frozen=True)
class PullRecord:
    """One evaluation: which client pulled which cell, when, and the outcome."""

    client: int
    t: int
    node: NodeId
    point: np.ndarray
    reward: float
    instant_regret: float


class PullLog:
    """Compact per-client pull history (arrays instead of record objects)."""

    def __init__(self, client: int):
        self.client = client
        self.node_depths: list[int] = []
        self.node_indices: list[int] = []
        self.rewards: list[float] = []
        self.instant_regrets: list[float] = []

    def append_batch(self, node: NodeId, rewards: np.ndarray, instant_regret: float) -> None:
        n = len(rewards)
        self.node_depths.extend([node.depth] * n)
        self.node_indices.extend([node.index] * n)
        self.rewards.extend(rewards.tolist())
        self.instant_regrets.extend([instant_regret] * n)

    def __len__(self) -> int:
        return len(self.rewards)

    def regret_array(self) -> np.ndarray:
        return np.asarray(self.instant_regrets, dtype=float)

    def nodes(self) -> list[NodeId]:
        return [NodeId(d, i) for d, i in zip(self.node_depths, self.node_indices)]

    def iter_records(self, domain: BoxDomain, spec: PartitionSpec):
        for t in range(len(self.rewards)):
            node = NodeId(self.node_depths[t], self.node_indices[t])
            yield PullRecord(
                client=self.client,
                t=t + 1,
                node=node,
                point=representative(domain, node, spec),
                reward=self.rewards[t],
                instant_regret=self.instant_regrets[t],
            )


@dataclass
class CommRound:
    """One server round: what moved up, what moved down, and when."""

    round_index: int
    depth: int
    scalars_up: int
    scalars_down: int
    cumulative_scalars: int
    clock: int


@dataclass
class EliminationEvent:
    """One elimination decision (server pass or one client's personal pass)."""

    depth: int
    best: NodeId | None
    eliminated: frozenset[NodeId]
    survivors: tuple[NodeId, ...]


class Server:
    """Merges client reports, eliminates, and broadcasts survivors."""

    def __init__(self, spec: PartitionSpec, conf: ConfParams, smooth: SmoothParams, clients: int):
        self.spec = spec
        self.conf = conf
        self.smooth = smooth
        self.clients = clients
        self.depth = 0
        self.active: list[NodeId] = [ROOT]
        self.history: dict[int, tuple[tuple[NodeId, ...], dict]] = {}
        self.events: list[EliminationEvent] = []
        self.comm_rounds: list[CommRound] = []
        self.cumulative_scalars = 0

    def step(self, reports: list[ClientReport], clock: int) -> ServerBroadcast:
        """Process one depth: merge, eliminate, broadcast, expand."""
        if len(reports) != self.clients:
            raise ProtocolFault(f"expected {self.clients} reports, got {len(reports)}")
        for report in reports:
            if report.depth != self.depth:
                raise ProtocolFault(
                    f"client {report.client} reported depth {report.depth}, server is at {self.depth}"
                )
            if set(report.entries) != set(self.active):
                raise ProtocolFault(f"client {report.client} report does not cover the active set")
        merged = merge_global(reports, self.conf)
        best = select_best(merged)
        removed = eliminate(merged, set(self.active), best, self.depth, self.smooth)
        survivors = tuple(n for n in self.active if n not in removed)
        stats = {n: (merged[n].mean, merged[n].bound) for n in survivors}
        self.events.append(EliminationEvent(self.depth, best, frozenset(removed), survivors))
        self.history[self.depth] = (survivors, stats)

        up = sum(len(r.entries) for r in reports) * 2
        down = len(survivors) * 3
        self.cumulative_scalars += up + down
        self.comm_rounds.append(CommRound(
            round_index=len(self.comm_rounds) + 1,
            depth=self.depth,
            scalars_up=up,
            scalars_down=down,
            cumulative_scalars=self.cumulative_scalars,
            clock=clock,
        ))

        broadcast = ServerBroadcast(depth=self.depth, survivors=survivors, stats=stats)
        self.active = sorted(c for n in survivors for c in children(n, self.spec))
        self.depth += 1
        return broadcast


class Client:
    """One client's state machine across both stages."""

    def __init__(self, m: int, suite: ObjectiveSuite, spec: PartitionSpec,
                 conf: ConfParams, smooth: SmoothParams, h0: int, depth_cap: int,
                 pe_enabled: bool, rng: np.random.Generator):
        self.m = m
        self.suite = suite
        self.spec = spec
        self.conf = conf
        self.smooth = smooth
        self.h0 = h0
        self.depth_cap = depth_cap
        self.pe_enabled = pe_enabled
        self.rng = rng
        self.f_star = suite.local_star(m)

        self.budget = conf.horizon_T
        self.clock = 0
        self.depth = 0
        self.pe_depth = 0
        self.stats: dict[NodeId, NodeStats] = {}
        self.protected: dict[int, frozenset[NodeId]] = {}
        self.local_active: list[NodeId] = [ROOT]
        self.pull_log = PullLog(m)
        self.pe_events: list[EliminationEvent] = []
        self.transition_clock: int | None = None
        self._cell_cache: dict[NodeId, tuple[np.ndarray, float]] = {}

        if h0 == 0 and pe_enabled:
            # The gap bound already swamps the root resolution: no
            # collaborative stage at all, personal elimination from pull one.
            self.stage = Stage.PE
            self.transition_clock = 0
        else:
            self.stage = Stage.STAGE1

    # ---- shared pull machinery ------------------------------------------

    def _point_value(self, node: NodeId) -> tuple[np.ndarray, float]:
        cached = self._cell_cache.get(node)
        if cached is None:
            point = representative(self.suite.domain, node, self.spec)
            cached = (point, self.suite.eval_local(self.m, point))
            self._cell_cache[node] = cached
        return cached

    def _pull_batch(self, node: NodeId, n: int) -> None:
        point, value = self._point_value(node)
        rewards = value + self.suite.noise.draw(self.rng, n)
        instant = self.f_star - value
        self.pull_log.append_batch(node, rewards, instant)
        prev = self.stats.get(node)
        if prev is None or prev.pulls == 0:
            pulls, total = n, float(rewards.sum())
        else:
            pulls, total = prev.pulls + n, prev.reward_sum + float(rewards.sum())
        self.stats[node] = NodeStats.from_counts(pulls, total, self.conf)
        self.clock += n
        self.budget -= n

    # ---- collaborative stage --------------------------------------------

    def run_stage1_phase(self, active: list[NodeId], per_node_quota: int) -> tuple[ClientReport, bool]:
        """Pull every active cell ``per_node_quota`` times, in index order.

        On budget exhaustion the client freezes mid-phase and reports only
        the cells it actually pulled; the caller treats that as the end of
        the run (schedules are identical across clients, so exhaustion is
        simultaneous).
        """
        if self.stage != Stage.STAGE1:
            raise ProtocolFault(f"client {self.m} cannot sample stage one in stage {self.stage}")
        entries: dict[NodeId, tuple[float, int]] = {}
        completed = True
        for node in active:
            n = min(per_node_quota, self.budget)
            if n > 0:
                self._pull_batch(node, n)
                s = self.stats[node]
                entries[node] = (s.mean, s.pulls)
            if n < per_node_quota:
                completed = False
                self.stage = Stage.EXHAUSTED
                break
        return ClientReport(client=self.m, depth=self.depth, entries=entries), completed

    def absorb_broadcast(self, broadcast: ServerBroadcast) -> None:
        """Adopt merged statistics for survivors and advance one depth."""
        if self.stage != Stage.STAGE1:
            raise ProtocolFault(f"client {self.m} received a broadcast in stage {self.stage}")
        if broadcast.depth != self.depth:
            raise ProtocolFault(
                f"client {self.m} at depth {self.depth} received a depth-{broadcast.depth} broadcast"
            )
        for node in broadcast.survivors:
            prev = self.stats.get(node)
            if prev is None:
                raise ProtocolFault(f"broadcast names unknown node {node}")
            mean, bound = broadcast.stats[node]
            self.stats[node] = NodeStats(
                pulls=prev.pulls,
                reward_sum=prev.reward_sum,
                mean=mean,
                bound=bound,
                provenance=PROVENANCE_GLOBAL,
            )
        self.protected[self.depth] = frozenset(broadcast.survivors)
        self.depth += 1
        if self.depth > self.h0 and self.pe_enabled:
            self._enter_pe()

    def _enter_pe(self) -> None:
        self.stage = Stage.PE
        self.pe_depth = 0
        self.local_active = [ROOT]
        self.transition_clock = self.clock

    # ---- personalized elimination ----------------------------------------

    def _stats_view(self, nodes: list[NodeId]) -> dict[NodeId, NodeStats]:
        view = {}
        for node in nodes:
            s = self.stats.get(node)
            if s is not None and s.pulls > 0:
                view[node] = s
        return view

    def pe_step(self) -> bool:
        """One personal depth: top up unprotected cells, eliminate, expand.

        Protected cells keep their broadcast statistics, still compete for
        the best-cell slot, and are exempt from both sampling and
        elimination.  Stage-one pull counts (including those of globally
        eliminated cells) count toward the per-depth threshold.  Returns
        False when the budget ran out before the thresholds were met.
        """
        h = self.pe_depth
        prot = self.protected.get(h, frozenset())
        tau_h = tau(h, self.conf, self.smooth)
        to_sample = [n for n in self.local_active if n not in prot]
        for node in to_sample:
            have = self.stats[node].pulls if node in self.stats else 0
            need = tau_h - have
            if need > 0:
                n = min(need, self.budget)
                if n > 0:
                    self._pull_batch(node, n)
                if n < need:
                    self.stage = Stage.EXHAUSTED
                    return False
        view = self._stats_view(self.local_active)
        if to_sample:
            best = select_best(view)
            removed = eliminate(view, set(to_sample), best, h, self.smooth)
        else:
            best, removed = None, set()
        if not prot.isdisjoint(removed):
            raise ProtocolFault(f"client {self.m} eliminated protected nodes at depth {h}")
        survivors = tuple(n for n in self.local_active if n not in removed)
        self.pe_events.append(EliminationEvent(h, best, frozenset(removed), survivors))
        self.local_active = sorted(c for n in survivors for c in children(n, self.spec))
        self.pe_depth += 1
        return True

    def run_pe(self) -> None:
        if self.stage != Stage.PE:
            return
        while self.stage == Stage.PE and self.pe_depth < self.depth_cap:
            if not self.pe_step():
                return
        if self.budget > 0:
            self._max_depth_fallback()
        else:
            self.stage = Stage.EXHAUSTED

    def _ancestor_mean(self, node: NodeId) -> float:
        """Mean of the nearest ancestor-or-self with recorded statistics."""
        current = node
        while True:
            s = self.stats.get(current)
            if s is not None and s.pulls > 0:
                return s.mean
            if current.depth == 0:
                return float("-inf")
            current = parent(current, self.spec)

    def _max_depth_fallback(self) -> None:
        """Depth cap reached with budget left: exploit the best-looking cell.

        Cells at the cap are generally unsampled, so each is scored by its
        nearest sampled ancestor; the whole remaining budget goes to the
        winner's representative (ties to the smallest index).
        """
        best_node = None
        best_score = float("-inf")
        for node in self.local_active:
            score = self._ancestor_mean(node)
            if score > best_score:
                best_node, best_score = node, score
        if best_node is None:
            best_node = self.local_active[0]
        self._pull_batch(best_node, self.budget)
        self.stage = Stage.EXHAUSTED

    def finish_stage1_only(self) -> None:
        """No personal stage: dump any remaining budget on the best survivor."""
        deepest = max(self.protected) if self.protected else None
        if self.budget <= 0 or deepest is None:
            if self.budget == 0:
                self.stage = Stage.EXHAUSTED
            return
        view = self._stats_view(sorted(self.protected[deepest]))
        node = select_best(view)
        self._pull_batch(node, self.budget)
        self.stage = Stage.EXHAUSTED


@dataclass
class ProtocolResult:
    """Everything a run produced, sufficient to recompute every metric."""

    clients: int
    horizon: int
    h0: int
    pull_logs: list[PullLog]
    server_events: list[EliminationEvent]
    client_events: list[list[EliminationEvent]]
    comm_rounds: list[CommRound]
    transition_clock: int | None
    transcript: list[str] = field(default_factory=list)
    stages: list[Stage] = field(default_factory=list)


def run_protocol(suite: ObjectiveSuite, spec: PartitionSpec, conf: ConfParams,
                 smooth: SmoothParams, h0: int, pe_enabled: bool, depth_cap: int,
                 seed: int, record_transcript: bool = False) -> ProtocolResult:
    """Drive a full run: synchronous stage-one rounds, then per-client PE.

    All clients advance through a stage-one phase before the server step;
    clients exhaust simultaneously there because their schedules are
    identical.  Personal elimination then runs each client to the end of
    its budget independently.
    """
    m_count = suite.clients
    clients = [
        Client(m, suite, spec, conf, smooth, h0, depth_cap, pe_enabled,
               substream(seed, PURPOSE_NOISE, m))
        for m in range(1, m_count + 1)
    ]
    server = Server(spec, conf, smooth, m_count)
    transcript: list[str] = []

    if h0 >= 1:
        depth = 0
        active = [ROOT]
        while depth <= h0:
            if clients[0].budget <= 0:
                break
            per_node = quota(tau(depth, conf, smooth), m_count)
            reports = []
            completed = True
            for client in clients:
                report, ok = client.run_stage1_phase(active, per_node)
                reports.append(report)
                completed = completed and ok
            if record_transcript:
                transcript.extend(r.canonical_text() for r in reports)
            if not completed:
                if any(c.stage != Stage.EXHAUSTED for c in clients):
                    raise ProtocolFault("clients exhausted asynchronously in stage one")
                break
            broadcast = server.step(reports, clock=clients[0].clock)
            if record_transcript:
                transcript.append(broadcast.canonical_text())
            for client in clients:
                client.absorb_broadcast(broadcast)
            active = server.active
            depth += 1

    if pe_enabled:
        for client in clients:
            client.run_pe()
    else:
        for client in clients:
            if client.stage == Stage.STAGE1:
                client.finish_stage1_only()

    for client in clients:
        if client.clock != conf.horizon_T:
            raise ProtocolFault(
                f"client {client.m} consumed {client.clock} pulls out of {conf.horizon_T}"
            )
        if client.stage != Stage.EXHAUSTED:
            client.stage = Stage.EXHAUSTED

    transition_clocks = {c.transition_clock for c in clients}
    if len(transition_clocks) != 1:
        raise ProtocolFault("clients disagree on the stage transition time")

    return ProtocolResult(
        clients=m_count,
        horizon=conf.horizon_T,
        h0=h0,
        pull_logs=[c.pull_log for c in clients],
        server_events=list(server.events),
        client_events=[list(c.pe_events) for c in clients],
        comm_rounds=list(server.comm_rounds),
        transition_clock=transition_clocks.pop(),
        transcript=transcript,
        stages=[c.stage for c in clients],
    )
