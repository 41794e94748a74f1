"""Event-driven model of a pull-based border router (xTR).

A data packet either hits the map-cache and is forwarded, or triggers the
miss path: pending-request dedup per prefix, the per-source limiter, the
destination budget, then a Map-Request with a fresh nonce. The mapping system
answers after a fixed latency (unless loss is injected) and the reply installs
the mapping. Replies scheduled at time t are delivered before a data packet
carrying the same timestamp.
"""

from __future__ import annotations

import enum
import heapq
import random
from collections import defaultdict, deque
from dataclasses import dataclass, field, fields
from typing import Callable, Iterable

from .cache import EidPrefix, MapCache
from .limiter import Decision, DestRateLimiter, LimiterConfig, SourceRateLimiter
from .workloads import PacketEvent, Role


class TimeRegression(Exception):
    """A packet event arrived with a timestamp earlier than one already processed."""


class StepOutcome(enum.Enum):
    FORWARDED = "forwarded"
    MISS_PENDING_REQUEST = "miss_pending_request"
    SUPPRESSED_ALREADY_PENDING = "suppressed_already_pending"
    SUPPRESSED_SOURCE_LIMITED = "suppressed_source_limited"
    SUPPRESSED_DEST_LIMITED = "suppressed_dest_limited"
    SUPPRESSED_NONCE_TABLE_FULL = "suppressed_nonce_table_full"

    @property
    def is_suppressed(self) -> bool:
        return self.value.startswith("suppressed_")


@dataclass
class Tally:
    """A counter split by the role of the principal it is attributed to."""

    legit: int = 0
    attacker: int = 0

    def bump(self, role: Role, amount: int = 1) -> None:
        if role is Role.ATTACKER:
            self.attacker += amount
        else:
            self.legit += amount

    @property
    def total(self) -> int:
        return self.legit + self.attacker


@dataclass
class XtrMetrics:
    packets_in: Tally = field(default_factory=Tally)
    cache_hits: Tally = field(default_factory=Tally)
    cache_misses: Tally = field(default_factory=Tally)
    map_requests_sent: Tally = field(default_factory=Tally)
    dropped_by_source_limiter: Tally = field(default_factory=Tally)
    dropped_by_dest_limiter: Tally = field(default_factory=Tally)
    suppressed_while_pending: Tally = field(default_factory=Tally)
    nonce_table_overflows: Tally = field(default_factory=Tally)
    map_replies_received: Tally = field(default_factory=Tally)
    evictions: Tally = field(default_factory=Tally)
    pending_timeouts: Tally = field(default_factory=Tally)
    stale_replies: int = 0

    def as_row(self) -> dict[str, int]:
        """Flat column -> value view in a stable order, for CSV export."""
        row: dict[str, int] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, Tally):
                row[f"{f.name}_total"] = value.total
                row[f"{f.name}_legit"] = value.legit
                row[f"{f.name}_attacker"] = value.attacker
            else:
                row[f.name] = value
        return row

    def admission_ratio(self, role: Role) -> float:
        """Admitted fraction of this role's misses that reached the limiter chain.

        Misses suppressed by pending dedup never asked for admission and are
        excluded. Returns 1.0 when nothing asked.
        """
        sent = getattr(self.map_requests_sent, role.value)
        attempts = sent + \
            getattr(self.dropped_by_source_limiter, role.value) + \
            getattr(self.dropped_by_dest_limiter, role.value) + \
            getattr(self.nonce_table_overflows, role.value)
        if attempts == 0:
            return 1.0
        return sent / attempts

    def hit_rate(self, role: Role) -> float:
        """Cache hits over packets for one role; 0.0 when the role sent nothing."""
        packets = getattr(self.packets_in, role.value)
        if packets == 0:
            return 0.0
        return getattr(self.cache_hits, role.value) / packets


@dataclass
class _Pending:
    prefix: EidPrefix
    issued_at: float
    role: Role


class PendingRequestTable:
    """Outstanding Map-Requests keyed by nonce, one per uncached prefix.

    Nonces are 64-bit draws, redrawn on the (vanishing) chance of colliding
    with a live entry.
    """

    def __init__(self, capacity: int, *, seed: int = 0):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._rng = random.Random(f"nonce-{seed}")
        self._by_nonce: dict[int, _Pending] = {}
        self._by_prefix: dict[EidPrefix, int] = {}
        # Insertion-ordered (issued_at, nonce) queue; issue times never step
        # backwards, so expiry only ever needs to look at the head.
        self._issue_order: deque[tuple[float, int]] = deque()

    def __len__(self) -> int:
        return len(self._by_nonce)

    @property
    def is_full(self) -> bool:
        return len(self._by_nonce) >= self.capacity

    def has_prefix(self, prefix: EidPrefix) -> bool:
        return prefix in self._by_prefix

    def insert(self, prefix: EidPrefix, now: float, role: Role) -> int:
        if self.is_full:
            raise OverflowError("pending table full")
        nonce = self._rng.getrandbits(64)
        while nonce in self._by_nonce:
            nonce = self._rng.getrandbits(64)
        self._by_nonce[nonce] = _Pending(prefix, now, role)
        self._by_prefix[prefix] = nonce
        self._issue_order.append((now, nonce))
        return nonce

    def consume(self, nonce: int) -> _Pending | None:
        entry = self._by_nonce.pop(nonce, None)
        if entry is not None:
            del self._by_prefix[entry.prefix]
        return entry

    def expire_due(self, now: float, timeout: float) -> list[_Pending]:
        """Remove and return entries whose timeout deadline has passed."""
        expired = []
        order = self._issue_order
        while order and order[0][0] + timeout <= now:
            issued_at, nonce = order.popleft()
            entry = self._by_nonce.get(nonce)
            if entry is not None and entry.issued_at == issued_at:
                expired.append(self.consume(nonce))
        return expired


@dataclass
class XtrConfig:
    cache_capacity: int = 1024
    cache_policy: str = "lru"
    age_interval: float = 5.0
    age_mode: str = "halve"
    source_limiter_enabled: bool = True
    limiter: LimiterConfig = field(default_factory=LimiterConfig)
    dest_budget: int = 10_000
    dest_period: float = 1.0
    dest_mode: str = "shared"
    pending_capacity: int = 4096
    reply_latency: float = 0.040
    pending_timeout: float | None = None  # defaults to 3x reply_latency
    reply_loss: float = 0.0
    record_cache_trace: bool = False
    # Which prefix a Map-Reply installs for a destination. Host-width by
    # default; a prefix table maps destinations to their covering prefix.
    reply_prefix_for: Callable[[int], EidPrefix] | None = None
    # Counting key the source limiter sees; the packet's source by default.
    source_key: Callable[[PacketEvent], int] | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.reply_loss < 1.0:
            raise ValueError(f"reply_loss must be in [0, 1), got {self.reply_loss}")
        if self.reply_latency <= 0:
            raise ValueError(f"reply_latency must be > 0, got {self.reply_latency}")

    @property
    def effective_pending_timeout(self) -> float:
        return 3.0 * self.reply_latency if self.pending_timeout is None else self.pending_timeout


def prefix_table_mapper(prefixes: Iterable[EidPrefix]) -> Callable[[int], EidPrefix]:
    """Reply-prefix function that answers with the longest covering table entry.

    Destinations outside every table prefix fall back to a host route.
    """
    ordered = sorted(prefixes, key=lambda p: -p.prefix_len)

    def mapper(dst: int) -> EidPrefix:
        for prefix in ordered:
            if prefix.contains(dst):
                return prefix
        return EidPrefix.host(dst)

    return mapper


class Xtr:
    """One simulated xTR: map-cache, limiters, pending table, reply scheduling."""

    def __init__(self, config: XtrConfig, *, seed: int = 0, start: float = 0.0):
        self.config = config
        self.metrics = XtrMetrics()
        age_kwargs = {}
        if config.cache_policy == "lfu-aging":
            age_kwargs = {"age_interval": config.age_interval, "age_mode": config.age_mode}
        self.cache = MapCache(config.cache_capacity, config.cache_policy,
                              start=start, record_trace=config.record_cache_trace,
                              **age_kwargs)
        self.source_limiter: SourceRateLimiter | None = None
        if config.source_limiter_enabled:
            self.source_limiter = SourceRateLimiter(config.limiter, seed=seed, start=start)
        self.dest_limiter = DestRateLimiter(config.dest_budget, config.dest_period,
                                            mode=config.dest_mode, start=start)
        self.pending = PendingRequestTable(config.pending_capacity, seed=seed)
        # Admitted Map-Requests per (source key, limiter period index), kept
        # for audits of the per-period admission cap.
        self.admitted_by_source_period: dict[tuple[int, int], int] = defaultdict(int)
        self._loss_rng = random.Random(f"loss-{seed}")
        self._reply_queue: list[tuple[float, int, int]] = []
        self._reply_seq = 0
        self._start = start
        self._last_time = start

    def _reply_prefix(self, dst: int) -> EidPrefix:
        if self.config.reply_prefix_for is not None:
            return self.config.reply_prefix_for(dst)
        return EidPrefix.host(dst)

    def _source_key(self, event: PacketEvent) -> int:
        if self.config.source_key is not None:
            return self.config.source_key(event)
        return event.src

    def _period_index(self, now: float) -> int:
        return int((now - self._start) // self.config.limiter.period)

    def _expire_pending(self, now: float) -> None:
        for entry in self.pending.expire_due(now, self.config.effective_pending_timeout):
            self.metrics.pending_timeouts.bump(entry.role)

    def deliver_reply(self, nonce: int, now: float) -> bool:
        """Consume a Map-Reply. Unknown (expired or bogus) nonces are discarded.

        Returns True when the reply installed a mapping.
        """
        entry = self.pending.consume(nonce)
        if entry is None:
            self.metrics.stale_replies += 1
            return False
        self.metrics.map_replies_received.bump(entry.role)
        if entry.prefix in self.cache:
            # A re-request raced an earlier in-flight reply (possible when the
            # pending timeout undercuts the reply latency); nothing to install.
            return True
        evicted = self.cache.install(entry.prefix, (entry.prefix.address,), now)
        if evicted is not None:
            self.metrics.evictions.bump(entry.role)
        return True

    def _deliver_due_replies(self, upto: float) -> None:
        while self._reply_queue and self._reply_queue[0][0] <= upto:
            reply_time, _, nonce = heapq.heappop(self._reply_queue)
            self._expire_pending(reply_time)
            self.deliver_reply(nonce, reply_time)

    def step(self, event: PacketEvent) -> StepOutcome:
        """Process one data packet. Time must not regress across calls."""
        now = event.time
        if now < self._last_time:
            raise TimeRegression(f"event at {now} after clock reached {self._last_time}")
        self._last_time = now
        metrics = self.metrics
        metrics.packets_in.bump(event.role)

        if self.cache.lookup(event.dst, now) is not None:
            metrics.cache_hits.bump(event.role)
            return StepOutcome.FORWARDED
        metrics.cache_misses.bump(event.role)

        prefix = self._reply_prefix(event.dst)
        if self.pending.has_prefix(prefix):
            metrics.suppressed_while_pending.bump(event.role)
            return StepOutcome.SUPPRESSED_ALREADY_PENDING

        if self.source_limiter is not None:
            if self.source_limiter.on_miss(self._source_key(event), now) is Decision.DROP:
                metrics.dropped_by_source_limiter.bump(event.role)
                return StepOutcome.SUPPRESSED_SOURCE_LIMITED

        if self.dest_limiter.consume(now, prefix) is Decision.DROP:
            metrics.dropped_by_dest_limiter.bump(event.role)
            return StepOutcome.SUPPRESSED_DEST_LIMITED

        if self.pending.is_full:
            metrics.nonce_table_overflows.bump(event.role)
            return StepOutcome.SUPPRESSED_NONCE_TABLE_FULL

        nonce = self.pending.insert(prefix, now, event.role)
        metrics.map_requests_sent.bump(event.role)
        self.admitted_by_source_period[(self._source_key(event), self._period_index(now))] += 1
        if self.config.reply_loss == 0.0 or self._loss_rng.random() >= self.config.reply_loss:
            heapq.heappush(self._reply_queue,
                           (now + self.config.reply_latency, self._reply_seq, nonce))
            self._reply_seq += 1
        return StepOutcome.MISS_PENDING_REQUEST

    def run(self, events: Iterable[PacketEvent]) -> XtrMetrics:
        """Drive the xTR through a whole stream, interleaving scheduled replies."""
        for event in events:
            self._deliver_due_replies(event.time)
            self._expire_pending(event.time)
            self.step(event)
        # Drain replies already in flight past the last packet.
        self._deliver_due_replies(float("inf"))
        return self.metrics
