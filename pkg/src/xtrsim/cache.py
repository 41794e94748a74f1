"""Fixed-capacity map-cache with longest-prefix match and pluggable eviction.

Two policies are provided: plain LRU, and LFU with periodic aging so that
entries cannot coast forever on hits accumulated long ago. Aging is applied
lazily: before any state-changing operation (a hit, an install, an explicit
age call) the cache catches up on every full age interval that has elapsed,
so hit attribution is identical to an eagerly-aged cache. A lookup that
misses changes nothing.
"""

from __future__ import annotations

from dataclasses import dataclass

ADDRESS_BITS = 128
_FULL_MASK = (1 << ADDRESS_BITS) - 1


class DuplicateInstall(Exception):
    """Install of a prefix that is already cached."""


class PolicyMismatch(Exception):
    """Aging requested on a cache whose policy does not age."""


@dataclass(frozen=True, order=True)
class EidPrefix:
    """Canonical overlay address block: all bits below the prefix boundary are zero.

    Host routes are the /128 degenerate case.
    """

    address: int
    prefix_len: int

    def __post_init__(self) -> None:
        if not 0 <= self.prefix_len <= ADDRESS_BITS:
            raise ValueError(f"prefix_len must be in [0, {ADDRESS_BITS}], got {self.prefix_len}")
        if not 0 <= self.address <= _FULL_MASK:
            raise ValueError("address out of the 128-bit range")
        if self.address & ~self.mask:
            raise ValueError(f"address {self.address:#x} has bits below /{self.prefix_len}")

    @property
    def mask(self) -> int:
        if self.prefix_len == 0:
            return 0
        return _FULL_MASK ^ ((1 << (ADDRESS_BITS - self.prefix_len)) - 1)

    @classmethod
    def of(cls, address: int, prefix_len: int) -> "EidPrefix":
        """Build a prefix, zeroing any host bits of `address`."""
        if prefix_len == 0:
            return cls(0, 0)
        mask = _FULL_MASK ^ ((1 << (ADDRESS_BITS - prefix_len)) - 1)
        return cls(address & mask, prefix_len)

    @classmethod
    def host(cls, address: int) -> "EidPrefix":
        return cls(address, ADDRESS_BITS)

    def contains(self, address: int) -> bool:
        return (address & self.mask) == self.address

    def __str__(self) -> str:
        return f"{self.address:#x}/{self.prefix_len}"

    @classmethod
    def parse(cls, text: str) -> "EidPrefix":
        addr, _, plen = text.partition("/")
        return cls(int(addr, 16), int(plen))


@dataclass
class MapCacheEntry:
    prefix: EidPrefix
    locators: tuple[int, ...]
    hit_count: int = 0
    last_used: float = 0.0
    installed_at: float = 0.0


@dataclass
class _LfuAgingState:
    interval: float
    mode: str  # "halve" or "zero"
    last_aged: float


class MapCache:
    """Map-cache of at most `capacity` entries keyed by prefix.

    policy: "lru", or "lfu-aging" with age_interval (simulated seconds) and
    age_mode "halve" (integer floor) or "zero".
    """

    def __init__(self, capacity: int, policy: str = "lru", *,
                 age_interval: float | None = None, age_mode: str = "halve",
                 start: float = 0.0, record_trace: bool = False):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        if policy not in ("lru", "lfu-aging"):
            raise ValueError(f"policy must be 'lru' or 'lfu-aging', got {policy!r}")
        self.capacity = capacity
        self.policy = policy
        self._aging: _LfuAgingState | None = None
        if policy == "lfu-aging":
            if age_interval is None or age_interval <= 0:
                raise ValueError("lfu-aging needs a positive age_interval")
            if age_mode not in ("halve", "zero"):
                raise ValueError(f"age_mode must be 'halve' or 'zero', got {age_mode!r}")
            self._aging = _LfuAgingState(age_interval, age_mode, start)
        self._entries: dict[EidPrefix, MapCacheEntry] = {}
        # Length-bucketed index for longest-prefix match.
        self._by_len: dict[int, dict[int, EidPrefix]] = {}
        self._lens_desc: list[int] = []
        self.trace: list[str] = []
        self._record_trace = record_trace

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, prefix: EidPrefix) -> bool:
        return prefix in self._entries

    def get(self, prefix: EidPrefix) -> MapCacheEntry | None:
        return self._entries.get(prefix)

    def entries(self) -> list[MapCacheEntry]:
        return list(self._entries.values())

    def _catch_up_aging(self, now: float) -> None:
        aging = self._aging
        if aging is None:
            return
        intervals = int((now - aging.last_aged) // aging.interval)
        if intervals < 1:
            return
        for entry in self._entries.values():
            if aging.mode == "zero":
                entry.hit_count = 0
            else:
                entry.hit_count >>= intervals
        aging.last_aged += intervals * aging.interval

    def _match(self, dst: int) -> MapCacheEntry | None:
        for plen in self._lens_desc:
            bucket = self._by_len[plen]
            masked = 0 if plen == 0 else dst & (_FULL_MASK ^ ((1 << (ADDRESS_BITS - plen)) - 1))
            prefix = bucket.get(masked)
            if prefix is not None:
                return self._entries[prefix]
        return None

    def lookup(self, dst: int, now: float) -> tuple[int, ...] | None:
        """Longest-prefix match; a hit refreshes the entry, a miss changes nothing."""
        entry = self._match(dst)
        if entry is None:
            if self._record_trace:
                self.trace.append(f"{now} lookup {dst:#x} miss -")
            return None
        self._catch_up_aging(now)
        entry.hit_count += 1
        entry.last_used = now
        if self._record_trace:
            self.trace.append(f"{now} lookup {dst:#x} hit -")
        return entry.locators

    def _lru_victim(self) -> EidPrefix:
        return min(self._entries.values(),
                   key=lambda e: (e.last_used, e.installed_at, e.prefix)).prefix

    def _lfu_victim(self) -> EidPrefix:
        # Least hits; among equals the least-recently-used goes, then the
        # oldest install, then the smallest prefix for a total order.
        return min(self._entries.values(),
                   key=lambda e: (e.hit_count, e.last_used, e.installed_at, e.prefix)).prefix

    def _remove(self, prefix: EidPrefix) -> None:
        del self._entries[prefix]
        bucket = self._by_len[prefix.prefix_len]
        del bucket[prefix.address]
        if not bucket:
            del self._by_len[prefix.prefix_len]
            self._lens_desc.remove(prefix.prefix_len)

    def install(self, prefix: EidPrefix, locators: tuple[int, ...] | list[int],
                now: float) -> EidPrefix | None:
        """Insert a mapping, evicting one victim if the cache is full.

        New entries always start with hit_count 0. Returns the evicted prefix
        or None. Raises DuplicateInstall if the prefix is already present.
        """
        if prefix in self._entries:
            raise DuplicateInstall(str(prefix))
        locators = tuple(locators)
        if not locators:
            raise ValueError("locators must be non-empty")
        self._catch_up_aging(now)
        evicted: EidPrefix | None = None
        if len(self._entries) >= self.capacity:
            evicted = self._lru_victim() if self.policy == "lru" else self._lfu_victim()
            self._remove(evicted)
        entry = MapCacheEntry(prefix, locators, hit_count=0,
                              last_used=now, installed_at=now)
        self._entries[prefix] = entry
        bucket = self._by_len.setdefault(prefix.prefix_len, {})
        bucket[prefix.address] = prefix
        if prefix.prefix_len not in self._lens_desc:
            self._lens_desc.append(prefix.prefix_len)
            self._lens_desc.sort(reverse=True)
        if self._record_trace:
            self.trace.append(
                f"{now} install {prefix} installed {evicted if evicted is not None else '-'}")
        return evicted

    def age(self, now: float) -> None:
        """Apply any pending aging now; only meaningful under lfu-aging."""
        if self._aging is None:
            raise PolicyMismatch("age() on an lru cache")
        self._catch_up_aging(now)
        if self._record_trace:
            self.trace.append(f"{now} age - aged -")
