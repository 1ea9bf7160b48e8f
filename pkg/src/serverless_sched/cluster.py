"""Worker model: cores, slot capacity, hosted invocations and warm containers.

Three worker flavours implement the intra-worker disciplines. They share
the admit / release / advance_then_rebalance surface; the engine only
talks to that surface and to ``next_departure``.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass
from enum import Enum

from .simcore import SimulationError

FCFS = "FCFS"
PS = "PS"
SRPT = "SRPT"
DISCIPLINES = (FCFS, PS, SRPT)


@dataclass(frozen=True)
class FunctionProfile:
    function_id: int
    memory_mb: int = 256
    cold_start_penalty: float = 0.0
    keep_alive: float = math.inf

    def __post_init__(self):
        if self.memory_mb <= 0:
            raise ValueError("memory_mb must be positive")
        if self.cold_start_penalty < 0:
            raise ValueError("cold_start_penalty must be >= 0")
        if not self.keep_alive > 0:
            raise ValueError("keep_alive must be > 0 (use inf to disable expiry)")


@dataclass(slots=True, eq=False)
class Invocation:
    id: int
    function_id: int
    arrival: float
    service_demand: float
    dispatch: float | None = None
    start: float | None = None
    completion: float | None = None
    cold_start: bool = False
    worker_id: int | None = None
    remaining_work: float = 0.0
    # initial work actually executed: service_demand plus any cold-start penalty
    work: float = 0.0
    # discipline-private bookkeeping
    _tag: float = 0.0
    _since: float = 0.0
    _order: int = 0

    def __post_init__(self):
        if not self.service_demand > 0:
            raise ValueError(f"invocation {self.id}: service_demand must be > 0")
        self.remaining_work = self.service_demand
        self.work = self.service_demand


class Admission(Enum):
    STARTED_WARM = "StartedWarm"
    STARTED_COLD = "StartedCold"
    QUEUED = "Queued"
    REJECTED = "Rejected"


def _tolerance(now):
    # 1e-9 s, widened to a few ulps once the clock is large
    return max(1e-9, 8.0 * math.ulp(now))


class Worker:
    """Common state of one worker. Subclasses define the discipline."""

    discipline: str = ""

    def __init__(self, worker_id, cores, slot_capacity=None):
        if cores < 1:
            raise ValueError("cores must be >= 1")
        self.worker_id = worker_id
        self.cores = cores
        self.slot_capacity = 8 * cores if slot_capacity is None else slot_capacity
        if self.slot_capacity < 1:
            raise ValueError("slot_capacity must be >= 1")
        self.hosted = {}
        # function_id -> deque of (container_id, released_at); right end is most recent
        self.warm_pool = {}
        self.last_rate_update = 0.0
        self.next_departure = None
        self.pending_event = None
        # core-seconds delivered, integral of min(runnable, cores) dt
        self.busy_integral = 0.0
        self.completed_work = 0.0
        self.containers_created = 0
        self.containers_reused = 0
        self._order = 0

    def load(self):
        return len(self.hosted)

    def is_full(self):
        return len(self.hosted) >= self.slot_capacity

    def has_warm(self, function_id):
        pool = self.warm_pool.get(function_id)
        return bool(pool)

    def warm_count(self, function_id):
        pool = self.warm_pool.get(function_id)
        return len(pool) if pool else 0

    # --- public protocol -------------------------------------------------

    def admit(self, inv, now, cold_start_penalty=0.0):
        """Host ``inv`` here. Returns the Admission outcome."""
        if len(self.hosted) >= self.slot_capacity:
            raise SimulationError(
                f"worker {self.worker_id} is full ({len(self.hosted)}/{self.slot_capacity}); "
                f"cannot admit invocation {inv.id}")
        if inv.worker_id is not None:
            raise SimulationError(f"invocation {inv.id} already hosted on worker {inv.worker_id}")
        self._advance(now)
        pool = self.warm_pool.get(inv.function_id)
        if pool:
            pool.pop()
            self.containers_reused += 1
            inv.cold_start = False
            inv.work = inv.service_demand
        else:
            inv.cold_start = True
            inv.work = inv.service_demand + cold_start_penalty
        inv.remaining_work = inv.work
        inv.worker_id = self.worker_id
        if inv.dispatch is None:
            inv.dispatch = now
        inv._order = self._order
        self._order += 1
        self.hosted[inv.id] = inv
        queued = self._add(inv, now)
        self._rebalance(now)
        if queued:
            return Admission.QUEUED
        return Admission.STARTED_COLD if inv.cold_start else Admission.STARTED_WARM

    def release(self, inv_id, now):
        """Remove a finished invocation and park its container as warm.

        Returns ``(invocation, container_id)``.
        """
        inv = self.hosted.get(inv_id)
        if inv is None:
            raise SimulationError(f"release of invocation {inv_id} not hosted on worker {self.worker_id}")
        self._advance(now)
        rem = self.remaining(inv, now)
        if abs(rem) > _tolerance(now):
            raise SimulationError(
                f"invocation {inv_id} released at t={now!r} with remaining work {rem!r}")
        self._remove(inv, now)
        del self.hosted[inv_id]
        inv.remaining_work = 0.0
        inv.completion = now
        self.completed_work += inv.work
        cid = self.containers_created
        self.containers_created += 1
        pool = self.warm_pool.get(inv.function_id)
        if pool is None:
            pool = self.warm_pool[inv.function_id] = deque()
        pool.append((cid, now))
        self._rebalance(now)
        return inv, cid

    def expire(self, function_id, container_id):
        """Drop an idle container whose keep-alive ran out. False if it was reused."""
        pool = self.warm_pool.get(function_id)
        if not pool:
            return False
        if pool[0][0] == container_id:
            pool.popleft()
            return True
        for i, (cid, _) in enumerate(pool):
            if cid == container_id:
                del pool[i]
                return True
        return False

    def advance_then_rebalance(self, now):
        self._advance(now)
        self._rebalance(now)
        return self.next_departure

    def delivered_work(self, now):
        """Total work served so far (finished plus partial)."""
        done = self.completed_work
        for inv in self.hosted.values():
            done += inv.work - self.remaining(inv, now)
        return done

    def sync_remaining(self, now):
        """Refresh ``remaining_work`` on every hosted invocation (for inspection)."""
        for inv in self.hosted.values():
            inv.remaining_work = self.remaining(inv, now)

    # --- discipline hooks ------------------------------------------------

    def remaining(self, inv, now):
        raise NotImplementedError

    def _advance(self, now):
        raise NotImplementedError

    def _add(self, inv, now):
        """Insert into discipline structures; return True when the invocation waits."""
        raise NotImplementedError

    def _remove(self, inv, now):
        raise NotImplementedError

    def _rebalance(self, now):
        raise NotImplementedError

    def _check_advance(self, now):
        if now < self.last_rate_update:
            raise SimulationError(
                f"worker {self.worker_id}: time moved backwards ({now!r} < {self.last_rate_update!r})")

    def __repr__(self):
        return (f"{type(self).__name__}(id={self.worker_id}, cores={self.cores}, "
                f"load={len(self.hosted)}/{self.slot_capacity})")


class PSWorker(Worker):
    """Processor sharing: n hosted invocations each run at min(1, cores/n).

    Tracks a per-worker virtual clock of attained service per invocation;
    each invocation stores the virtual time at which it finishes, so
    remaining work is always ``tag - vclock`` (one subtraction).
    """

    discipline = PS

    def __init__(self, worker_id, cores, slot_capacity=None):
        super().__init__(worker_id, cores, slot_capacity)
        self.vclock = 0.0
        self.rate = 1.0
        self._tags = []

    def remaining(self, inv, now):
        v = self.vclock
        if now > self.last_rate_update:
            v += (now - self.last_rate_update) * self.rate
        rem = inv._tag - v
        return rem if rem > 0.0 else 0.0 if rem > -_tolerance(now) else rem

    def _advance(self, now):
        last = self.last_rate_update
        if now < last:
            self._check_advance(now)
        n = len(self.hosted)
        if n:
            dt = now - last
            self.vclock += dt * self.rate
            self.busy_integral += dt * (n if n < self.cores else self.cores)
        self.last_rate_update = now

    def _add(self, inv, now):
        inv._tag = self.vclock + inv.work
        inv.start = now
        heapq.heappush(self._tags, (inv._tag, inv._order, inv.id))
        return False

    def _remove(self, inv, now):
        tags = self._tags
        if tags[0][2] == inv.id:
            heapq.heappop(tags)
        else:
            # equal-tag ties may depart in either order
            self._tags = [t for t in tags if t[2] != inv.id]
            heapq.heapify(self._tags)

    def _rebalance(self, now):
        n = len(self.hosted)
        if not n:
            self.rate = 1.0
            self.vclock = 0.0
            self.next_departure = None
            return
        self.rate = rate = 1.0 if n <= self.cores else self.cores / n
        tag, _, inv_id = self._tags[0]
        dt = (tag - self.vclock) / rate
        self.next_departure = (now + (dt if dt > 0.0 else 0.0), inv_id)


class FCFSWorker(Worker):
    """First come first served: the oldest ``cores`` invocations run to completion."""

    discipline = FCFS

    def __init__(self, worker_id, cores, slot_capacity=None):
        super().__init__(worker_id, cores, slot_capacity)
        self._running = []
        self.waiting = deque()

    def running_count(self):
        return len(self._running)

    def remaining(self, inv, now):
        if inv.start is None or inv.start > now:
            return inv.work
        rem = inv._tag - now
        return rem if rem > 0.0 else 0.0 if rem > -_tolerance(now) else rem

    def _advance(self, now):
        last = self.last_rate_update
        if now < last:
            self._check_advance(now)
        self.busy_integral += (now - last) * len(self._running)
        self.last_rate_update = now

    def _start(self, inv, now):
        inv.start = now
        # completion time is fixed once started
        inv._tag = now + inv.work
        heapq.heappush(self._running, (inv._tag, inv._order, inv.id))

    def _add(self, inv, now):
        if len(self._running) < self.cores:
            self._start(inv, now)
            return False
        self.waiting.append(inv)
        return True

    def _remove(self, inv, now):
        running = self._running
        if running[0][2] == inv.id:
            heapq.heappop(running)
        else:
            self._running = [t for t in running if t[2] != inv.id]
            heapq.heapify(self._running)
        while self.waiting and len(self._running) < self.cores:
            self._start(self.waiting.popleft(), now)

    def _rebalance(self, now):
        if self._running:
            tag, _, inv_id = self._running[0]
            self.next_departure = (tag, inv_id)
        else:
            self.next_departure = None


class SRPTWorker(Worker):
    """Preemptive shortest remaining processing time with perfect size knowledge.

    The ``cores`` invocations with least remaining work run at rate 1, ties
    by arrival order at the worker. A running invocation stores the
    remaining work it had when it was last (re)started plus that start time,
    so remaining work is folded only when it is preempted.
    """

    discipline = SRPT

    def __init__(self, worker_id, cores, slot_capacity=None):
        super().__init__(worker_id, cores, slot_capacity)
        self._running = set()

    def remaining(self, inv, now):
        if inv.id in self._running:
            rem = inv.remaining_work - (now - inv._since)
            return rem if rem > 0.0 else 0.0 if rem > -_tolerance(now) else rem
        return inv.remaining_work

    def _advance(self, now):
        last = self.last_rate_update
        if now < last:
            self._check_advance(now)
        self.busy_integral += (now - last) * len(self._running)
        self.last_rate_update = now

    def _add(self, inv, now):
        return False

    def _remove(self, inv, now):
        self._running.discard(inv.id)

    def _rebalance(self, now):
        hosted = self.hosted
        if not hosted:
            self.next_departure = None
            return
        running = self._running
        remaining = self.remaining
        keyed = sorted(((remaining(inv, now), inv._order, inv) for inv in hosted.values()),
                       key=lambda k: (k[0], k[1]))
        chosen = keyed[:self.cores]
        keep = {inv.id for _, _, inv in chosen}
        for inv_id in list(running):
            if inv_id not in keep:
                inv = hosted[inv_id]
                inv.remaining_work = remaining(inv, now)
                running.discard(inv_id)
        for rem, _, inv in chosen:
            if inv.id not in running:
                inv.remaining_work = rem
                inv._since = now
                running.add(inv.id)
                if inv.start is None:
                    inv.start = now
        rem0, _, inv0 = chosen[0]
        self.next_departure = (now + (rem0 if rem0 > 0.0 else 0.0), inv0.id)


WORKER_TYPES = {FCFS: FCFSWorker, PS: PSWorker, SRPT: SRPTWorker}


def make_worker(discipline, worker_id, cores, slot_capacity=None):
    try:
        cls = WORKER_TYPES[discipline]
    except KeyError:
        raise ValueError(f"unknown discipline {discipline!r}; expected one of {DISCIPLINES}") from None
    return cls(worker_id, cores, slot_capacity)


def load_of(worker):
    return len(worker.hosted)
