"""Scheduling policies: binding, load balancing and worker discipline.

Policies are written ``T/LB/S`` (``E/LL/PS``, ``E/H/PS``, ...); late
binding is written ``L``. Balancer codes: R (random), LOC (locality),
LL (least loaded), H (hybrid, the packing/least-loaded scheduler).
"""

from __future__ import annotations

import hashlib
import random
from collections import deque
from dataclasses import dataclass

from .cluster import DISCIPLINES, FCFS, PS, SRPT, Admission

EARLY = "E"
LATE = "L"

RANDOM = "R"
LOCALITY = "LOC"
LEAST_LOADED = "LL"
HYBRID = "H"
BALANCERS = (RANDOM, LOCALITY, LEAST_LOADED, HYBRID)

PACKING = "Packing"
LEAST_LOADED_MODE = "LeastLoaded"


class AllFull(Exception):
    """No worker has a free slot."""


class PolicyError(ValueError):
    pass


@dataclass(frozen=True)
class Policy:
    binding: str = EARLY
    balancer: str = LEAST_LOADED
    discipline: str = PS

    def __post_init__(self):
        if self.binding not in (EARLY, LATE):
            raise PolicyError(f"unknown binding {self.binding!r}")
        if self.balancer not in BALANCERS:
            raise PolicyError(f"unknown balancer {self.balancer!r}")
        if self.discipline not in DISCIPLINES:
            raise PolicyError(f"unknown discipline {self.discipline!r}")

    @property
    def late(self):
        return self.binding == LATE

    @classmethod
    def parse(cls, text):
        """Parse ``"L"``, ``"L/LL/PS"`` or ``"E/LB/S"``."""
        parts = [p.strip().upper() for p in text.strip().split("/")]
        if parts == [LATE]:
            # balancer and discipline are irrelevant under late binding
            return cls(LATE, LEAST_LOADED, FCFS)
        if len(parts) != 3:
            raise PolicyError(f"policy {text!r} is not of the form T/LB/S or L")
        binding, balancer, discipline = parts
        try:
            return cls(binding, balancer, discipline)
        except PolicyError as exc:
            raise PolicyError(f"policy {text!r}: {exc}") from None

    def __str__(self):
        if self.late:
            return LATE
        return f"{self.binding}/{self.balancer}/{self.discipline}"


def stable_hash(*parts):
    data = "/".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


# --- selectors -------------------------------------------------------------
#
# Each selector returns the index into ``workers`` (which is also the
# worker id) or raises AllFull.


def select_random(workers, rng):
    n = len(workers)
    i = rng.below(n)
    w = workers[i]
    if len(w.hosted) < w.slot_capacity:
        return i
    eligible = [j for j, w in enumerate(workers) if len(w.hosted) < w.slot_capacity]
    if not eligible:
        raise AllFull()
    return eligible[rng.below(len(eligible))]


def home_worker(function_id, n_workers):
    return stable_hash("home", function_id) % n_workers


def probe_sequence(function_id, n_workers, seed=0):
    """Home worker followed by every other worker in a seeded pseudo-random order."""
    home = home_worker(function_id, n_workers)
    rest = [i for i in range(n_workers) if i != home]
    random.Random(stable_hash("probe", seed, function_id)).shuffle(rest)
    return [home] + rest


def select_locality(workers, function_id, seed=0, _cache=None):
    n = len(workers)
    home = home_worker(function_id, n)
    w = workers[home]
    if len(w.hosted) < w.slot_capacity:
        return home
    if _cache is not None:
        seq = _cache.get(function_id)
        if seq is None:
            seq = _cache[function_id] = probe_sequence(function_id, n, seed)
    else:
        seq = probe_sequence(function_id, n, seed)
    for i in seq:
        w = workers[i]
        if len(w.hosted) < w.slot_capacity:
            return i
    raise AllFull()


def select_least_loaded(workers, function_id):
    best = -1
    best_load = 0
    best_warm = False
    for i, w in enumerate(workers):
        load = len(w.hosted)
        if load >= w.slot_capacity:
            continue
        if best < 0 or load < best_load:
            best, best_load = i, load
            best_warm = bool(w.warm_pool.get(function_id))
        elif load == best_load and not best_warm and w.warm_pool.get(function_id):
            best, best_warm = i, True
    if best < 0:
        raise AllFull()
    return best


def hybrid_mode(workers):
    for w in workers:
        if len(w.hosted) < w.cores:
            return PACKING
    return LEAST_LOADED_MODE


def select_hybrid(workers, function_id, order=None):
    """Core-aware packing while some worker has an idle core, else least loaded.

    Packing ranks: (1) non-empty, idle core, warm container; (2) non-empty,
    idle core; (3) empty with warm container; (4) empty. Within a rank the
    first worker in ``order`` (default: by id) wins.
    """
    rank2 = rank3 = rank4 = -1
    packing = False
    for i in (order if order is not None else range(len(workers))):
        w = workers[i]
        load = len(w.hosted)
        if load >= w.cores or load >= w.slot_capacity:
            continue
        packing = True
        warm = w.warm_pool.get(function_id)
        if load:
            if warm:
                return i
            if rank2 < 0:
                rank2 = i
        elif warm:
            if rank3 < 0:
                rank3 = i
        elif rank4 < 0:
            rank4 = i
    if packing:
        return rank2 if rank2 >= 0 else rank3 if rank3 >= 0 else rank4
    return select_least_loaded(workers, function_id)


def oracle_remaining(invocation):
    """Perfect-knowledge remaining work, as used by SRPT."""
    return invocation.remaining_work


# --- controller --------------------------------------------------------------


class Controller:
    """Assigns invocations to workers according to a Policy.

    ``on_decision`` (optional) is called as ``on_decision(workers, inv, index)``
    right before an early-binding admission, with the cluster state the
    decision was made on.
    """

    def __init__(self, policy, workers, rng=None, seed=0, hybrid_order="id", on_decision=None,
                 overflow="reject"):
        if overflow not in ("reject", "queue"):
            raise PolicyError(f"unknown overflow mode {overflow!r}")
        self.policy = policy
        self.overflow = overflow
        self.workers = workers
        self.rng = rng
        self.seed = seed
        self.queue = deque()
        self.on_decision = on_decision
        self._probe_cache = {}
        self._order = None
        if hybrid_order == "shuffled":
            self._order = list(range(len(workers)))
            random.Random(stable_hash("hybrid-order", seed)).shuffle(self._order)
        elif hybrid_order != "id":
            raise PolicyError(f"unknown hybrid_order {hybrid_order!r}")
        self.free_cores = sum(w.cores for w in workers) if policy.late else 0

    def select(self, inv):
        workers = self.workers
        balancer = self.policy.balancer
        if balancer == LEAST_LOADED:
            return select_least_loaded(workers, inv.function_id)
        if balancer == HYBRID:
            return select_hybrid(workers, inv.function_id, self._order)
        if balancer == LOCALITY:
            return select_locality(workers, inv.function_id, self.seed, self._probe_cache)
        return select_random(workers, self.rng)

    def dispatch_early(self, inv, now, penalty=0.0):
        """Place ``inv`` on a worker now. Returns (worker, Admission) or (None, REJECTED)."""
        try:
            i = self.select(inv)
        except AllFull:
            return None, Admission.REJECTED
        if self.on_decision is not None:
            self.on_decision(self.workers, inv, i)
        w = self.workers[i]
        inv.dispatch = now
        return w, w.admit(inv, now, penalty)

    def drain_overflow(self, now, penalty_of):
        """Early binding with overflow="queue": place held invocations while slots free up."""
        touched = []
        queue = self.queue
        while queue:
            inv = queue[0]
            try:
                i = self.select(inv)
            except AllFull:
                break
            queue.popleft()
            if self.on_decision is not None:
                self.on_decision(self.workers, inv, i)
            w = self.workers[i]
            inv.dispatch = now
            w.admit(inv, now, penalty_of(inv.function_id))
            touched.append(w)
        return touched

    def pick_free_core(self, function_id):
        """Lowest-id worker with an idle core, preferring one with a warm container."""
        first = -1
        for i, w in enumerate(self.workers):
            if len(w.hosted) < w.cores:
                if w.warm_pool.get(function_id):
                    return i
                if first < 0:
                    first = i
        return first

    def dispatch_late(self, now, penalty_of=None):
        """Start queued invocations on free cores, head of the queue first.

        Returns the list of workers that received an invocation.
        """
        touched = []
        queue = self.queue
        while queue and self.free_cores > 0:
            inv = queue.popleft()
            i = self.pick_free_core(inv.function_id)
            w = self.workers[i]
            inv.dispatch = now
            w.admit(inv, now, penalty_of(inv.function_id) if penalty_of else 0.0)
            self.free_cores -= 1
            touched.append(w)
        return touched

    def core_released(self):
        self.free_cores += 1
