"""Event queue, random streams and samplers shared by the simulator."""

from __future__ import annotations

import heapq
import math
import zlib
from enum import IntEnum

import numpy as np


class SimulationError(RuntimeError):
    """Engine bookkeeping went wrong; the run cannot continue."""


class EventKind(IntEnum):
    ARRIVAL = 0
    DEPARTURE = 1
    CONTAINER_EXPIRY = 2
    SAMPLE_TICK = 3


class Event:
    """A scheduled event. The object doubles as its own cancellation handle."""

    __slots__ = ("time", "seq", "kind", "a", "b", "c", "cancelled")

    def __init__(self, time, seq, kind, a=None, b=None, c=None):
        self.time = time
        self.seq = seq
        self.kind = kind
        self.a = a
        self.b = b
        self.c = c
        self.cancelled = False

    def __repr__(self):
        return f"Event(t={self.time!r}, seq={self.seq}, kind={EventKind(self.kind).name})"


class EventQueue:
    """Binary heap of events ordered by (time, insertion sequence).

    Cancellation is lazy: a cancelled event stays in the heap and is
    skipped when it reaches the top.
    """

    def __init__(self):
        self._heap = []
        self._seq = 0
        self._live = 0
        self.clock = 0.0

    def push(self, time, kind, a=None, b=None, c=None):
        if time < self.clock or time != time:
            raise SimulationError(f"event at t={time!r} is before the clock t={self.clock!r}")
        ev = Event(time, self._seq, kind, a, b, c)
        heapq.heappush(self._heap, (time, self._seq, ev))
        self._seq += 1
        self._live += 1
        return ev

    def cancel(self, ev):
        if not ev.cancelled:
            ev.cancelled = True
            self._live -= 1

    def pop(self):
        """Remove and return the next live event, advancing the clock. None when empty."""
        heap = self._heap
        while heap:
            _, _, ev = heapq.heappop(heap)
            if ev.cancelled:
                continue
            self._live -= 1
            self.clock = ev.time
            # mark consumed so a late cancel() is a no-op
            ev.cancelled = True
            return ev
        return None

    def peek_time(self):
        heap = self._heap
        while heap and heap[0][2].cancelled:
            heapq.heappop(heap)
        return heap[0][0] if heap else None

    def __len__(self):
        return self._live

    def __bool__(self):
        return self._live > 0


# Random streams
#
# Every stream is a numpy Generator over the Philox4x64 counter-based bit
# generator. A stream for a given purpose is keyed by SeedSequence
# entropy (seed, crc32(purpose)), so adding or removing consumers of one
# purpose never shifts the draws seen by another.

_BLOCK = 4096


def stream_key(seed, purpose):
    return [int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(purpose.encode("utf-8"))]


def make_generator(seed, purpose):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(stream_key(seed, purpose))))


class Rng:
    """Buffered scalar draws from one purpose-keyed sub-stream.

    Draws are taken from numpy in fixed-size blocks, so the sequence of
    values depends only on (seed, purpose) and the order of calls.
    """

    def __init__(self, seed, purpose):
        self.seed = seed
        self.purpose = purpose
        self.gen = make_generator(seed, purpose)
        self._u = self._e = self._n = ()
        self._iu = self._ie = self._in = 0

    def random(self):
        if self._iu >= len(self._u):
            self._u = self.gen.random(_BLOCK).tolist()
            self._iu = 0
        x = self._u[self._iu]
        self._iu += 1
        return x

    def std_exponential(self):
        if self._ie >= len(self._e):
            self._e = self.gen.standard_exponential(_BLOCK).tolist()
            self._ie = 0
        x = self._e[self._ie]
        self._ie += 1
        return x

    def std_normal(self):
        if self._in >= len(self._n):
            self._n = self.gen.standard_normal(_BLOCK).tolist()
            self._in = 0
        x = self._n[self._in]
        self._in += 1
        return x

    def below(self, n):
        """Uniform integer in [0, n)."""
        return min(int(self.random() * n), n - 1)


def sample_lognormal(rng, mu, sigma):
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma!r}")
    return math.exp(mu + sigma * rng.std_normal())


def sample_exponential(rng, mean):
    if not mean > 0:
        raise ValueError(f"mean must be positive, got {mean!r}")
    x = mean * rng.std_exponential()
    # standard_exponential can return exactly 0.0
    return x if x > 0.0 else mean * 1e-12
