"""The discrete-event loop tying workload, controller and workers together."""

from __future__ import annotations

import math
from array import array

import numpy as np

from .cluster import FCFS, FunctionProfile, make_worker
from .metrics import SimReport
from .policies import Controller, Policy
from .simcore import EventKind, EventQueue, Rng, SimulationError

ARRIVAL = EventKind.ARRIVAL
DEPARTURE = EventKind.DEPARTURE
EXPIRY = EventKind.CONTAINER_EXPIRY
TICK = EventKind.SAMPLE_TICK


class Simulation:
    """One simulated cluster running one policy over one invocation stream.

    ``workload`` is any iterable of Invocation objects in non-decreasing
    arrival order. Cold-start penalty and keep-alive come from
    ``profiles`` (function_id -> FunctionProfile) falling back to
    ``default_profile``.
    """

    def __init__(self, policy, n_workers, cores, workload=(), slot_capacity=None, seed=0,
                 profiles=None, default_profile=None, warmup_fraction=0.1, util_window=1.0,
                 hybrid_order="id", on_decision=None, overflow="reject",
                 stall_limit=1_000_000):
        if isinstance(policy, str):
            policy = Policy.parse(policy)
        if n_workers < 1:
            raise ValueError("n_workers must be >= 1")
        if not 0 <= warmup_fraction < 1:
            raise ValueError("warmup_fraction must be in [0, 1)")
        self.policy = policy
        self.seed = seed
        discipline = FCFS if policy.late else policy.discipline
        self.workers = [make_worker(discipline, i, cores, slot_capacity) for i in range(n_workers)]
        self.controller = Controller(policy, self.workers, rng=Rng(seed, "balancer"), seed=seed,
                                     hybrid_order=hybrid_order, on_decision=on_decision,
                                     overflow=overflow)
        self.workload = workload
        self.profiles = dict(profiles or {})
        self.default_profile = default_profile or FunctionProfile(-1)
        self.warmup_fraction = warmup_fraction
        self.util_window = util_window
        self.stall_limit = stall_limit
        self.queue = EventQueue()
        self.arrivals = 0
        self.rejections = 0
        self._cols = {k: array(t) for k, t in (
            ("id", "q"), ("function_id", "q"), ("arrival", "d"), ("dispatch", "d"),
            ("start", "d"), ("completion", "d"), ("service_demand", "d"),
            ("cold_start", "b"), ("worker_id", "q"))}
        self._busy = 0
        self._nonempty = 0
        self._mask = 0
        self._wint = 0.0
        self._wlast = 0.0
        self._widx = 0
        self._wend = util_window if util_window else math.inf
        self._util_cores = array("d")
        self._util_masks = []
        self._ran = False

    # ------------------------------------------------------------------

    def _profile(self, function_id):
        return self.profiles.get(function_id, self.default_profile)

    def _penalty(self, function_id):
        return self._profile(function_id).cold_start_penalty

    def _util_to(self, t):
        w = self.util_window
        while t >= self._wend:
            self._wint += self._busy * (self._wend - self._wlast)
            self._util_cores.append(self._wint / w)
            self._util_masks.append(self._mask)
            self._wint = 0.0
            self._wlast = self._wend
            self._widx += 1
            self._wend = (self._widx + 1) * w
            self._mask = self._nonempty
        self._wint += self._busy * (t - self._wlast)
        self._wlast = t

    def _reschedule(self, w):
        nd = w.next_departure
        pe = w.pending_event
        if pe is not None:
            if nd is not None and pe.time == nd[0] and pe.b == nd[1]:
                return
            self.queue.cancel(pe)
        if nd is None:
            w.pending_event = None
        else:
            w.pending_event = self.queue.push(nd[0], DEPARTURE, w.worker_id, nd[1])

    def _record(self, inv):
        c = self._cols
        c["id"].append(inv.id)
        c["function_id"].append(inv.function_id)
        c["arrival"].append(inv.arrival)
        c["dispatch"].append(inv.dispatch)
        c["start"].append(inv.start)
        c["completion"].append(inv.completion)
        c["service_demand"].append(inv.service_demand)
        c["cold_start"].append(1 if inv.cold_start else 0)
        c["worker_id"].append(inv.worker_id)

    # ------------------------------------------------------------------

    def run(self, max_time=None, max_completions=None):
        """Process events until the first given limit is hit or events run out."""
        if self._ran:
            raise SimulationError("a Simulation can only be run once")
        self._ran = True
        q = self.queue
        workers = self.workers
        controller = self.controller
        late = self.policy.late
        cols = self._cols
        completions_col = cols["id"]
        track_util = bool(self.util_window)
        util_to = self._util_to
        reschedule = self._reschedule
        profiles = self.profiles
        default_profile = self.default_profile
        max_done = math.inf if max_completions is None else max_completions
        drain_only = max_time is None

        source = iter(self.workload)
        nxt = next(source, None)
        if nxt is not None:
            q.push(nxt.arrival, ARRIVAL, nxt)
        if max_time is not None:
            q.push(max_time, TICK, "stop")

        stop_reason = "drained"
        last_t = -1.0
        same_t = 0
        while True:
            ev = q.pop()
            if ev is None:
                break
            now = ev.time
            if now == last_t:
                same_t += 1
                if same_t > self.stall_limit:
                    raise SimulationError(f"clock stalled at t={now!r} with {len(q)} pending events")
            else:
                last_t = now
                same_t = 0
            kind = ev.kind

            if kind == DEPARTURE:
                w = workers[ev.a]
                w.pending_event = None
                if track_util:
                    util_to(now)
                inv, cid = w.release(ev.b, now)
                n1 = len(w.hosted)
                if n1 < w.cores:
                    self._busy -= 1
                if n1 == 0:
                    self._nonempty &= ~(1 << w.worker_id)
                    if track_util and now == self._widx * self.util_window:
                        # windows are half-open: emptied exactly at the start means unused
                        self._mask &= ~(1 << w.worker_id)
                self._record(inv)
                prof = profiles.get(inv.function_id, default_profile)
                if prof.keep_alive != math.inf:
                    q.push(now + prof.keep_alive, EXPIRY, w.worker_id, inv.function_id, cid)
                reschedule(w)
                if late:
                    controller.core_released()
                    if controller.queue:
                        for tw in controller.dispatch_late(now, self._penalty):
                            self._busy += 1
                            bit = 1 << tw.worker_id
                            self._nonempty |= bit
                            self._mask |= bit
                            reschedule(tw)
                elif controller.queue:
                    for tw in controller.drain_overflow(now, self._penalty):
                        if len(tw.hosted) <= tw.cores:
                            self._busy += 1
                        bit = 1 << tw.worker_id
                        self._nonempty |= bit
                        self._mask |= bit
                        reschedule(tw)
                if len(completions_col) >= max_done:
                    stop_reason = "max_completions"
                    break

            elif kind == ARRIVAL:
                inv = ev.a
                self.arrivals += 1
                if track_util:
                    util_to(now)
                if late:
                    controller.queue.append(inv)
                    for tw in controller.dispatch_late(now, self._penalty):
                        self._busy += 1
                        bit = 1 << tw.worker_id
                        self._nonempty |= bit
                        self._mask |= bit
                        reschedule(tw)
                else:
                    prof = profiles.get(inv.function_id, default_profile)
                    if controller.queue:
                        # held invocations are not overtaken
                        controller.queue.append(inv)
                        w = None
                    else:
                        w, _ = controller.dispatch_early(inv, now, prof.cold_start_penalty)
                        if w is None:
                            if controller.overflow == "queue":
                                controller.queue.append(inv)
                            else:
                                self.rejections += 1
                    if w is not None:
                        n1 = len(w.hosted)
                        if n1 <= w.cores:
                            self._busy += 1
                        bit = 1 << w.worker_id
                        self._nonempty |= bit
                        self._mask |= bit
                        reschedule(w)
                nxt = next(source, None)
                if nxt is not None:
                    if nxt.arrival < now:
                        raise SimulationError(
                            f"workload out of order: invocation {nxt.id} at {nxt.arrival!r} < {now!r}")
                    q.push(nxt.arrival, ARRIVAL, nxt)

            elif kind == EXPIRY:
                workers[ev.a].expire(ev.b, ev.c)
                continue

            else:
                stop_reason = "max_time"
                break

            if (drain_only and nxt is None and not controller.queue
                    and self.arrivals == len(completions_col) + self.rejections):
                # workload exhausted and nothing in flight; pending expiries do not matter
                break

        end_time = q.clock
        if track_util:
            util_to(end_time)
        self.end_time = end_time
        self.stop_reason = stop_reason
        return self._report()

    def _report(self):
        c = self._cols
        columns = {
            "id": np.frombuffer(c["id"], dtype=np.int64).copy(),
            "function_id": np.frombuffer(c["function_id"], dtype=np.int64).copy(),
            "arrival": np.frombuffer(c["arrival"], dtype=np.float64).copy(),
            "dispatch": np.frombuffer(c["dispatch"], dtype=np.float64).copy(),
            "start": np.frombuffer(c["start"], dtype=np.float64).copy(),
            "completion": np.frombuffer(c["completion"], dtype=np.float64).copy(),
            "service_demand": np.frombuffer(c["service_demand"], dtype=np.float64).copy(),
            "cold_start": np.frombuffer(c["cold_start"], dtype=np.int8).astype(bool),
            "worker_id": np.frombuffer(c["worker_id"], dtype=np.int64).copy(),
        }
        done = columns["id"].size
        w0 = self.workers[0]
        return SimReport(
            columns=columns,
            arrivals=self.arrivals,
            rejections=self.rejections,
            in_flight=self.arrivals - done - self.rejections,
            end_time=self.end_time,
            warmup_cutoff=self.warmup_fraction * self.end_time,
            util_window=self.util_window or 0.0,
            util_cores=np.frombuffer(self._util_cores, dtype=np.float64).copy(),
            util_masks=list(self._util_masks),
            metadata={
                "policy": str(self.policy),
                "seed": self.seed,
                "n_workers": len(self.workers),
                "cores": w0.cores,
                "slot_capacity": w0.slot_capacity,
                "warmup_fraction": self.warmup_fraction,
                "end_time": self.end_time,
                "stop_reason": self.stop_reason,
            },
        )


def simulate(policy, n_workers, cores, workload, max_time=None, max_completions=None, **kwargs):
    """Build and run a Simulation in one call."""
    return Simulation(policy, n_workers, cores, workload, **kwargs).run(
        max_time=max_time, max_completions=max_completions)
