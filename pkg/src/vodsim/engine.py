"""Deterministic discrete-event simulation of the transcoding pipeline.

Events: stream arrivals, GOP completions on VMs, charging-cycle boundaries,
merger timeouts, and periodic provisioning ticks. A run processes every
admitted GOP to delivery (missed deadlines still complete), accrues cost per
started charging cycle, and reports QoS and cost metrics.
"""

from __future__ import annotations

import heapq
import random
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum

from .admission import AdmissionControl, UtilityParams
from .errors import ConfigError
from .provisioner import (
    AllocationInputs,
    DeallocationInputs,
    DmrTracker,
    ProvisionerParams,
    QosBand,
    VmSnapshot,
    allocation_policy,
    deallocation_policy,
    gop_type,
    remedial_policy,
)
from .scheduler import Heuristic, VmQueueState, map_gops
from .workload import (
    EXEC_TIME_FLOOR,
    EtcMatrix,
    GopId,
    GopTask,
    VideoStream,
    VmCatalog,
)

# Remedial allocations are checked at most this often (simulated seconds).
REMEDIAL_MIN_INTERVAL = 1.0


class EventKind(IntEnum):
    """Tie order for simultaneous events is the enum order."""

    CYCLE_BOUNDARY = 0
    GOP_COMPLETION = 1
    STREAM_ARRIVAL = 2
    MERGER_TIMEOUT = 3
    PROVISIONING_TICK = 4


@dataclass(frozen=True, slots=True)
class StaticProvisioning:
    """Fixed cluster allocated at time zero, held until the run ends."""

    counts: dict[str, int]


@dataclass(frozen=True, slots=True)
class DynamicProvisioning:
    """Self-configuring cluster; starts from `initial` (one of each type
    when omitted)."""

    initial: dict[str, int] | None = None


ProvisioningMode = StaticProvisioning | DynamicProvisioning


@dataclass(slots=True)
class SimParams:
    qos: QosBand = field(default_factory=QosBand)
    provisioner: ProvisionerParams = field(default_factory=ProvisionerParams)
    utility: UtilityParams = field(default_factory=UtilityParams)
    cycle_seconds: float = 3600.0
    merger_grace_factor: float = 3.0
    startup_allowance: float = 10.0
    failure_prob: float = 0.0
    remedial_enabled: bool = True
    record_releases: bool = False

    def validate(self) -> None:
        if self.cycle_seconds <= 0:
            raise ConfigError("cycle_seconds must be > 0")
        if self.merger_grace_factor <= 0:
            raise ConfigError("merger_grace_factor must be > 0")
        if self.startup_allowance < 0:
            raise ConfigError("startup_allowance must be >= 0")
        if not (0.0 <= self.failure_prob < 1.0):
            raise ConfigError("failure_prob must be in [0, 1)")


@dataclass(slots=True)
class VmInstance:
    """A live VM: scheduling queue plus charging-cycle accounting."""

    vm_id: int
    type_id: str
    hourly_cost: float
    allocated_at: float
    cycle_seconds: float
    queue: VmQueueState
    cycles_paid: int = 1
    marked_for_deallocation: bool = False
    terminated: bool = False
    terminated_at: float | None = None
    next_boundary: float = 0.0
    exec_start: float | None = None
    busy_segments: deque = field(default_factory=deque)

    def utilization(self, now: float, window: float) -> float:
        """Busy fraction of the trailing window."""
        lo = now - window
        segs = self.busy_segments
        while segs and segs[0][1] < lo:
            segs.popleft()
        busy = 0.0
        for start, end in segs:
            busy += max(0.0, min(end, now) - max(start, lo))
        if self.exec_start is not None:
            busy += max(0.0, now - max(self.exec_start, lo))
        return min(1.0, busy / window)


@dataclass(slots=True)
class MetricsReport:
    """Everything a run measures."""

    seed: int
    admitted_gops: int
    delivered_gops: int
    startup_delays: dict[str, float]
    avg_startup_delay: float
    deadline_miss_rate: float
    deadline_misses: int
    per_index_completion: list[float | None]
    total_cost: float
    vm_timeline: list[tuple[float, int, str, str]]
    vm_final: list[dict]
    resubmissions: int
    escalations: int
    makespan: float
    end_time: float
    peak_vms: int
    releases: list[tuple[float, str, int]] | None = None

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "admitted_gops": self.admitted_gops,
            "delivered_gops": self.delivered_gops,
            "startup_delays": dict(sorted(self.startup_delays.items())),
            "avg_startup_delay": self.avg_startup_delay,
            "deadline_miss_rate": self.deadline_miss_rate,
            "deadline_misses": self.deadline_misses,
            "per_index_completion": self.per_index_completion,
            "total_cost": self.total_cost,
            "vm_timeline": [list(entry) for entry in self.vm_timeline],
            "vm_final": self.vm_final,
            "resubmissions": self.resubmissions,
            "escalations": self.escalations,
            "makespan": self.makespan,
            "end_time": self.end_time,
            "peak_vms": self.peak_vms,
        }


EARLY_GOP_INDICES = 20


class _Simulation:
    def __init__(
        self,
        streams: list[VideoStream],
        etc: EtcMatrix,
        catalog: VmCatalog,
        heuristic: Heuristic,
        mode: ProvisioningMode,
        params: SimParams,
        seed: int,
    ):
        params.validate()
        etc.validate_complete(streams, catalog)
        self.streams = sorted(streams,
                              key=lambda s: (s.request_arrival_time, s.stream_id))
        self.etc = etc
        self.catalog = catalog
        self.heuristic = heuristic
        self.mode = mode
        self.params = params
        self.seed = seed
        self.rng = random.Random(seed)
        self.dynamic = isinstance(mode, DynamicProvisioning)

        if isinstance(mode, StaticProvisioning):
            if sum(mode.counts.values()) <= 0:
                raise ConfigError("static provisioning needs at least one VM")
            for tid in mode.counts:
                catalog.get(tid)
        if self.dynamic and params.remedial_enabled:
            catalog.get(params.provisioner.remedial_type)

        self.now = 0.0
        self.heap: list = []
        self._seq = 0
        self.admission = AdmissionControl(params.utility)
        self.tracker = DmrTracker(params.provisioner.period)
        self.streams_by_id = {s.stream_id: s for s in self.streams}
        self.total_gops = sum(len(s.gops) for s in self.streams)
        self.delivered_count = 0
        self.arrivals_left = len(self.streams)

        self.vms: dict[int, VmInstance] = {}
        self.live: dict[int, VmInstance] = {}
        self._next_vm_id = 0
        self.timeline: list[tuple[float, int, str, str]] = []
        self.peak_vms = 0

        self.psi: dict[str, float] = {}
        self.startup_delays: dict[str, float] = {}
        self.merger_head: dict[str, int] = {}
        self.merger_buffer: dict[str, set[int]] = {}
        self.releases: list[tuple[float, str, int]] | None = (
            [] if params.record_releases else None
        )

        self.gop_types: dict[GopId, str] = {}
        self.pending_type_counts: dict[str, int] = {
            t: 0 for t in catalog.type_ids()
        }
        self.dispatched_per_stream: dict[str, int] = {}
        self.unserved: set[str] = set()

        # Power score per type: mean estimate over the whole workload
        # (higher = slower = less powerful).
        sums = {t: 0.0 for t in catalog.type_ids()}
        for (sid, idx, tid), est in etc.items():
            sums[tid] += est.mean
        n_entries = max(1, self.total_gops)
        self.power_score = {t: sums[t] / n_entries for t in sums}

        self.deadline_misses = 0
        self.resubmissions = 0
        self.escalations = 0
        self._idx_sums = [0.0] * EARLY_GOP_INDICES
        self._idx_counts = [0] * EARLY_GOP_INDICES
        self.makespan = 0.0
        self._last_remedial = -REMEDIAL_MIN_INTERVAL

    # -- event plumbing ----------------------------------------------------

    def _push(self, time: float, kind: EventKind, payload) -> None:
        self._seq += 1
        heapq.heappush(self.heap, (time, kind.value, self._seq, payload))

    def _workload_done(self) -> bool:
        return self.arrivals_left == 0 and self.delivered_count == self.total_gops

    # -- cluster management ------------------------------------------------

    def _allocate(self, type_id: str, count: int) -> list[VmInstance]:
        vm_type = self.catalog.get(type_id)
        created = []
        for _ in range(count):
            vm_id = self._next_vm_id
            self._next_vm_id += 1
            vm = VmInstance(
                vm_id=vm_id,
                type_id=type_id,
                hourly_cost=vm_type.hourly_cost,
                allocated_at=self.now,
                cycle_seconds=self.params.cycle_seconds,
                queue=VmQueueState(vm_id=vm_id, type_id=type_id,
                                   hourly_cost=vm_type.hourly_cost),
                next_boundary=self.now + self.params.cycle_seconds,
            )
            self.vms[vm_id] = vm
            self.live[vm_id] = vm
            self._push(vm.next_boundary, EventKind.CYCLE_BOUNDARY, vm_id)
            self.timeline.append((self.now, vm_id, type_id, "allocated"))
            created.append(vm)
        self.peak_vms = max(self.peak_vms, len(self.live))
        return created

    def _terminate(self, vm: VmInstance) -> None:
        vm.terminated = True
        vm.terminated_at = self.now
        del self.live[vm.vm_id]
        self.timeline.append((self.now, vm.vm_id, vm.type_id, "terminated"))

    def schedule_guard_for_marked_vm(self, vm: VmInstance, gop: GopTask,
                                     estimated_completion: float) -> bool:
        """A marked VM accepts a GOP only if everything already queued plus
        the GOP finishes before the VM's cycle ends."""
        if not vm.marked_for_deallocation:
            return True
        return estimated_completion <= vm.next_boundary

    # -- scheduling --------------------------------------------------------

    def _deadline_of(self, gop: GopTask) -> float:
        psi = self.psi.get(gop.stream_id)
        if psi is None:
            psi = (self.streams_by_id[gop.stream_id].request_arrival_time
                   + self.params.startup_allowance)
        return gop.relative_deadline + psi

    def _grace(self, gop: GopTask) -> float:
        total = 0.0
        for tid in self.catalog.type_ids():
            total += self.etc.get(gop.stream_id, gop.index, tid).mean
        return self.params.merger_grace_factor * total / len(self.catalog)

    def _admit_hook(self, gop: GopTask, vm_state: VmQueueState,
                    est: float) -> bool:
        return self.schedule_guard_for_marked_vm(
            self.vms[vm_state.vm_id], gop, est)

    def _start_next(self, vm: VmInstance) -> None:
        item = vm.queue.pop_next()
        if item is None:
            return
        gop, worst = item
        est = self.etc.get(gop.stream_id, gop.index, vm.type_id)
        if est.std_dev == 0.0:
            actual = est.mean
        else:
            actual = max(EXEC_TIME_FLOOR, self.rng.gauss(est.mean, est.std_dev))
        vm.queue.executing = (gop, self.now + worst)
        vm.exec_start = self.now
        self._push(self.now + actual, EventKind.GOP_COMPLETION, vm.vm_id)

    def _run_mapping(self) -> None:
        # Dispatching a stream's head promotes its next GOP to the virtual
        # queue, so refresh and remap until nothing more can be placed.
        dispatched_any = False
        while True:
            vm_states = [vm.queue for vm in self.live.values()]
            if not any(s.free_slots() > 0 for s in vm_states):
                break
            vq = self.admission.refresh_virtual_queue()
            if not vq.entries:
                break
            any_marked = any(vm.marked_for_deallocation
                             for vm in self.live.values())
            admit = self._admit_hook if any_marked else None
            assignments = map_gops(self.heuristic, vq, vm_states, self.now,
                                   self.etc, self._deadline_of, admit)
            if not assignments:
                break
            dispatched_any = True
            for a in assignments:
                gop = a.gop
                self.admission.mark_dispatched(gop)
                self.pending_type_counts[self.gop_types[gop.gop_id]] -= 1
                sid = gop.stream_id
                self.dispatched_per_stream[sid] += 1
                self.unserved.discard(sid)
        if dispatched_any:
            for vm in self.live.values():
                if vm.queue.executing is None and vm.queue.local_queue:
                    self._start_next(vm)

    def _maybe_remedial(self) -> bool:
        if (not self.dynamic or not self.params.remedial_enabled
                or self._workload_done()):
            return False
        if self.now - self._last_remedial < REMEDIAL_MIN_INTERVAL:
            return False
        self._last_remedial = self.now
        n = remedial_policy(len(self.unserved), self.params.provisioner,
                            self.params.qos)
        if n <= 0:
            return False
        self._allocate(self.params.provisioner.remedial_type, n)
        return True

    def _schedule_pass(self) -> None:
        self._run_mapping()
        if self._maybe_remedial():
            self._run_mapping()

    # -- event handlers ----------------------------------------------------

    def _on_stream_arrival(self, stream_idx: int) -> None:
        stream = self.streams[stream_idx]
        self.arrivals_left -= 1
        self.admission.admit_stream(stream, self.now)
        self.tracker.record_arrival(self.now)
        sid = stream.stream_id
        self.dispatched_per_stream[sid] = 0
        if not stream.gops:
            return
        k = self.params.provisioner.k_suit
        for gop in stream.gops:
            gtype = gop_type(gop, self.etc, self.catalog, k)
            self.gop_types[gop.gop_id] = gtype
            self.pending_type_counts[gtype] += 1
        self.unserved.add(sid)
        self.merger_head[sid] = 0
        self.merger_buffer[sid] = set()
        head = stream.gops[0]
        fire_at = max(self.now, self._deadline_of(head) + self._grace(head))
        self._push(fire_at, EventKind.MERGER_TIMEOUT, (sid, 0))
        self._schedule_pass()

    def _on_gop_completion(self, vm_id: int) -> None:
        vm = self.vms[vm_id]
        gop, _ = vm.queue.executing
        vm.queue.executing = None
        vm.busy_segments.append((vm.exec_start, self.now))
        vm.exec_start = None

        lost = (self.params.failure_prob > 0.0
                and self.rng.random() < self.params.failure_prob)
        gid = gop.gop_id
        if not lost and gid not in self.admission.delivered:
            self._deliver(gop)
        elif lost and gid not in self.admission.delivered:
            # Result vanished; the merger watchdog will resubmit.
            sid = gop.stream_id
            if self.merger_head.get(sid) == gop.index:
                self._push(self.now + self._grace(gop),
                           EventKind.MERGER_TIMEOUT, (sid, gop.index))

        self._start_next(vm)
        self._schedule_pass()

    def _deliver(self, gop: GopTask) -> None:
        sid = gop.stream_id
        gid = gop.gop_id
        psi = self.psi.get(sid)
        missed = psi is not None and self.now > psi + gop.relative_deadline
        if missed:
            self.deadline_misses += 1
        self.tracker.record_completion(self.now, missed, self.gop_types[gid])

        self.admission.mark_delivered(gid)
        self.delivered_count += 1
        self.makespan = self.now

        if gop.index == 0 and psi is None:
            self.psi[sid] = self.now
            stream = self.streams_by_id[sid]
            self.startup_delays[sid] = self.now - stream.request_arrival_time

        if gop.index < EARLY_GOP_INDICES:
            stream = self.streams_by_id[sid]
            self._idx_sums[gop.index] += self.now - stream.request_arrival_time
            self._idx_counts[gop.index] += 1

        # Merger output window: release in index order, then arm the
        # watchdog for the next undelivered head.
        buffer = self.merger_buffer[sid]
        buffer.add(gop.index)
        head = self.merger_head[sid]
        advanced = False
        while head in buffer:
            buffer.discard(head)
            if self.releases is not None:
                self.releases.append((self.now, sid, head))
            head += 1
            advanced = True
        if advanced:
            self.merger_head[sid] = head
            stream = self.streams_by_id[sid]
            if head < len(stream.gops):
                nxt = stream.gops[head]
                if nxt.gop_id not in self.admission.delivered:
                    fire_at = max(self.now,
                                  self._deadline_of(nxt) + self._grace(nxt))
                    self._push(fire_at, EventKind.MERGER_TIMEOUT, (sid, head))

    def _on_merger_timeout(self, payload: tuple[str, int]) -> None:
        sid, index = payload
        gid = (sid, index)
        if gid in self.admission.delivered:
            return
        if self.merger_head.get(sid) != index:
            return
        if self.admission.is_pending(gid):
            self.admission.escalate_pending(gid)
            self.escalations += 1
        else:
            # Dispatched but stuck or lost: hand a fresh copy to the
            # scheduler. Losses re-arm the watchdog at the failure itself.
            self.admission.resubmit(gid)
            self.pending_type_counts[self.gop_types[gid]] += 1
            self.resubmissions += 1
        self._schedule_pass()

    def _on_cycle_boundary(self, vm_id: int) -> None:
        vm = self.vms[vm_id]
        if vm.terminated:
            return
        idle = vm.queue.is_idle()
        done = self._workload_done()
        if idle and (vm.marked_for_deallocation or (self.dynamic and done)):
            self._terminate(vm)
        else:
            vm.cycles_paid += 1
            vm.next_boundary = self.now + vm.cycle_seconds
            self._push(vm.next_boundary, EventKind.CYCLE_BOUNDARY, vm_id)
        if self.dynamic and not done:
            self._run_deallocation()

    def _on_provisioning_tick(self) -> None:
        if self._workload_done():
            return
        window = self.params.provisioner.period
        gamma = self.tracker.gamma(self.now)
        if gamma >= self.params.qos.beta:
            total_pending = sum(self.pending_type_counts.values())
            phi = {}
            if total_pending > 0:
                phi = {t: c / total_pending
                       for t, c in self.pending_type_counts.items()}
            rho_min: dict[str, float] = {}
            for vm in self.live.values():
                u = vm.utilization(self.now, window)
                prev = rho_min.get(vm.type_id)
                if prev is None or u < prev:
                    rho_min[vm.type_id] = u
            inputs = AllocationInputs(
                gamma_t=gamma,
                arrival_rate=self.tracker.arrival_rate(self.now),
                sigma=self.tracker.miss_shares(self.now),
                phi=phi,
                rho_min=rho_min,
            )
            allocations = allocation_policy(inputs, self.params.provisioner,
                                            self.params.qos, self.catalog)
            for type_id, count in allocations:
                self._allocate(type_id, count)
            if allocations:
                self._schedule_pass()
        else:
            self._run_deallocation()
        self._push(self.now + window, EventKind.PROVISIONING_TICK, None)

    def _run_deallocation(self) -> None:
        window = self.params.provisioner.period
        unmarked = [vm for vm in self.live.values()
                    if not vm.marked_for_deallocation]
        # Keep-alive floor: an empty cluster would never complete anything,
        # pinning the miss rate at zero and deadlocking the allocator.
        if len(unmarked) <= 1 and not self._workload_done():
            return
        snapshots = [
            VmSnapshot(
                vm_id=vm.vm_id,
                type_id=vm.type_id,
                utilization=vm.utilization(self.now, window),
                power_score=self.power_score[vm.type_id],
                remaining_cycle=vm.next_boundary - self.now,
                marked=vm.marked_for_deallocation,
            )
            for vm in self.live.values()
        ]
        state = DeallocationInputs(gamma_t=self.tracker.gamma(self.now),
                                   vms=snapshots)
        victim = deallocation_policy(state, self.params.provisioner,
                                     self.params.qos, len(self.catalog))
        if victim is not None:
            vm = self.vms[victim]
            vm.marked_for_deallocation = True
            self.timeline.append((self.now, vm.vm_id, vm.type_id, "marked"))

    # -- main loop ----------------------------------------------------------

    def run(self) -> MetricsReport:
        if isinstance(self.mode, StaticProvisioning):
            for type_id, count in self.mode.counts.items():
                if count > 0:
                    self._allocate(type_id, count)
        else:
            initial = self.mode.initial
            if initial is None:
                initial = {t: 1 for t in self.catalog.type_ids()}
            for type_id, count in initial.items():
                if count > 0:
                    self._allocate(type_id, count)
            self._push(self.params.provisioner.period,
                       EventKind.PROVISIONING_TICK, None)

        for i, _ in enumerate(self.streams):
            self._push(self.streams[i].request_arrival_time,
                       EventKind.STREAM_ARRIVAL, i)

        while self.heap:
            time, kind, _, payload = heapq.heappop(self.heap)
            self.now = time
            kind = EventKind(kind)
            if kind is EventKind.CYCLE_BOUNDARY:
                self._on_cycle_boundary(payload)
            elif kind is EventKind.GOP_COMPLETION:
                self._on_gop_completion(payload)
            elif kind is EventKind.STREAM_ARRIVAL:
                self._on_stream_arrival(payload)
            elif kind is EventKind.MERGER_TIMEOUT:
                self._on_merger_timeout(payload)
            else:
                self._on_provisioning_tick()

            if self._workload_done():
                if not self.dynamic:
                    for vm in list(self.live.values()):
                        self._terminate(vm)
                    break
                if not self.live:
                    break

        return self._report()

    def _report(self) -> MetricsReport:
        total_cost = sum(vm.cycles_paid * vm.hourly_cost
                         for vm in self.vms.values())
        delays = list(self.startup_delays.values())
        avg_delay = sum(delays) / len(delays) if delays else 0.0
        miss_rate = (self.deadline_misses / self.delivered_count
                     if self.delivered_count else 0.0)
        per_index = [
            (self._idx_sums[i] / self._idx_counts[i]
             if self._idx_counts[i] else None)
            for i in range(EARLY_GOP_INDICES)
        ]
        vm_final = [
            {
                "vm_id": vm.vm_id,
                "type_id": vm.type_id,
                "allocated_at": vm.allocated_at,
                "terminated_at": vm.terminated_at,
                "cycles_paid": vm.cycles_paid,
                "hourly_cost": vm.hourly_cost,
            }
            for vm in self.vms.values()
        ]
        return MetricsReport(
            seed=self.seed,
            admitted_gops=len(self.admission.admitted),
            delivered_gops=self.delivered_count,
            startup_delays=self.startup_delays,
            avg_startup_delay=avg_delay,
            deadline_miss_rate=miss_rate,
            deadline_misses=self.deadline_misses,
            per_index_completion=per_index,
            total_cost=total_cost,
            vm_timeline=self.timeline,
            vm_final=vm_final,
            resubmissions=self.resubmissions,
            escalations=self.escalations,
            makespan=self.makespan,
            end_time=self.now,
            peak_vms=self.peak_vms,
            releases=self.releases,
        )


def run(
    workload: tuple[list[VideoStream], EtcMatrix],
    catalog: VmCatalog,
    scheduler_choice: Heuristic,
    provisioning_mode: ProvisioningMode,
    params: SimParams,
    seed: int,
) -> MetricsReport:
    """Simulate one run of the workload; deterministic for a fixed seed."""
    streams, etc = workload
    if not streams:
        return MetricsReport(
            seed=seed, admitted_gops=0, delivered_gops=0, startup_delays={},
            avg_startup_delay=0.0, deadline_miss_rate=0.0, deadline_misses=0,
            per_index_completion=[None] * EARLY_GOP_INDICES, total_cost=0.0,
            vm_timeline=[], vm_final=[], resubmissions=0, escalations=0,
            makespan=0.0, end_time=0.0, peak_vms=0,
            releases=[] if params.record_releases else None,
        )
    sim = _Simulation(streams, etc, catalog, scheduler_choice,
                      provisioning_mode, params, seed)
    return sim.run()
