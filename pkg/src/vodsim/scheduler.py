"""Task scheduler: completion-time estimation and batch mapping heuristics.

Mapping runs in phases. Phase 1 pairs every virtual-queue GOP with the VM
giving its minimum estimated completion time; phase 2 commits one pair per
iteration according to the heuristic's objective. The utility-based variants
add a third phase that prefers the highest-utility GOP among a VM's
candidates whenever that choice provably keeps the objective pick's deadline.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .admission import VirtualQueue
from .errors import ClusterError
from .workload import EtcMatrix, GopTask

LOCAL_QUEUE_CAPACITY = 2

# eligibility hook: (gop, vm, estimated_completion) -> bool
AdmitFn = Callable[[GopTask, "VmQueueState", float], bool]
DeadlineFn = Callable[[GopTask], float]


class Heuristic(str, Enum):
    MM = "MM"
    MSD = "MSD"
    MMU = "MMU"
    MMUT = "MMUT"
    MSDUT = "MSDUT"
    MMUUT = "MMUUT"

    @classmethod
    def parse(cls, name: str) -> "Heuristic":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            valid = ", ".join(h.value for h in cls)
            raise ValueError(
                f"unknown heuristic {name!r}; valid: {valid}"
            ) from None


@dataclass(slots=True)
class VmQueueState:
    """Scheduling view of one VM: the executing task and a FCFS local queue
    of at most LOCAL_QUEUE_CAPACITY waiting tasks."""

    vm_id: int
    type_id: str
    hourly_cost: float
    executing: tuple[GopTask, float] | None = None  # (gop, estimated finish)
    local_queue: list[tuple[GopTask, float]] = field(default_factory=list)
    queued_worst_sum: float = 0.0

    def free_slots(self) -> int:
        return LOCAL_QUEUE_CAPACITY - len(self.local_queue)

    def remaining_exec(self, now: float) -> float:
        if self.executing is None:
            return 0.0
        return max(0.0, self.executing[1] - now)

    def enqueue(self, gop: GopTask, worst_case: float) -> None:
        if self.free_slots() <= 0:
            raise ClusterError(f"VM {self.vm_id} local queue is full")
        self.local_queue.append((gop, worst_case))
        self.queued_worst_sum += worst_case

    def pop_next(self) -> tuple[GopTask, float] | None:
        if not self.local_queue:
            return None
        gop, worst = self.local_queue.pop(0)
        self.queued_worst_sum -= worst
        return gop, worst

    def is_idle(self) -> bool:
        return self.executing is None and not self.local_queue


@dataclass(frozen=True, slots=True)
class Assignment:
    gop: GopTask
    vm_id: int
    estimated_completion: float


def estimate_completion(gop: GopTask, vm: VmQueueState, now: float,
                        etc: EtcMatrix) -> float:
    """Estimated completion of `gop` if appended to `vm`'s local queue:
    current time + remaining execution + queued worst cases + own worst case.
    """
    worst = etc.worst_case(gop.stream_id, gop.index, vm.type_id)
    return now + vm.remaining_exec(now) + vm.queued_worst_sum + worst


def phase1_pairs(
    vq: VirtualQueue,
    vms: list[VmQueueState],
    now: float,
    etc: EtcMatrix,
    admit: AdmitFn | None = None,
) -> list[tuple[GopTask, VmQueueState, float]]:
    """Pair each virtual-queue GOP with its minimum-completion VM.

    Only VMs with a free local-queue slot participate; ties break on lowest
    hourly cost, then lowest vm_id. Returns an empty list when no VM can
    accept work.
    """
    open_vms = [vm for vm in vms if vm.free_slots() > 0]
    if not open_vms:
        return []
    # Per-VM constant part of the estimate, hoisted out of the GOP loop.
    bases = [(vm, now + vm.remaining_exec(now) + vm.queued_worst_sum)
             for vm in open_vms]
    worst_of = etc.worst_case
    pairs = []
    if len(bases) == 1:
        vm, base = bases[0]
        tid = vm.type_id
        for gop in vq.entries:
            est = base + worst_of(gop.stream_id, gop.index, tid)
            if admit is None or admit(gop, vm, est):
                pairs.append((gop, vm, est))
        return pairs
    for gop in vq.entries:
        sid, idx = gop.stream_id, gop.index
        best = None
        best_key = None
        for vm, base in bases:
            est = base + worst_of(sid, idx, vm.type_id)
            if admit is not None and not admit(gop, vm, est):
                continue
            key = (est, vm.hourly_cost, vm.vm_id)
            if best_key is None or key < best_key:
                best_key = key
                best = (gop, vm, est)
        if best is not None:
            pairs.append(best)
    return pairs


def _run_mapping(
    vq: VirtualQueue,
    vms: list[VmQueueState],
    now: float,
    etc: EtcMatrix,
    select: Callable[[list[tuple[GopTask, VmQueueState, float]]],
                     tuple[GopTask, VmQueueState, float]],
    admit: AdmitFn | None,
) -> list[Assignment]:
    """Iterate phase1/select/commit until the queue drains or slots run out.

    Committing mutates the VmQueueState, so later iterations see updated
    queue contents. The working virtual queue shrinks as GOPs are committed.
    """
    work = VirtualQueue(entries=list(vq.entries), flagged=set(vq.flagged))
    assignments: list[Assignment] = []
    while work.entries:
        pairs = phase1_pairs(work, vms, now, etc, admit)
        if not pairs:
            break
        gop, vm, est = select(pairs)
        vm.enqueue(gop, etc.worst_case(gop.stream_id, gop.index, vm.type_id))
        assignments.append(Assignment(gop, vm.vm_id, est))
        work.entries.remove(gop)
    return assignments


def map_mm(vq: VirtualQueue, vms: list[VmQueueState], now: float,
           etc: EtcMatrix, admit: AdmitFn | None = None) -> list[Assignment]:
    """MinCompletion-MinCompletion: commit the globally earliest pair."""

    def select(pairs):
        return min(pairs, key=lambda p: (p[2], p[0].gop_id))

    return _run_mapping(vq, vms, now, etc, select, admit)


def map_msd(vq: VirtualQueue, vms: list[VmQueueState], now: float,
            etc: EtcMatrix, deadline_of: DeadlineFn,
            admit: AdmitFn | None = None) -> list[Assignment]:
    """MinCompletion-SoonestDeadline: commit the pair whose GOP has the
    earliest absolute deadline; ties go to the earlier completion."""

    def select(pairs):
        return min(pairs, key=lambda p: (deadline_of(p[0]), p[2], p[0].gop_id))

    return _run_mapping(vq, vms, now, etc, select, admit)


def map_mmu(vq: VirtualQueue, vms: list[VmQueueState], now: float,
            etc: EtcMatrix, deadline_of: DeadlineFn,
            admit: AdmitFn | None = None) -> list[Assignment]:
    """MinCompletion-MaxUrgency: commit the pair with the smallest slack
    (deadline minus estimated completion)."""

    def select(pairs):
        return min(pairs, key=lambda p: (deadline_of(p[0]) - p[2], p[2],
                                         p[0].gop_id))

    return _run_mapping(vq, vms, now, etc, select, admit)


class Objective(str, Enum):
    MIN_COMPLETION = "min_completion"
    SOONEST_DEADLINE = "soonest_deadline"
    MAX_URGENCY = "max_urgency"


def map_utility(
    vq: VirtualQueue,
    vms: list[VmQueueState],
    now: float,
    etc: EtcMatrix,
    objective: Objective,
    deadline_of: DeadlineFn,
    admit: AdmitFn | None = None,
) -> list[Assignment]:
    """Utility-based variant of the mapping heuristics.

    Each iteration finds the objective's pick g_obj; among the candidates
    paired with g_obj's VM, the highest-utility GOP g_ut is committed instead
    if and only if hypothetically queueing g_ut first still meets g_obj's
    deadline under the completion-estimate arithmetic.
    """
    if objective is Objective.MIN_COMPLETION:
        def obj_key(p):
            return (p[2], p[0].gop_id)
    elif objective is Objective.SOONEST_DEADLINE:
        def obj_key(p):
            return (deadline_of(p[0]), p[2], p[0].gop_id)
    else:
        def obj_key(p):
            return (deadline_of(p[0]) - p[2], p[2], p[0].gop_id)

    work = VirtualQueue(entries=list(vq.entries), flagged=set(vq.flagged))
    flagged = work.flagged
    assignments: list[Assignment] = []
    while work.entries:
        pairs = phase1_pairs(work, vms, now, etc, admit)
        if not pairs:
            break
        best = pairs[0]
        best_key = obj_key(best)
        for p in pairs[1:]:
            key = obj_key(p)
            if key < best_key:
                best, best_key = p, key
        g_obj, vm, est_obj = best
        # Highest-utility candidate among this VM's pairings (resubmitted
        # GOPs count as utility 1); ties prefer the earlier GOP.
        g_ut, est_ut = g_obj, est_obj
        ut_best = 1.0 if g_obj.gop_id in flagged else g_obj.utility
        for p in pairs:
            g = p[0]
            if p[1] is not vm or g is g_obj:
                continue
            u = 1.0 if g.gop_id in flagged else g.utility
            if u > ut_best or (u == ut_best
                               and (g.index, g.stream_id)
                               < (g_ut.index, g_ut.stream_id)):
                g_ut, est_ut = g, p[2]
                ut_best = u
        chosen, est = g_obj, est_obj
        if g_ut is not g_obj:
            # Hypothetical: queue g_ut first, re-estimate g_obj on this VM.
            shifted = est_obj + etc.worst_case(
                g_ut.stream_id, g_ut.index, vm.type_id)
            if shifted <= deadline_of(g_obj):
                chosen, est = g_ut, est_ut
        vm.enqueue(chosen,
                   etc.worst_case(chosen.stream_id, chosen.index, vm.type_id))
        assignments.append(Assignment(chosen, vm.vm_id, est))
        work.entries.remove(chosen)
    return assignments


def map_gops(
    heuristic: Heuristic,
    vq: VirtualQueue,
    vms: list[VmQueueState],
    now: float,
    etc: EtcMatrix,
    deadline_of: DeadlineFn,
    admit: AdmitFn | None = None,
) -> list[Assignment]:
    """Dispatch on the configured heuristic."""
    if heuristic is Heuristic.MM:
        return map_mm(vq, vms, now, etc, admit)
    if heuristic is Heuristic.MSD:
        return map_msd(vq, vms, now, etc, deadline_of, admit)
    if heuristic is Heuristic.MMU:
        return map_mmu(vq, vms, now, etc, deadline_of, admit)
    objective = {
        Heuristic.MMUT: Objective.MIN_COMPLETION,
        Heuristic.MSDUT: Objective.SOONEST_DEADLINE,
        Heuristic.MMUUT: Objective.MAX_URGENCY,
    }[heuristic]
    return map_utility(vq, vms, now, etc, objective, deadline_of, admit)
