"""Admission control: utility assignment, batch queue, virtual queue.

GOPs earn a utility value that decays with their position in the stream, so
startup GOPs outrank later ones. The batch queue holds every unscheduled GOP
per stream; the virtual queue exposes just each stream's highest-utility
pending GOP (plus any resubmitted GOPs) to the scheduler.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

from .errors import AdmissionError
from .workload import GopId, GopTask, VideoStream

# A GOP resubmitted by the merger is treated as maximum priority.
RESUBMIT_UTILITY = 1.0


@dataclass(frozen=True, slots=True)
class UtilityParams:
    """Slope constant of the utility decay curve."""

    c: float = 0.1

    def __post_init__(self):
        if self.c <= 0:
            raise AdmissionError(f"utility slope c must be > 0, got {self.c}")


def utility(index: int, params: UtilityParams) -> float:
    """Priority of the GOP at `index`: (1/e)^(c*index), in (0, 1]."""
    if index < 0:
        raise AdmissionError(f"GOP index must be >= 0, got {index}")
    return math.exp(-params.c * index)


@dataclass(slots=True)
class BatchQueue:
    """Per-stream ordered lists of unscheduled GOPs plus resubmit flags.

    priority_flags is an insertion-ordered set (dict keys) so the virtual
    queue can walk it deterministically without sorting.
    """

    pending: dict[str, deque[GopTask]] = field(default_factory=dict)
    priority_flags: dict[GopId, None] = field(default_factory=dict)

    def append(self, gop: GopTask) -> None:
        self.pending.setdefault(gop.stream_id, deque()).append(gop)

    def insert_by_index(self, gop: GopTask) -> None:
        """Re-enter a GOP keeping the stream's index order."""
        queue = self.pending.setdefault(gop.stream_id, deque())
        pos = 0
        for pos, queued in enumerate(queue):
            if queued.index > gop.index:
                break
        else:
            pos = len(queue)
        queue.insert(pos, gop)

    def remove(self, gop: GopTask) -> None:
        queue = self.pending.get(gop.stream_id)
        if not queue:
            raise AdmissionError(f"GOP {gop.gop_id} is not pending")
        if queue[0] is gop:
            queue.popleft()
        else:
            try:
                queue.remove(gop)
            except ValueError:
                raise AdmissionError(f"GOP {gop.gop_id} is not pending") from None
        if not queue:
            del self.pending[gop.stream_id]
        self.priority_flags.pop(gop.gop_id, None)

    def contains(self, gop_id: GopId) -> bool:
        queue = self.pending.get(gop_id[0])
        if not queue:
            return False
        return any(g.index == gop_id[1] for g in queue)

    def flag_priority(self, gop_id: GopId) -> None:
        self.priority_flags[gop_id] = None

    def total_pending(self) -> int:
        return sum(len(q) for q in self.pending.values())


@dataclass(slots=True)
class VirtualQueue:
    """Scheduling-round view: one top-utility GOP per stream, plus
    resubmitted GOPs, which always qualify."""

    entries: list[GopTask] = field(default_factory=list)
    flagged: set[GopId] = field(default_factory=set)

    def __len__(self) -> int:
        return len(self.entries)

    def utility_of(self, gop: GopTask) -> float:
        return RESUBMIT_UTILITY if gop.gop_id in self.flagged else gop.utility


def refresh_virtual_queue(bq: BatchQueue) -> VirtualQueue:
    """Select each stream's lowest-index pending GOP; include flagged GOPs
    unconditionally."""
    vq = VirtualQueue()
    entries = vq.entries
    for queue in bq.pending.values():
        entries.append(queue[0])
    if bq.priority_flags:
        seen: set[GopId] = {g.gop_id for g in entries}
        for gid in bq.priority_flags:
            if gid in seen:
                vq.flagged.add(gid)
                continue
            queue = bq.pending.get(gid[0])
            if not queue:
                continue
            for gop in queue:
                if gop.index == gid[1]:
                    entries.append(gop)
                    vq.flagged.add(gid)
                    break
    return vq


class AdmissionControl:
    """Tracks every admitted GOP through pending -> in-flight -> delivered."""

    def __init__(self, params: UtilityParams | None = None,
                 utility_fn: Callable[[int], float] | None = None):
        self.params = params or UtilityParams()
        self._utility_fn = utility_fn or (lambda i: utility(i, self.params))
        self.queue = BatchQueue()
        self.admitted: dict[GopId, GopTask] = {}
        self.dispatched_once: set[GopId] = set()
        self.delivered: set[GopId] = set()
        self._admitted_streams: set[str] = set()

    def admit_stream(self, stream: VideoStream, now: float) -> list[GopTask]:
        """Assign utilities and append the stream's GOPs to the batch queue."""
        if stream.stream_id in self._admitted_streams:
            raise AdmissionError(f"stream {stream.stream_id!r} already admitted")
        self._admitted_streams.add(stream.stream_id)
        for gop in stream.gops:
            gop.utility = self._utility_fn(gop.index)
            gop.arrival_time = now
            self.admitted[gop.gop_id] = gop
            self.queue.append(gop)
        return list(stream.gops)

    def refresh_virtual_queue(self) -> VirtualQueue:
        return refresh_virtual_queue(self.queue)

    def mark_dispatched(self, gop: GopTask) -> None:
        """Remove a GOP from the batch queue when the scheduler commits it."""
        self.queue.remove(gop)
        self.dispatched_once.add(gop.gop_id)

    def mark_delivered(self, gop_id: GopId) -> None:
        self.delivered.add(gop_id)

    def is_pending(self, gop_id: GopId) -> bool:
        return self.queue.contains(gop_id)

    def resubmit(self, gop_id: GopId) -> None:
        """Re-queue a dispatched-but-undelivered GOP at high priority.

        Idempotent while the GOP is already waiting as a resubmission.
        """
        gop = self.admitted.get(gop_id)
        if gop is None:
            raise AdmissionError(f"unknown GOP {gop_id}")
        if gop_id in self.delivered:
            raise AdmissionError(f"GOP {gop_id} already delivered")
        if gop_id not in self.dispatched_once:
            raise AdmissionError(f"GOP {gop_id} was never dispatched")
        if self.queue.contains(gop_id):
            self.queue.flag_priority(gop_id)
            return
        self.queue.insert_by_index(gop)
        self.queue.flag_priority(gop_id)

    def escalate_pending(self, gop_id: GopId) -> None:
        """Flag a still-queued GOP to maximum priority (merger escalation)."""
        if not self.queue.contains(gop_id):
            raise AdmissionError(f"GOP {gop_id} is not pending")
        self.queue.flag_priority(gop_id)

    # Conservation bookkeeping: pending / in-flight / delivered must
    # partition the admitted set.
    def state_counts(self) -> dict[str, int]:
        pending = self.queue.total_pending()
        delivered = len(self.delivered)
        in_flight = len(self.admitted) - pending - delivered
        return {
            "admitted": len(self.admitted),
            "pending": pending,
            "in_flight": in_flight,
            "delivered": delivered,
        }
