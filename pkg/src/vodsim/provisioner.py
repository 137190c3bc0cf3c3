"""VM provisioning policies: when, how many, and which type to (de)allocate.

The periodic policy allocates when the recent deadline miss rate crosses the
upper QoS bound and deallocates (at most one VM, deferred to its charging
cycle end) when the rate falls under the lower bound. A lightweight remedial
policy sized by the virtual-queue backlog covers arrival bursts between
periodic events.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

from .errors import ClusterError, ConfigError
from .workload import EtcMatrix, GopTask, VmCatalog


@dataclass(frozen=True, slots=True)
class QosBand:
    """Tolerated deadline-miss-rate band [alpha, beta]."""

    alpha: float = 0.05
    beta: float = 0.1

    def __post_init__(self):
        if not (0 <= self.alpha < self.beta <= 1):
            raise ConfigError(
                f"need 0 <= alpha < beta <= 1, got ({self.alpha}, {self.beta})"
            )


@dataclass(frozen=True, slots=True)
class ProvisionerParams:
    k_suit: float = 0.5          # performance/cost weight in suitability
    k_demand: float = 0.3        # current-miss weight in demand
    omega_th: float = 0.25       # demand threshold (1 / default catalog size)
    rho_th: float = 0.70         # utilization threshold
    eta_th: float = 0.4          # heterogeneity threshold
    theta: float = 10.0          # remedial aggressiveness
    period: float = 60.0         # seconds between provisioning events
    remedial_type: str = "c4.xlarge"

    def __post_init__(self):
        for name in ("k_suit", "k_demand", "omega_th", "rho_th", "eta_th"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise ConfigError(f"{name} must be in [0,1], got {value}")
        if self.theta <= 0:
            raise ConfigError(f"theta must be > 0, got {self.theta}")
        if self.period <= 0:
            raise ConfigError(f"period must be > 0, got {self.period}")


def _suitability_scores(gop: GopTask, etc: EtcMatrix, catalog: VmCatalog,
                        k_suit: float) -> list[tuple[str, float]]:
    """Suitability of every catalog type for `gop`, in catalog order.

    Execution times come from the estimate means; the cost of one run is the
    prorated hourly price. When all types tie on an axis that axis scores 1
    for everyone (no discrimination).
    """
    sid, idx = gop.stream_id, gop.index
    times = [etc.get(sid, idx, t.type_id).mean for t in catalog]
    costs = [times[i] * t.hourly_cost / 3600.0
             for i, t in enumerate(catalog)]
    t_min, t_max = min(times), max(times)
    c_min, c_max = min(costs), max(costs)
    t_span = t_max - t_min
    c_span = c_max - c_min
    scores = []
    for i, vm_type in enumerate(catalog):
        t_score = 1.0 if t_span == 0 else (t_max - times[i]) / t_span
        c_score = 1.0 if c_span == 0 else (c_max - costs[i]) / c_span
        scores.append((vm_type.type_id,
                       k_suit * t_score + (1.0 - k_suit) * c_score))
    return scores


def suitability(gop: GopTask, type_id: str, etc: EtcMatrix,
                catalog: VmCatalog, k_suit: float) -> float:
    """Blend of normalized speed and cost of running `gop` on `type_id`."""
    for tid, score in _suitability_scores(gop, etc, catalog, k_suit):
        if tid == type_id:
            return score
    raise ConfigError(f"type {type_id!r} not in catalog")


def gop_type(gop: GopTask, etc: EtcMatrix, catalog: VmCatalog,
             k_suit: float) -> str:
    """The VM type with the highest suitability; ties go to the cheapest."""
    scores = _suitability_scores(gop, etc, catalog, k_suit)
    best_id = None
    best_key = None
    for i, (tid, s) in enumerate(scores):
        key = (-s, catalog.types[i].hourly_cost, i)
        if best_key is None or key < best_key:
            best_key = key
            best_id = tid
    return best_id


def demand(sigma_i: float, phi_i: float, k_demand: float) -> float:
    """Demand for a VM type: k*miss_share + (1-k)*queue_share."""
    return k_demand * sigma_i + (1.0 - k_demand) * phi_i


@dataclass(slots=True)
class AllocationInputs:
    """Snapshot consumed by the allocation policy."""

    gamma_t: float                     # recent overall deadline miss rate
    arrival_rate: float                # stream requests per second (window)
    sigma: dict[str, float]            # per-type share of recent misses
    phi: dict[str, float]              # per-type share of batch-queue GOPs
    rho_min: dict[str, float]          # per-type minimum VM utilization


def allocation_policy(state: AllocationInputs, params: ProvisionerParams,
                      qos: QosBand,
                      catalog: VmCatalog) -> list[tuple[str, int]]:
    """Decide how many VMs of each type to allocate right now.

    No-op unless the miss rate reached the upper bound. A type qualifies when
    its demand and its least-utilized VM both clear their thresholds; the
    count scales with the arrival rate and the demand-to-bound ratio.
    """
    if state.gamma_t < qos.beta:
        return []
    result = []
    for vm_type in catalog:
        tid = vm_type.type_id
        omega = demand(state.sigma.get(tid, 0.0), state.phi.get(tid, 0.0),
                       params.k_demand)
        rho_i = state.rho_min.get(tid, 1.0)
        if omega >= params.omega_th and rho_i >= params.rho_th:
            n = math.floor(state.arrival_rate * omega / qos.beta)
            if n > 0:
                result.append((tid, n))
    return result


@dataclass(frozen=True, slots=True)
class ClusterComposition:
    """Live-cluster type counts."""

    counts: dict[str, int]

    def total(self) -> int:
        return sum(self.counts.values())

    def proportions(self) -> dict[str, float]:
        total = self.total()
        if total == 0:
            raise ClusterError("composition of an empty cluster is undefined")
        return {tid: c / total for tid, c in self.counts.items() if c > 0}


def heterogeneity(comp: ClusterComposition, catalog_size: int) -> float:
    """Normalized Shannon-Wiener diversity of the cluster's type mix.

    0 for a homogeneous cluster, 1 when every catalog type is present in
    equal counts. Normalization uses the catalog size, i.e. the types the
    provider could allocate.
    """
    proportions = comp.proportions()
    if catalog_size <= 1:
        return 0.0
    h = -sum(p * math.log(p) for p in proportions.values())
    return h / math.log(catalog_size)


@dataclass(frozen=True, slots=True)
class VmSnapshot:
    """Per-VM view consumed by the deallocation policy."""

    vm_id: int
    type_id: str
    utilization: float
    power_score: float        # mean estimate over the workload; higher = slower
    remaining_cycle: float    # seconds until the next charging cycle boundary
    marked: bool = False


@dataclass(slots=True)
class DeallocationInputs:
    gamma_t: float
    vms: list[VmSnapshot]


def deallocation_policy(state: DeallocationInputs, params: ProvisionerParams,
                        qos: QosBand, catalog_size: int) -> int | None:
    """Pick at most one VM to mark for deallocation.

    No-op unless the miss rate fell to the lower bound. The candidate is the
    least-utilized unmarked VM (ties: least powerful, then soonest cycle
    end). A heterogeneous cluster keeps a still-busy candidate; a homogeneous
    one releases it regardless of utilization.
    """
    if state.gamma_t > qos.alpha:
        return None
    candidates = [vm for vm in state.vms if not vm.marked]
    if not candidates:
        return None
    candidate = min(
        candidates,
        key=lambda vm: (vm.utilization, -vm.power_score,
                        vm.remaining_cycle, vm.vm_id),
    )
    counts: dict[str, int] = {}
    for vm in state.vms:
        counts[vm.type_id] = counts.get(vm.type_id, 0) + 1
    eta = heterogeneity(ClusterComposition(counts), catalog_size)
    if eta >= params.eta_th and candidate.utilization >= params.rho_th:
        return None
    return candidate.vm_id


def remedial_policy(virtual_queue_size: int, params: ProvisionerParams,
                    qos: QosBand) -> int:
    """VM count for the remedial policy: backlog scaled by theta*beta."""
    return math.floor(virtual_queue_size / (params.theta * qos.beta))


class DmrTracker:
    """Sliding-window deadline-miss and arrival statistics.

    Completions and stream arrivals older than one window are discarded; the
    cumulative (whole-run) miss rate is kept separately for reporting.
    """

    def __init__(self, window: float):
        if window <= 0:
            raise ConfigError("tracker window must be > 0")
        self.window = window
        self._completions: deque[tuple[float, bool, str]] = deque()
        self._misses_by_type: dict[str, int] = {}
        self._window_misses = 0
        self._arrivals: deque[float] = deque()
        self.total_completions = 0
        self.total_misses = 0

    def _prune(self, now: float) -> None:
        cutoff = now - self.window
        completions = self._completions
        while completions and completions[0][0] < cutoff:
            _, missed, gtype = completions.popleft()
            if missed:
                self._window_misses -= 1
                self._misses_by_type[gtype] -= 1
        arrivals = self._arrivals
        while arrivals and arrivals[0] < cutoff:
            arrivals.popleft()

    def record_completion(self, now: float, missed: bool, gop_type_id: str) -> None:
        self._completions.append((now, missed, gop_type_id))
        self.total_completions += 1
        if missed:
            self._window_misses += 1
            self._misses_by_type[gop_type_id] = (
                self._misses_by_type.get(gop_type_id, 0) + 1
            )
            self.total_misses += 1

    def record_arrival(self, now: float) -> None:
        self._arrivals.append(now)

    def gamma(self, now: float) -> float:
        """Recent deadline miss rate; 0 when nothing completed lately."""
        self._prune(now)
        if not self._completions:
            return 0.0
        return self._window_misses / len(self._completions)

    def miss_shares(self, now: float) -> dict[str, float]:
        """Each GOP type's share of the window's misses."""
        self._prune(now)
        if self._window_misses == 0:
            return {}
        return {
            gtype: count / self._window_misses
            for gtype, count in self._misses_by_type.items()
            if count > 0
        }

    def arrival_rate(self, now: float) -> float:
        """Stream requests per second over the window."""
        self._prune(now)
        return len(self._arrivals) / self.window

    def cumulative_miss_rate(self) -> float:
        if self.total_completions == 0:
            return 0.0
        return self.total_misses / self.total_completions
