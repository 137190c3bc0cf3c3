"""Workload model: VM type catalog, GOP tasks, execution-time estimates.

A workload is a list of video streams, each split into GOP tasks, plus an
estimate table holding the mean/stddev execution time of every GOP on every
VM type in the catalog. Workloads come from a trace file or from the
synthetic generator.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    EtcLookupError,
    TraceError,
    WorkloadValidationError,
)

# Truncation floor for sampled execution times, seconds.
EXEC_TIME_FLOOR = 0.001

GopId = tuple[str, int]


@dataclass(frozen=True, slots=True)
class VmType:
    """A rentable VM type: opaque id, price per charging cycle, free label."""

    type_id: str
    hourly_cost: float
    label: str = ""

    def __post_init__(self):
        if self.hourly_cost <= 0:
            raise ConfigError(f"hourly_cost must be > 0 for {self.type_id!r}")


class VmCatalog:
    """Ordered collection of VM types with unique ids."""

    def __init__(self, types: list[VmType]):
        self.types = list(types)
        self._by_id = {t.type_id: t for t in self.types}
        if len(self._by_id) != len(self.types):
            raise ConfigError("duplicate type_id in catalog")
        self._index = {t.type_id: i for i, t in enumerate(self.types)}

    def __len__(self) -> int:
        return len(self.types)

    def __iter__(self):
        return iter(self.types)

    def __contains__(self, type_id: str) -> bool:
        return type_id in self._by_id

    def get(self, type_id: str) -> VmType:
        try:
            return self._by_id[type_id]
        except KeyError:
            raise ConfigError(f"unknown VM type {type_id!r}") from None

    def index(self, type_id: str) -> int:
        return self._index[type_id]

    def type_ids(self) -> list[str]:
        return [t.type_id for t in self.types]

    def __eq__(self, other) -> bool:
        return isinstance(other, VmCatalog) and self.types == other.types


def default_catalog() -> VmCatalog:
    """Four EC2 instance types with their hourly prices."""
    return VmCatalog(
        [
            VmType("g2.2xlarge", 0.65, "GPU"),
            VmType("c4.xlarge", 0.20, "CPU-optimized"),
            VmType("r3.xlarge", 0.33, "memory-optimized"),
            VmType("m4.large", 0.15, "general purpose"),
        ]
    )


@dataclass(frozen=True, slots=True)
class ExecEstimate:
    """Mean and standard deviation of a GOP's execution time, seconds."""

    mean: float
    std_dev: float

    def __post_init__(self):
        if self.mean <= 0:
            raise WorkloadValidationError(f"mean must be > 0, got {self.mean}")
        if self.std_dev < 0:
            raise WorkloadValidationError(
                f"std_dev must be >= 0, got {self.std_dev}"
            )

    @property
    def worst_case(self) -> float:
        return self.mean + self.std_dev


class EtcMatrix:
    """Estimated-time table keyed by (stream_id, gop_index, type_id)."""

    def __init__(self):
        self._entries: dict[tuple[str, int, str], ExecEstimate] = {}
        # flat mean+std table; worst_case sits on the scheduler's hot path
        self._worst: dict[tuple[str, int, str], float] = {}

    def put(self, stream_id: str, gop_index: int, type_id: str,
            estimate: ExecEstimate) -> None:
        key = (stream_id, gop_index, type_id)
        self._entries[key] = estimate
        self._worst[key] = estimate.mean + estimate.std_dev

    def get(self, stream_id: str, gop_index: int, type_id: str) -> ExecEstimate:
        try:
            return self._entries[(stream_id, gop_index, type_id)]
        except KeyError:
            raise EtcLookupError(
                f"no estimate for GOP ({stream_id!r}, {gop_index}) "
                f"on type {type_id!r}"
            ) from None

    def worst_case(self, stream_id: str, gop_index: int, type_id: str) -> float:
        try:
            return self._worst[(stream_id, gop_index, type_id)]
        except KeyError:
            raise EtcLookupError(
                f"no estimate for GOP ({stream_id!r}, {gop_index}) "
                f"on type {type_id!r}"
            ) from None

    def sample(self, stream_id: str, gop_index: int, type_id: str,
               rng: random.Random) -> float:
        """Draw an actual execution time, truncated at the positive floor."""
        e = self.get(stream_id, gop_index, type_id)
        if e.std_dev == 0.0:
            return e.mean
        return max(EXEC_TIME_FLOOR, rng.gauss(e.mean, e.std_dev))

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: tuple[str, int, str]) -> bool:
        return key in self._entries

    def items(self):
        return self._entries.items()

    def validate_complete(self, streams: list["VideoStream"],
                          catalog: VmCatalog) -> None:
        """Every GOP must have an entry for every catalog type."""
        for stream in streams:
            for gop in stream.gops:
                for type_id in catalog.type_ids():
                    if (stream.stream_id, gop.index, type_id) not in self._entries:
                        raise WorkloadValidationError(
                            f"missing ETC entry for GOP "
                            f"({stream.stream_id!r}, {gop.index}) "
                            f"on type {type_id!r}"
                        )


def worst_case_exec(etc: EtcMatrix, gop: "GopTask", type_id: str) -> float:
    """Pessimistic execution time: mean plus one standard deviation."""
    return etc.worst_case(gop.stream_id, gop.index, type_id)


def sample_exec_time(etc: EtcMatrix, gop: "GopTask", type_id: str,
                     rng: random.Random) -> float:
    """Actual simulated execution time for one dispatch of the GOP."""
    return etc.sample(gop.stream_id, gop.index, type_id, rng)


@dataclass(slots=True, eq=False)
class GopTask:
    """One independently transcodable video segment.

    relative_deadline is the presentation time of the GOP's first frame
    relative to the start of stream playback. utility and arrival_time are
    filled in by admission control. Tasks compare by identity; gop_id is the
    stable value key.
    """

    stream_id: str
    index: int
    relative_deadline: float
    utility: float = 0.0
    arrival_time: float = 0.0
    gop_id: GopId = field(init=False)

    def __post_init__(self):
        self.gop_id = (self.stream_id, self.index)


@dataclass(slots=True)
class VideoStream:
    """A requested video: arrival time, duration, and its ordered GOPs."""

    stream_id: str
    request_arrival_time: float
    duration: float
    gops: list[GopTask] = field(default_factory=list)
    presentation_start: float | None = None

    def validate(self) -> None:
        prev = None
        for i, gop in enumerate(self.gops):
            if gop.index != i:
                raise WorkloadValidationError(
                    f"stream {self.stream_id!r}: GOP indices must be "
                    f"0..n-1 without gaps (got {gop.index} at position {i})"
                )
            if i == 0 and gop.relative_deadline != 0.0:
                raise WorkloadValidationError(
                    f"stream {self.stream_id!r}: GOP 0 must have relative "
                    f"deadline 0, got {gop.relative_deadline}"
                )
            if prev is not None and gop.relative_deadline < prev:
                raise WorkloadValidationError(
                    f"stream {self.stream_id!r}: relative deadlines must be "
                    f"non-decreasing (GOP {gop.index})"
                )
            prev = gop.relative_deadline


# Relative speed of the default types (1.0 = fastest); the GPU type leads
# on average, the cheap general-purpose type trails.
DEFAULT_SPEED_FACTORS = {
    "g2.2xlarge": 1.0,
    "c4.xlarge": 1.4,
    "r3.xlarge": 1.7,
    "m4.large": 2.1,
}


@dataclass(frozen=True, slots=True)
class ExecProfile:
    """Synthetic per-type execution profile.

    speed_factor scales a GOP's base execution time for this type; jitter is
    the half-width of a uniform per-GOP multiplicative noise; cv is the
    std/mean ratio of the stored estimate.
    """

    speed_factor: float
    jitter: float = 0.25
    cv: float = 0.15


def default_profiles(catalog: VmCatalog) -> dict[str, ExecProfile]:
    """Speed profiles for a catalog: known ids get calibrated factors,
    unknown ones get factors spaced by descending price."""
    known = {
        t.type_id: ExecProfile(DEFAULT_SPEED_FACTORS[t.type_id])
        for t in catalog
        if t.type_id in DEFAULT_SPEED_FACTORS
    }
    if len(known) == len(catalog):
        return known
    by_price = sorted(catalog, key=lambda t: (-t.hourly_cost, t.type_id))
    return {
        t.type_id: ExecProfile(1.0 + 0.35 * rank)
        for rank, t in enumerate(by_price)
    }


@dataclass(slots=True)
class GeneratorParams:
    """Synthetic workload knobs.

    Inter-arrival times are Normal(horizon/num_requests, mean/3) truncated at
    zero; durations are uniform over duration_range; each stream is split
    into ceil(duration / gop_playback_seconds) GOPs. Each GOP draws a base
    execution time from base_exec_range (seconds on the fastest type), then
    per-type means apply the profile's speed factor and jitter.
    """

    num_requests: int
    horizon_seconds: float = 3600.0
    duration_range: tuple[float, float] = (10.0, 600.0)
    gop_playback_seconds: float = 2.0
    base_exec_range: tuple[float, float] = (0.8, 2.4)
    exec_profiles: dict[str, ExecProfile] | None = None

    def validate(self, catalog: VmCatalog) -> None:
        if self.num_requests < 1:
            raise ConfigError("num_requests must be >= 1")
        lo, hi = self.duration_range
        if lo > hi or lo <= 0:
            raise ConfigError(f"invalid duration_range {self.duration_range}")
        if self.horizon_seconds <= 0:
            raise ConfigError("horizon_seconds must be > 0")
        if self.gop_playback_seconds <= 0:
            raise ConfigError("gop_playback_seconds must be > 0")
        elo, ehi = self.base_exec_range
        if elo > ehi or elo <= 0:
            raise ConfigError(f"invalid base_exec_range {self.base_exec_range}")
        if self.exec_profiles is not None:
            for type_id in catalog.type_ids():
                if type_id not in self.exec_profiles:
                    raise ConfigError(
                        f"exec_profiles missing catalog type {type_id!r}"
                    )


def generate_workload(
    params: GeneratorParams,
    seed: int,
    catalog: VmCatalog | None = None,
) -> tuple[list[VideoStream], EtcMatrix]:
    """Synthesize a workload; pure function of (params, seed, catalog)."""
    catalog = catalog or default_catalog()
    params.validate(catalog)
    profiles = params.exec_profiles or default_profiles(catalog)

    rng = np.random.default_rng(seed)
    n = params.num_requests
    mean_gap = params.horizon_seconds / n
    gaps = np.maximum(0.0, rng.normal(mean_gap, mean_gap / 3.0, size=n))
    arrivals = np.cumsum(gaps)
    durations = rng.uniform(params.duration_range[0],
                            params.duration_range[1], size=n)

    type_ids = catalog.type_ids()
    factors = np.array([profiles[t].speed_factor for t in type_ids])
    jitters = np.array([profiles[t].jitter for t in type_ids])
    cvs = np.array([profiles[t].cv for t in type_ids])

    streams: list[VideoStream] = []
    etc = EtcMatrix()
    width = len(str(n))
    for i in range(n):
        stream_id = f"s{i:0{width}d}"
        duration = float(durations[i])
        n_gops = math.ceil(duration / params.gop_playback_seconds)
        base = rng.uniform(params.base_exec_range[0],
                           params.base_exec_range[1], size=n_gops)
        noise = rng.uniform(1.0 - jitters, 1.0 + jitters,
                            size=(n_gops, len(type_ids)))
        means = base[:, None] * factors[None, :] * noise

        gops = []
        for j in range(n_gops):
            gops.append(GopTask(
                stream_id=stream_id,
                index=j,
                relative_deadline=j * params.gop_playback_seconds,
            ))
            for k, type_id in enumerate(type_ids):
                mean = float(means[j, k])
                etc.put(stream_id, j, type_id,
                        ExecEstimate(mean=mean, std_dev=float(cvs[k]) * mean))
        streams.append(VideoStream(
            stream_id=stream_id,
            request_arrival_time=float(arrivals[i]),
            duration=duration,
            gops=gops,
        ))

    streams.sort(key=lambda s: (s.request_arrival_time, s.stream_id))
    return streams, etc


def load_trace(path: str, catalog: VmCatalog) -> tuple[list[VideoStream], EtcMatrix]:
    """Parse a line-delimited trace file.

    Record kinds:
      S,<stream_id>,<arrival_s>,<duration_s>
      G,<stream_id>,<gop_index>,<rel_deadline_s>,<type>:<mean>:<std>,...
    '#' starts a comment; blank lines are ignored.
    """
    streams: dict[str, VideoStream] = {}
    etc = EtcMatrix()
    covered: dict[tuple[str, int], set[str]] = {}

    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            fields = [f.strip() for f in line.split(",")]
            kind = fields[0]
            if kind == "S":
                if len(fields) != 4:
                    raise TraceError(line_no, "S record needs 4 fields")
                stream_id = fields[1]
                if stream_id in streams:
                    raise TraceError(line_no, f"duplicate stream {stream_id!r}")
                try:
                    arrival = float(fields[2])
                    duration = float(fields[3])
                except ValueError as exc:
                    raise TraceError(line_no, f"bad number: {exc}") from None
                streams[stream_id] = VideoStream(
                    stream_id=stream_id,
                    request_arrival_time=arrival,
                    duration=duration,
                )
            elif kind == "G":
                if len(fields) < 5:
                    raise TraceError(line_no, "G record needs >= 5 fields")
                stream_id = fields[1]
                if stream_id not in streams:
                    raise TraceError(
                        line_no,
                        f"G record for unknown stream {stream_id!r} "
                        f"(S record must come first)",
                    )
                try:
                    index = int(fields[2])
                    rel_deadline = float(fields[3])
                except ValueError as exc:
                    raise TraceError(line_no, f"bad number: {exc}") from None
                if index < 0:
                    raise TraceError(line_no, "gop_index must be >= 0")
                gop = GopTask(stream_id=stream_id, index=index,
                              relative_deadline=rel_deadline)
                streams[stream_id].gops.append(gop)
                seen = covered.setdefault((stream_id, index), set())
                for cell in fields[4:]:
                    parts = cell.split(":")
                    if len(parts) != 3:
                        raise TraceError(
                            line_no, f"ETC cell must be type:mean:std, got {cell!r}"
                        )
                    type_id = parts[0]
                    if type_id not in catalog:
                        raise WorkloadValidationError(
                            f"line {line_no}: GOP ({stream_id!r}, {index}) "
                            f"references unknown VM type {type_id!r}"
                        )
                    try:
                        mean = float(parts[1])
                        std = float(parts[2])
                    except ValueError as exc:
                        raise TraceError(line_no, f"bad number: {exc}") from None
                    etc.put(stream_id, index, type_id, ExecEstimate(mean, std))
                    seen.add(type_id)
            else:
                raise TraceError(line_no, f"unknown record kind {kind!r}")

    result = sorted(streams.values(),
                    key=lambda s: (s.request_arrival_time, s.stream_id))
    for stream in result:
        stream.gops.sort(key=lambda g: g.index)
        stream.validate()
    etc.validate_complete(result, catalog)
    return result, etc


def save_trace(streams: list[VideoStream], etc: EtcMatrix,
               catalog: VmCatalog, path: str) -> None:
    """Write a workload in the trace format accepted by load_trace."""
    type_ids = catalog.type_ids()
    with open(path, "w", encoding="utf-8") as fh:
        for stream in streams:
            fh.write(f"S,{stream.stream_id},{stream.request_arrival_time!r},"
                     f"{stream.duration!r}\n")
            for gop in stream.gops:
                cells = []
                for type_id in type_ids:
                    e = etc.get(stream.stream_id, gop.index, type_id)
                    cells.append(f"{type_id}:{e.mean!r}:{e.std_dev!r}")
                fh.write(f"G,{stream.stream_id},{gop.index},"
                         f"{gop.relative_deadline!r},{','.join(cells)}\n")
