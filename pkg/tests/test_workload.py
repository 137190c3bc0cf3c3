import math
import random

import pytest

from vodsim.errors import (
    ConfigError,
    EtcLookupError,
    TraceError,
    WorkloadValidationError,
)
from vodsim.workload import (
    EXEC_TIME_FLOOR,
    EtcMatrix,
    ExecEstimate,
    GeneratorParams,
    GopTask,
    VmCatalog,
    VmType,
    default_catalog,
    generate_workload,
    load_trace,
    sample_exec_time,
    save_trace,
    worst_case_exec,
)


def make_gop(stream_id="s0", index=0, deadline=0.0):
    return GopTask(stream_id=stream_id, index=index, relative_deadline=deadline)


class TestCatalog:
    def test_default_catalog_prices(self):
        cat = default_catalog()
        prices = {t.type_id: t.hourly_cost for t in cat}
        assert prices == {
            "g2.2xlarge": 0.65,
            "c4.xlarge": 0.20,
            "r3.xlarge": 0.33,
            "m4.large": 0.15,
        }

    def test_duplicate_type_rejected(self):
        with pytest.raises(ConfigError):
            VmCatalog([VmType("a", 0.1), VmType("a", 0.2)])

    def test_nonpositive_cost_rejected(self):
        with pytest.raises(ConfigError):
            VmType("a", 0.0)


class TestEtcMatrix:
    def test_worst_case_is_mean_plus_std(self):
        etc = EtcMatrix()
        etc.put("s0", 0, "a", ExecEstimate(4.0, 0.5))
        assert worst_case_exec(etc, make_gop(), "a") == 4.5

    def test_zero_variance_worst_case(self):
        etc = EtcMatrix()
        etc.put("s0", 0, "a", ExecEstimate(3.0, 0.0))
        assert worst_case_exec(etc, make_gop(), "a") == 3.0

    def test_missing_entry_raises(self):
        etc = EtcMatrix()
        with pytest.raises(EtcLookupError):
            worst_case_exec(etc, make_gop(), "a")

    def test_estimate_validation(self):
        with pytest.raises(WorkloadValidationError):
            ExecEstimate(0.0, 0.1)
        with pytest.raises(WorkloadValidationError):
            ExecEstimate(1.0, -0.1)


class TestSampling:
    def test_zero_std_always_mean(self):
        etc = EtcMatrix()
        etc.put("s0", 0, "a", ExecEstimate(2.5, 0.0))
        rng = random.Random(1)
        gop = make_gop()
        assert all(sample_exec_time(etc, gop, "a", rng) == 2.5
                   for _ in range(50))

    def test_sample_mean_converges(self):
        etc = EtcMatrix()
        etc.put("s0", 0, "a", ExecEstimate(4.0, 0.5))
        rng = random.Random(7)
        gop = make_gop()
        samples = [sample_exec_time(etc, gop, "a", rng) for _ in range(10_000)]
        assert abs(sum(samples) / len(samples) - 4.0) < 0.05

    def test_samples_respect_floor(self):
        etc = EtcMatrix()
        etc.put("s0", 0, "a", ExecEstimate(0.01, 1.0))
        rng = random.Random(3)
        gop = make_gop()
        assert all(sample_exec_time(etc, gop, "a", rng) >= EXEC_TIME_FLOOR
                   for _ in range(2000))


class TestGenerator:
    def test_single_request(self):
        streams, etc = generate_workload(
            GeneratorParams(num_requests=1, horizon_seconds=100.0), seed=5)
        assert len(streams) == 1
        assert streams[0].request_arrival_time >= 0.0

    def test_deterministic_for_seed(self):
        params = GeneratorParams(num_requests=40, duration_range=(10.0, 60.0))
        a_streams, a_etc = generate_workload(params, seed=11)
        b_streams, b_etc = generate_workload(params, seed=11)
        assert [s.request_arrival_time for s in a_streams] == \
               [s.request_arrival_time for s in b_streams]
        assert dict(a_etc.items()) == dict(b_etc.items())

    def test_different_seeds_differ(self):
        params = GeneratorParams(num_requests=40)
        a, _ = generate_workload(params, seed=1)
        b, _ = generate_workload(params, seed=2)
        assert [s.request_arrival_time for s in a] != \
               [s.request_arrival_time for s in b]

    def test_gop_partition_arithmetic(self):
        # duration 60 at 2 s per GOP -> 30 GOPs with deadlines 0,2,...,58
        params = GeneratorParams(num_requests=1, duration_range=(60.0, 60.0),
                                 gop_playback_seconds=2.0)
        streams, _ = generate_workload(params, seed=0)
        gops = streams[0].gops
        assert len(gops) == 30
        assert [g.relative_deadline for g in gops] == [2.0 * i for i in range(30)]

    def test_every_gop_covered_for_every_type(self):
        cat = default_catalog()
        streams, etc = generate_workload(
            GeneratorParams(num_requests=10, duration_range=(10.0, 40.0)),
            seed=3, catalog=cat)
        etc.validate_complete(streams, cat)
        n_gops = sum(len(s.gops) for s in streams)
        assert len(etc) == n_gops * len(cat)

    def test_worst_case_at_least_mean(self):
        _, etc = generate_workload(
            GeneratorParams(num_requests=5, duration_range=(10.0, 30.0)), seed=9)
        for (_, _, _), est in etc.items():
            assert est.worst_case >= est.mean

    def test_deadlines_strictly_increasing_from_zero(self):
        streams, _ = generate_workload(
            GeneratorParams(num_requests=8, duration_range=(10.0, 50.0)), seed=2)
        for stream in streams:
            deadlines = [g.relative_deadline for g in stream.gops]
            assert deadlines[0] == 0.0
            assert all(b > a for a, b in zip(deadlines, deadlines[1:]))

    def test_streams_sorted_by_arrival(self):
        streams, _ = generate_workload(GeneratorParams(num_requests=30), seed=4)
        arrivals = [s.request_arrival_time for s in streams]
        assert arrivals == sorted(arrivals)

    def test_gpu_fastest_on_average(self):
        streams, etc = generate_workload(
            GeneratorParams(num_requests=20, duration_range=(10.0, 60.0)), seed=6)
        totals = {t: 0.0 for t in default_catalog().type_ids()}
        for (_, _, tid), est in etc.items():
            totals[tid] += est.mean
        assert totals["g2.2xlarge"] == min(totals.values())

    def test_invalid_duration_range(self):
        with pytest.raises(ConfigError):
            generate_workload(
                GeneratorParams(num_requests=1, duration_range=(60.0, 10.0)),
                seed=0)

    def test_zero_requests_rejected(self):
        with pytest.raises(ConfigError):
            generate_workload(GeneratorParams(num_requests=0), seed=0)


class TestTraceIO:
    def test_empty_trace(self, tmp_path):
        path = tmp_path / "empty.trace"
        path.write_text("# nothing here\n\n")
        streams, etc = load_trace(str(path), default_catalog())
        assert streams == []
        assert len(etc) == 0

    def test_one_stream_two_gops(self, tmp_path):
        cat = default_catalog()
        cells0 = ",".join(f"{t}:1.0:0.1" for t in cat.type_ids())
        cells1 = ",".join(f"{t}:2.0:0.2" for t in cat.type_ids())
        path = tmp_path / "one.trace"
        path.write_text(
            "S,v1,5.0,4.0\n"
            f"G,v1,0,0.0,{cells0}\n"
            f"G,v1,1,2.0,{cells1}\n"
        )
        streams, etc = load_trace(str(path), cat)
        assert len(streams) == 1
        assert len(streams[0].gops) == 2
        assert len(etc) == 8
        assert etc.get("v1", 1, "c4.xlarge").mean == 2.0

    def test_unknown_type_rejected(self, tmp_path):
        path = tmp_path / "bad.trace"
        path.write_text("S,v1,0.0,2.0\nG,v1,0,0.0,x9.huge:1.0:0.0\n")
        with pytest.raises(WorkloadValidationError) as err:
            load_trace(str(path), default_catalog())
        assert "x9.huge" in str(err.value)

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "bad.trace"
        path.write_text("S,v1,0.0,2.0\nG,v1,zero,0.0,g2.2xlarge:1:0\n")
        with pytest.raises(TraceError) as err:
            load_trace(str(path), default_catalog())
        assert err.value.line_no == 2

    def test_missing_type_coverage(self, tmp_path):
        path = tmp_path / "partial.trace"
        path.write_text("S,v1,0.0,2.0\nG,v1,0,0.0,g2.2xlarge:1.0:0.0\n")
        with pytest.raises(WorkloadValidationError) as err:
            load_trace(str(path), default_catalog())
        assert "c4.xlarge" in str(err.value)

    def test_g_before_s_rejected(self, tmp_path):
        path = tmp_path / "order.trace"
        path.write_text("G,v1,0,0.0,g2.2xlarge:1.0:0.0\n")
        with pytest.raises(TraceError):
            load_trace(str(path), default_catalog())

    def test_round_trip(self, tmp_path):
        cat = default_catalog()
        streams, etc = generate_workload(
            GeneratorParams(num_requests=4, duration_range=(10.0, 20.0)),
            seed=13, catalog=cat)
        path = tmp_path / "round.trace"
        save_trace(streams, etc, cat, str(path))
        loaded, loaded_etc = load_trace(str(path), cat)
        assert [s.stream_id for s in loaded] == [s.stream_id for s in streams]
        assert dict(loaded_etc.items()) == dict(etc.items())
        for orig, back in zip(streams, loaded):
            assert back.request_arrival_time == orig.request_arrival_time
            assert len(back.gops) == len(orig.gops)
