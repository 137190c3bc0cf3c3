"""Experiment orchestration: config files, sweeps, replications, presets.

A config describes one simulated system (workload source, catalog, scheduler,
provisioning mode, QoS band). run_experiment sweeps the request count,
repeats each point with consecutive seeds, and aggregates means with 95%
confidence half-widths (normal approximation).
"""

from __future__ import annotations

import csv
import json
import math
import os
import statistics
from dataclasses import asdict, dataclass, field, replace

import yaml

from .admission import UtilityParams
from .engine import (
    DynamicProvisioning,
    MetricsReport,
    ProvisioningMode,
    SimParams,
    StaticProvisioning,
    run,
)
from .errors import ConfigError
from .provisioner import ProvisionerParams, QosBand
from .scheduler import Heuristic
from .workload import (
    GeneratorParams,
    VmCatalog,
    VmType,
    default_catalog,
    load_trace,
)

Z_95 = 1.96

SWEEP_DEFAULT = list(range(100, 1001, 100))

# Metrics aggregated into the sweep summary.
SUMMARY_METRICS = ("startup_delay", "deadline_miss_rate", "total_cost")


@dataclass(slots=True)
class ExperimentConfig:
    label: str = "experiment"
    trace_path: str | None = None
    generator: GeneratorParams | None = None
    catalog: VmCatalog = field(default_factory=default_catalog)
    scheduler: Heuristic = Heuristic.MMUT
    provisioning: ProvisioningMode = field(default_factory=DynamicProvisioning)
    qos: QosBand = field(default_factory=QosBand)
    provisioner: ProvisionerParams = field(default_factory=ProvisionerParams)
    utility: UtilityParams = field(default_factory=UtilityParams)
    cycle_seconds: float = 3600.0
    merger_grace_factor: float = 3.0
    startup_allowance: float = 10.0
    failure_prob: float = 0.0
    remedial_enabled: bool = True
    replications: int = 30
    base_seed: int = 1
    sweep: list[int] = field(default_factory=lambda: list(SWEEP_DEFAULT))

    def validate(self) -> None:
        if (self.trace_path is None) == (self.generator is None):
            raise ConfigError(
                "exactly one of trace_path or generator must be set"
            )
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if not self.sweep:
            raise ConfigError("sweep must be non-empty")
        if self.trace_path is not None and len(self.sweep) > 1:
            raise ConfigError("a trace workload cannot sweep num_requests")
        if self.generator is not None:
            self.generator.validate(self.catalog)
        if isinstance(self.provisioning, StaticProvisioning):
            if sum(self.provisioning.counts.values()) <= 0:
                raise ConfigError("static provisioning needs at least one VM")
            for tid in self.provisioning.counts:
                self.catalog.get(tid)
        self.sim_params().validate()

    def sim_params(self) -> SimParams:
        return SimParams(
            qos=self.qos,
            provisioner=self.provisioner,
            utility=self.utility,
            cycle_seconds=self.cycle_seconds,
            merger_grace_factor=self.merger_grace_factor,
            startup_allowance=self.startup_allowance,
            failure_prob=self.failure_prob,
            remedial_enabled=self.remedial_enabled,
        )


@dataclass(slots=True)
class RunRecord:
    """Metrics of one replication at one sweep point."""

    num_requests: int
    replication: int
    seed: int
    startup_delay: float
    deadline_miss_rate: float
    total_cost: float
    makespan: float
    delivered: int
    peak_vms: int

    @classmethod
    def from_report(cls, num_requests: int, replication: int,
                    report: MetricsReport) -> "RunRecord":
        return cls(
            num_requests=num_requests,
            replication=replication,
            seed=report.seed,
            startup_delay=report.avg_startup_delay,
            deadline_miss_rate=report.deadline_miss_rate,
            total_cost=report.total_cost,
            makespan=report.makespan,
            delivered=report.delivered_gops,
            peak_vms=report.peak_vms,
        )


def mean_ci(values: list[float]) -> tuple[float, float]:
    """Sample mean and 95% half-width under the normal approximation."""
    mean = statistics.fmean(values)
    if len(values) < 2:
        return mean, 0.0
    half = Z_95 * statistics.stdev(values) / math.sqrt(len(values))
    return mean, half


@dataclass(slots=True)
class SweepResult:
    label: str
    points: list[dict]          # one row per (num_requests, metric)
    runs: list[RunRecord]

    def metric(self, num_requests: int, name: str) -> tuple[float, float, float]:
        for row in self.points:
            if row["num_requests"] == num_requests and row["metric"] == name:
                return row["mean"], row["ci_low"], row["ci_high"]
        raise KeyError((num_requests, name))

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "points": self.points,
            "runs": [asdict(r) for r in self.runs],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SweepResult":
        return cls(
            label=data["label"],
            points=[dict(p) for p in data["points"]],
            runs=[RunRecord(**r) for r in data["runs"]],
        )


def run_experiment(config: ExperimentConfig) -> SweepResult:
    """Run the full sweep x replication grid described by the config."""
    config.validate()
    records: list[RunRecord] = []
    for num_requests in config.sweep:
        for rep in range(config.replications):
            seed = config.base_seed + rep
            records.append(RunRecord.from_report(
                num_requests, rep, run_once(config, num_requests, seed)))

    points = []
    for num_requests in config.sweep:
        at_point = [r for r in records if r.num_requests == num_requests]
        for metric in SUMMARY_METRICS:
            values = [getattr(r, metric) for r in at_point]
            mean, half = mean_ci(values)
            points.append({
                "num_requests": num_requests,
                "metric": metric,
                "mean": mean,
                "ci_low": mean - half,
                "ci_high": mean + half,
            })
    return SweepResult(label=config.label, points=points, runs=records)


def run_once(config: ExperimentConfig, num_requests: int,
             seed: int) -> MetricsReport:
    """One simulation run at one sweep point."""
    if config.trace_path is not None:
        streams, etc = load_trace(config.trace_path, config.catalog)
    else:
        from .workload import generate_workload

        params = replace(config.generator, num_requests=num_requests)
        streams, etc = generate_workload(params, seed, config.catalog)
    return run((streams, etc), config.catalog, config.scheduler,
               config.provisioning, config.sim_params(), seed)


# -- presets ----------------------------------------------------------------

PRESET_NAMES = ("static_vs_dynamic", "utility_vs_traditional",
                "remedial_ablation", "hetero_vs_homo")

# Preset workloads keep durations moderate so a full sweep stays desk-scale.
_PRESET_GENERATOR = GeneratorParams(num_requests=100,
                                    duration_range=(10.0, 180.0))


def preset(name: str) -> list[tuple[str, ExperimentConfig]]:
    """Named experiment families mirroring the headline comparisons."""
    if name not in PRESET_NAMES:
        raise ConfigError(
            f"unknown preset {name!r}; valid: {', '.join(PRESET_NAMES)}"
        )
    base = ExperimentConfig(generator=_PRESET_GENERATOR)
    configs: list[tuple[str, ExperimentConfig]] = []
    if name == "static_vs_dynamic":
        for n in range(5, 11):
            configs.append((
                f"static_{n}_gpu",
                replace(base, label=f"static_{n}_gpu",
                        provisioning=StaticProvisioning({"g2.2xlarge": n})),
            ))
        configs.append(("dynamic",
                        replace(base, label="dynamic",
                                provisioning=DynamicProvisioning())))
    elif name == "utility_vs_traditional":
        for h in Heuristic:
            configs.append((
                h.value.lower(),
                replace(base, label=h.value.lower(), scheduler=h),
            ))
    elif name == "remedial_ablation":
        configs.append(("remedial_on",
                        replace(base, label="remedial_on",
                                remedial_enabled=True)))
        configs.append(("remedial_off",
                        replace(base, label="remedial_off",
                                remedial_enabled=False)))
    else:  # hetero_vs_homo
        configs.append(("heterogeneous",
                        replace(base, label="heterogeneous")))
        for tid, tag in (("m4.large", "general"),
                         ("r3.xlarge", "memory_opt"),
                         ("g2.2xlarge", "gpu")):
            full = default_catalog()
            single = VmCatalog([full.get(tid)])
            configs.append((
                f"homogeneous_{tag}",
                replace(base, label=f"homogeneous_{tag}", catalog=single,
                        provisioner=replace(base.provisioner,
                                            remedial_type=tid)),
            ))
    return configs


# -- config file round-trip ---------------------------------------------------

def config_to_dict(config: ExperimentConfig) -> dict:
    workload: dict = {}
    if config.trace_path is not None:
        workload["trace"] = config.trace_path
    else:
        g = config.generator
        workload["generator"] = {
            "horizon_seconds": g.horizon_seconds,
            "duration_range": list(g.duration_range),
            "gop_playback_seconds": g.gop_playback_seconds,
            "base_exec_range": list(g.base_exec_range),
        }
    if isinstance(config.provisioning, StaticProvisioning):
        provisioning = {"mode": "static",
                        "counts": dict(config.provisioning.counts)}
    else:
        provisioning = {"mode": "dynamic"}
        if config.provisioning.initial is not None:
            provisioning["initial"] = dict(config.provisioning.initial)
    return {
        "label": config.label,
        "workload": workload,
        "catalog": [
            {"type_id": t.type_id, "hourly_cost": t.hourly_cost,
             "label": t.label}
            for t in config.catalog
        ],
        "scheduler": config.scheduler.value,
        "provisioning": provisioning,
        "qos": {"alpha": config.qos.alpha, "beta": config.qos.beta},
        "provisioner": {
            "k_suit": config.provisioner.k_suit,
            "k_demand": config.provisioner.k_demand,
            "omega_th": config.provisioner.omega_th,
            "rho_th": config.provisioner.rho_th,
            "eta_th": config.provisioner.eta_th,
            "theta": config.provisioner.theta,
            "period": config.provisioner.period,
            "remedial_type": config.provisioner.remedial_type,
        },
        "utility": {"c": config.utility.c},
        "engine": {
            "cycle_seconds": config.cycle_seconds,
            "merger_grace_factor": config.merger_grace_factor,
            "startup_allowance": config.startup_allowance,
            "failure_prob": config.failure_prob,
            "remedial_enabled": config.remedial_enabled,
        },
        "replications": config.replications,
        "base_seed": config.base_seed,
        "sweep": list(config.sweep),
    }


def config_from_dict(data: dict) -> ExperimentConfig:
    try:
        workload = data["workload"]
    except (KeyError, TypeError):
        raise ConfigError("config needs a 'workload' section") from None
    trace_path = workload.get("trace")
    generator = None
    if "generator" in workload:
        g = workload["generator"]
        generator = GeneratorParams(
            num_requests=1,
            horizon_seconds=g.get("horizon_seconds", 3600.0),
            duration_range=tuple(g.get("duration_range", (10.0, 600.0))),
            gop_playback_seconds=g.get("gop_playback_seconds", 2.0),
            base_exec_range=tuple(g.get("base_exec_range", (0.8, 2.4))),
        )
    catalog = default_catalog()
    if "catalog" in data:
        catalog = VmCatalog([
            VmType(t["type_id"], t["hourly_cost"], t.get("label", ""))
            for t in data["catalog"]
        ])
    try:
        scheduler = Heuristic.parse(data.get("scheduler", "MMUT"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    prov_data = data.get("provisioning", {"mode": "dynamic"})
    mode = prov_data.get("mode", "dynamic")
    if mode == "static":
        provisioning: ProvisioningMode = StaticProvisioning(
            {k: int(v) for k, v in prov_data.get("counts", {}).items()})
    elif mode == "dynamic":
        initial = prov_data.get("initial")
        provisioning = DynamicProvisioning(
            {k: int(v) for k, v in initial.items()} if initial else None)
    else:
        raise ConfigError(f"unknown provisioning mode {mode!r}")
    qos_data = data.get("qos", {})
    prm = data.get("provisioner", {})
    engine = data.get("engine", {})
    return ExperimentConfig(
        label=data.get("label", "experiment"),
        trace_path=trace_path,
        generator=generator,
        catalog=catalog,
        scheduler=scheduler,
        provisioning=provisioning,
        qos=QosBand(alpha=qos_data.get("alpha", 0.05),
                    beta=qos_data.get("beta", 0.1)),
        provisioner=ProvisionerParams(
            k_suit=prm.get("k_suit", 0.5),
            k_demand=prm.get("k_demand", 0.3),
            omega_th=prm.get("omega_th", 0.25),
            rho_th=prm.get("rho_th", 0.70),
            eta_th=prm.get("eta_th", 0.4),
            theta=prm.get("theta", 10.0),
            period=prm.get("period", 60.0),
            remedial_type=prm.get("remedial_type", "c4.xlarge"),
        ),
        utility=UtilityParams(c=data.get("utility", {}).get("c", 0.1)),
        cycle_seconds=engine.get("cycle_seconds", 3600.0),
        merger_grace_factor=engine.get("merger_grace_factor", 3.0),
        startup_allowance=engine.get("startup_allowance", 10.0),
        failure_prob=engine.get("failure_prob", 0.0),
        remedial_enabled=engine.get("remedial_enabled", True),
        replications=int(data.get("replications", 30)),
        base_seed=int(data.get("base_seed", 1)),
        sweep=[int(v) for v in data.get("sweep", SWEEP_DEFAULT)],
    )


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config parse error in {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping")
    config = config_from_dict(data)
    config.validate()
    return config


def save_config(config: ExperimentConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(config_to_dict(config), fh, sort_keys=False)


# -- emission -----------------------------------------------------------------

RUN_COLUMNS = ("num_requests", "replication", "seed", "startup_delay",
               "deadline_miss_rate", "total_cost", "makespan", "delivered",
               "peak_vms")


def emit(result: SweepResult, fmt: str, out_dir: str) -> list[str]:
    """Write summary and raw per-run tables; returns the paths written."""
    if not result.points:
        raise ConfigError("nothing to emit: empty results")
    if fmt not in ("csv", "json"):
        raise ConfigError(f"unknown format {fmt!r}; valid: csv, json")
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    if fmt == "csv":
        summary_path = os.path.join(out_dir, f"{result.label}_summary.csv")
        with open(summary_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["num_requests", "metric", "mean",
                             "ci_low", "ci_high"])
            for row in result.points:
                writer.writerow([row["num_requests"], row["metric"],
                                 repr(row["mean"]), repr(row["ci_low"]),
                                 repr(row["ci_high"])])
        runs_path = os.path.join(out_dir, f"{result.label}_runs.csv")
        with open(runs_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(RUN_COLUMNS)
            for record in result.runs:
                row = asdict(record)
                writer.writerow([repr(row[c]) if isinstance(row[c], float)
                                 else row[c] for c in RUN_COLUMNS])
        paths = [summary_path, runs_path]
    else:
        json_path = os.path.join(out_dir, f"{result.label}.json")
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(result.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        paths = [json_path]
    return paths
