"""On-demand video transcoding simulator: utility-prioritized GOP scheduling
on a self-configuring heterogeneous VM cluster."""

from .admission import (
    AdmissionControl,
    BatchQueue,
    UtilityParams,
    VirtualQueue,
    refresh_virtual_queue,
    utility,
)
from .engine import (
    DynamicProvisioning,
    MetricsReport,
    SimParams,
    StaticProvisioning,
    VmInstance,
    run,
)
from .experiment import (
    ExperimentConfig,
    SweepResult,
    emit,
    load_config,
    preset,
    run_experiment,
)
from .provisioner import (
    ClusterComposition,
    DmrTracker,
    ProvisionerParams,
    QosBand,
    allocation_policy,
    deallocation_policy,
    demand,
    gop_type,
    heterogeneity,
    remedial_policy,
    suitability,
)
from .scheduler import (
    Assignment,
    Heuristic,
    VmQueueState,
    estimate_completion,
    map_gops,
    map_mm,
    map_mmu,
    map_msd,
    map_utility,
    phase1_pairs,
)
from .workload import (
    EtcMatrix,
    ExecEstimate,
    GeneratorParams,
    GopTask,
    VideoStream,
    VmCatalog,
    VmType,
    default_catalog,
    generate_workload,
    load_trace,
    sample_exec_time,
    save_trace,
    worst_case_exec,
)

__version__ = "0.1.0"
