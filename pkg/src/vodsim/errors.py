"""Exception types shared across the simulator."""


class VodsimError(Exception):
    """Base class for all simulator errors."""


class ConfigError(VodsimError):
    """Invalid configuration or generator parameters."""


class TraceError(VodsimError):
    """Malformed workload trace file."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class EtcLookupError(VodsimError, KeyError):
    """No execution-time estimate for a (GOP, VM type) pair."""


class WorkloadValidationError(VodsimError):
    """Workload violates a structural invariant."""


class AdmissionError(VodsimError):
    """Illegal admission-control operation (duplicate admit, bad resubmit)."""


class ClusterError(VodsimError):
    """Undefined cluster state (e.g. heterogeneity of an empty cluster)."""
