"""pitwall: deterministic simulation framework for a modular autonomy stack.

Subpackages split along the stack's seams: the virtual-time message bus,
the runtime parameter store, the binary telemetry log, the standardized
module wrapper, the safety orchestration layer, the vehicle gate, and the
scenario harness with its CLI and basestation bridge.
"""

from pitwall.bus import SimBus, TopicSpec, StampedEnvelope, FaultSpec, FaultKind, SimTime, ms, sec

__all__ = [
    "SimBus",
    "TopicSpec",
    "StampedEnvelope",
    "FaultSpec",
    "FaultKind",
    "SimTime",
    "ms",
    "sec",
]

__version__ = "0.1.0"
