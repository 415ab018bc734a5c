"""Switch-fabric simulator with DSCP-based slice orchestration for RAN flows."""
from slicelan.fabric import Fabric, Hop, Path, build_fabric
from slicelan.orchestrator import Orchestrator, admit_flow, discover_path
from slicelan.traffic import FlowSpec, PolicySet, simulate

__all__ = ["Fabric", "FlowSpec", "Hop", "Orchestrator", "Path", "PolicySet", "admit_flow",
           "build_fabric", "discover_path", "simulate"]
__version__ = "0.1.0"
