"""Per-function energy footprints for serverless platforms.

Disaggregates a machine's power signal into per-function power with
nonnegative least squares, refines it online with a Kalman-style filter, and
splits shared control-plane and idle energy fairly across functions.
"""

from faasmeter._kernels import BACKEND
from faasmeter.attribution import FootprintSpectrum, build_spectrum, split_control_plane, split_idle
from faasmeter.capping import CapPolicy, QueueDecision, admit, run_capped
from faasmeter.disagg import ContributionMatrix, build_contributions, solve_combined, solve_full, solve_no_idle
from faasmeter.kalman import KalmanParams, kalman_step, run_online
from faasmeter.pipeline import ProfileConfig, profile
from faasmeter.signal import apply_skew, estimate_skew
from faasmeter.simulator import GroundTruth, Scenario, load_scenario, simulate, synthesize_power
from faasmeter.traces import InvocationTrace, PowerTrace, read_trace, resample, write_trace

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CapPolicy",
    "ContributionMatrix",
    "FootprintSpectrum",
    "GroundTruth",
    "InvocationTrace",
    "KalmanParams",
    "PowerTrace",
    "ProfileConfig",
    "QueueDecision",
    "Scenario",
    "admit",
    "apply_skew",
    "build_contributions",
    "build_spectrum",
    "estimate_skew",
    "kalman_step",
    "load_scenario",
    "profile",
    "read_trace",
    "resample",
    "run_capped",
    "run_online",
    "simulate",
    "solve_combined",
    "solve_full",
    "solve_no_idle",
    "split_control_plane",
    "split_idle",
    "synthesize_power",
    "write_trace",
]
