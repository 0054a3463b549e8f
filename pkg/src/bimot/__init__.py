"""Rate-equation and kinetic Monte Carlo simulator for multi-frequency
magneto-optical traps of multilevel atoms and molecules."""
from .angular import AngularMomentumError, HalfInt, clebsch_gordan, line_strength
from .fields import (BeamComponent, LaserBeam, MagneticFieldMap, Schedule, mot_beams_1d, mot_beams_3d,
                     parse_polarization, polarization_components, restoring_handedness)
from .kmc import ForceEstimate, TrajectoryState, estimate_force, simulate_switched, simulate_trajectory
from .rates import RateMatrix, detuning, excitation_rate, rate_matrix
from .scheme import PRESETS, LevelScheme, SchemeError, build_preset, validate
from .steady import (DarkManifoldError, NumericalFailure, force, force_low_sat, steady_force,
                     steady_populations)
from .sweep import ForceMap, sweep, trap_metrics
from .system import MOTSystem

__version__ = "0.1.0"
