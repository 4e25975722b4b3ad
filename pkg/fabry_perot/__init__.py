"""
Fabry-Perot package for the photon-number-resolved interferometry toolkit.
Contains the cavity optics, input states, detection statistics, metrology,
detector simulation, and fitting modules.
"""

from .base_state import InputState
from .coherent import CoherentInput
from .fock import FockInput
from .core_optics import FSR, MirrorSpec, Phase, ComplexAmp
from .photon_stats import FringeCurve, PhaseGrid, INPUT_STATES, fringe_scan, parse_input
from .detector_sim import DetectorModel, CountRecords, PulseHistogram, scan_experiment
from .fitting import FitResult, DipDiagnosis, fit_pnr_curves, fit_classical, dip_diagnostic
from .errors import FabryPerotError

__version__ = "0.1.0"
