"""Boundary-layer sliding-mode observers: synthesis, simulation and disturbance reconstruction."""
from .descriptor import DescriptorSystem, PlantModel, build_descriptor, compute_T, verify_structure_identity
from .errors import BLSMOError
from .multipliers import MultiplierSpec, check_iqc
from .synthesis import ObserverGains, SynthesisConfig, synthesize, ultimate_bound

__version__ = "0.1.0"
