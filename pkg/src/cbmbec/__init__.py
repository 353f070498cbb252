"""Censored block model on the binary erasure channel: exact GF(2) evaluation,
replica-symmetric formula and adaptive path interpolation checks."""

from .channel import BecChannel, Coupling, PointMassMix
from .gf2 import Gf2System
from .model import Instance, ModelParams, free_entropy, generate_instance, mean_overlap, to_gf2
from .replica import h_rs_scalar, sup_h_rs

__version__ = "0.1.0"
