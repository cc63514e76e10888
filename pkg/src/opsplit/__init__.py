"""Monotone operator splitting: resolvents, frugal fixed-point encodings and certificates."""
from . import certificate, counterexamples, engine, experiments, operators, splittings
from .engine import IterationConfig, IterationResult, IterationTrace, Status, iterate
from .errors import OpsplitError
from .splittings import DYS, PDHG3, PPM, PPXA, Family, Ryu3, drs, prs

__version__ = "0.1.0"

__all__ = ["certificate", "counterexamples", "engine", "experiments", "operators", "splittings",
           "IterationConfig", "IterationResult", "IterationTrace", "Status", "iterate",
           "OpsplitError", "DYS", "PDHG3", "PPM", "PPXA", "Family", "Ryu3", "drs", "prs"]
