"""Probabilistic CAD programs: stochastic scene generators, a contour renderer,
a chamfer likelihood and mixture-kernel MCMC for inverse graphics."""

from .config import ModelConfig, RenderConfig
from .inference import KernelMixture, Target, run_chain, run_chains
from .likelihood import ImageLikelihood, ObservationImage
from .programs import BodyProgram, ObjectProgram, make_program
from .trace import SceneTrace

__version__ = "0.1.0"

__all__ = ["ModelConfig", "RenderConfig", "KernelMixture", "Target", "run_chain", "run_chains",
           "ImageLikelihood", "ObservationImage", "BodyProgram", "ObjectProgram",
           "make_program", "SceneTrace"]
