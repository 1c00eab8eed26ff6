"""Exact event-driven simulation of a 1-D two-species particle system.

Particles of the same species repel and particles of opposite species
attract through the Newtonian kernel ``|x|``; all particles carry mass
``1/N``.  Velocities are piecewise constant, so the dynamics is integrated
exactly from collision to collision.
"""
from .engine import (
    EngineInvariantError,
    Event,
    ParticleState,
    SimulationRecord,
    VelocityAssignment,
    initial_state,
    next_event,
    run,
    step,
    velocities,
)
from .measures import (
    EmpiricalMeasure,
    Mixture,
    PiecewiseDensity,
    TabulatedCdf,
    Uniform,
    discretize,
    piecewise_from_state,
    wasserstein_p,
)

__all__ = [
    "EngineInvariantError",
    "Event",
    "ParticleState",
    "SimulationRecord",
    "VelocityAssignment",
    "initial_state",
    "next_event",
    "run",
    "step",
    "velocities",
    "EmpiricalMeasure",
    "Mixture",
    "PiecewiseDensity",
    "TabulatedCdf",
    "Uniform",
    "discretize",
    "piecewise_from_state",
    "wasserstein_p",
]
