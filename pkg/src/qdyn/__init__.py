"""Quantum-dynamics view of iterative optimisation.

Grid solvers for ``i dpsi/dt = (-D d^2/dx^2 + V) psi`` and its imaginary-time
(diffusion-reaction) counterpart, spectral tools for the resulting
ground-state convergence and energy Softmax, and a walker-based optimizer
that anneals the diffusion coefficient D.
"""
from .errors import (BudgetExhausted, ConvergenceError, EmptyExpansionError,
                     GridMismatchError, InstabilityError, InvalidBoundsError,
                     NonFinitePotentialError, NumericalError,
                     PopulationExtinctionError, QdynError, UnknownFunctionError,
                     ValidationError)
from .grid import (Grid, PotentialGrid, WaveFunction, apply_hamiltonian, build_grid,
                   discretize_potential, gaussian_packet, rayleigh_quotient)
from .evolution import (EvolutionConfig, diffusion_green_function, evolve, evolve_imaginary,
                        evolve_real, free_packet_width, packet_width)
from .spectral import (EnergySplit, Spectrum, StateExpansion, eigensolve, energy_decomposition,
                       expand_state, ground_state_limit, occupation_probabilities,
                       spectral_propagate, two_level_probability)
from .sampler import (AnnealingSchedule, Objective, OptimizationResult, OptimizerConfig,
                      WalkerPopulation, diffusion_step, dmc_reweight, drift_step,
                      estimate_gradient, optimize)
from .benchmarks import BenchmarkFunction, ExperimentPlan, builtin_function, run_plan

__version__ = "0.1.0"
