"""toriclab: exact-diagonalization laboratory for the toric code with string tension."""

__version__ = "0.1.0"

from .lattice import (PauliMask, Region, TorusLattice, build_lattice, loop_mask,
                      plaq_mask, ring_regions, star_mask, wilson_region)
from .basis import SectorBasis, classify, enumerate_sector
from .model import (IsingLattice, ModelParams, PerturbationField, apply_h0,
                    apply_ising, apply_perturbed, h0_action, ising_action,
                    perturbed_action, sample_field)
from .solver import (EigenResult, GapSeries, SolverError, dense_symmetric_eig,
                     gap_series, lanczos_lowest)
from .observables import (ObservableRecord, PeakResult, ReducedDensityMatrix,
                          RingCalibration, calibrate_ring, entanglement_entropy,
                          finite_difference, magnetization_z, peak_analysis,
                          reduced_density_matrix, state_fidelity,
                          topological_entropy, von_neumann_entropy,
                          wilson_expectation)
from .dynamics import EvolutionTrace, adiabaticity_dip, evolve, sector_leakage
from .runner import (EnsembleResult, ExperimentConfig, SweepResult, run_dynamics,
                     run_ensemble, run_ising_control, run_sweep)
from .validate import ValidationReport, validate
from .kernels import BACKEND
