"""Coupling of Brownian drivers, Wiener chaos, SDE/BSDE coupling distances and Besov-type functionals."""
from .wiener import (BrownianBundle, CouplingFunction, TimeGrid, couple, couple_increments, coupling_l2_mass,
                     make_grid, sample_bundle)
from .chaos import (ChaosSpectrum, ChaosVariable, Kernel, coupled_second_moment_exact, d12_ratio_profile,
                    evaluate, lemma_multiplier_bounds, malliavin_norm_exact)
from .sde import PathEnsemble, SdeModel, SweepResult, coupled_solve, coupled_sweep, euler_solve, lamperti_cir
from .presets import PRESETS, CounterexampleSpec, default_counterexample, make_preset
from .estimators import (BesovSpec, LpEstimate, RateFit, besov_phi_alpha, bmo_s2_norm, fefferman_check,
                         gr_inequality_check, interpolation_functional, lp_norm, lp_sup_distance, rate_fit)
from .bsde import BsdeModel, BsdeSolution, bsde_coupling_distance, bsde_variation, lsmc_solve

__version__ = "0.1.0"
