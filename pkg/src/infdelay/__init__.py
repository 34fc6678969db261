"""Integrated-semigroup toolkit for infinite-delay differential equations on ``BUC_eta``."""
from .functional import (CharMatrix, DiscreteTerm, KernelTerm, GeneralKernelTerm, LinearFunctionalSpec, SpecError,
                         apply, char_matrix, char_matrix_derivative)
from .history import (BoundaryAugmentedState, HistoryFunction, eta_norm, evaluate, gauge_transform,
                      inverse_gauge_transform)
from .resolvent import (EigenvalueProximityError, apply_S_A, apply_T_A0, decay_decomposition, integrate_forced,
                        resolvent_A, resolvent_AL)
from .solver import (ModelSpec, NumericalFailure, find_equilibrium, integrate, linear_model, linearize,
                     positivity_check, semiflow_property_check)
from .spectral import (ScanRegion, SpectralError, SpectralRoot, contour_projector, count_roots, find_roots,
                       laurent_coeffs, pole_order, projector_general, projector_simple)
from .stability import (HopfRecord, StabilityVerdict, assess_stability, continue_branch, decay_rate_empirical,
                        detect_hopf, verify_hopf_by_simulation)
from .trace import SimulationTrace, segment

__version__ = "0.1.0"
