"""Modified tamed schemes for SDEs with super-linear drift.

Submodules: :mod:`~tamed_sde.taming` (drift transforms),
:mod:`~tamed_sde.problems` (test problems), :mod:`~tamed_sde.schemes`
(integrators), :mod:`~tamed_sde.montecarlo` (coupled ensembles),
:mod:`~tamed_sde.analysis` (error and order estimates) and
:mod:`~tamed_sde.sampler` (T-SGLD).
"""

__version__ = "0.1.0"

from .taming import TamingConfig, cutoff_psi, tame_classic, tame_modified, truncate_drift
from .problems import builtin_problem, test_function
from .schemes import SCHEMES, StepInput, integrate_path, step
from .montecarlo import SeedSpec, coarsen, simulate_coupled
from .analysis import fit_order, strong_error, weak_error
from .sampler import SamplerConfig, run_chain, tsgld_step
