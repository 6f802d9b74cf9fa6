"""lyaplab: a numerical laboratory for Lyapunov spectra of group-valued cocycles."""

from .errors import (DegenerateInput, InvalidArgument, IoError, LyaplabError,
                     NonReturningSet, NumericalFailure, SchemaError)
from .liealg import (CartanVector, Flag, GroupElement, GroupKind, GroupModel,
                     RootSystemInfo, cartan_projection, dominance_leq,
                     iwasawa_cocycle, kostant_hull_check, length,
                     simple_root_gaps, wedge_log_norm)
from .drivers import (GregDriver, IIDDriver, MarkovDriver, RotationDriver,
                      TrajectoryCursor, cocycle_product, sample_initial,
                      step_backward, step_forward)
from .engine import (EstimatorConfig, SpectrumEstimate, combined_stderr,
                     continuity_sweep, estimate_block_svd,
                     estimate_iwasawa_formula, estimate_kingman_qr,
                     kesten_drift_check, simplicity_report, track_forward_flag)
from .transforms import (CylinderMembership, SuspensionGreg, conjugate,
                         cross_section_greg, discretize_flow, induce,
                         roof_integral)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
