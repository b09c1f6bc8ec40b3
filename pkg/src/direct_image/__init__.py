"""Curvature of direct images of twisted relative canonical bundles, computed on families of flat tori."""

__version__ = "0.1.0"

from .bundle import (CurvatureTensor, HarmonicFrame, chern_D, fd_curvature_oracle, harmonic_dims,
                     holomorphic_frame, holomorphy_residual, metric_compatibility)
from .curvature import (TermBreakdown, general_curvature, hormander_bound, kbundle_curvature, positivity_verdict,
                        product_curvature, regularized_identity_check)
from .errors import (AmbiguousKernel, BidegreeError, ConfigurationError, DegenerateKahlerForm, DimensionJump,
                     DirectImageError, FluxInconsistency, FrameDegenerate, NotSolvable, OddResolution,
                     SingularCommutator, StencilIncomplete, TermContractViolated)
from .family import (BaseGrid, FamilyModel, TotalKahlerForm, check_q_semipositive, horizontal_lift,
                     total_curvature)
from .fields import BaseFunction, FieldTerm, FourierMode, WeightField
from .hodge import (commutator_inverse, dbar_minimal_solve, harmonic_projector, hodge_star, lefschetz_decompose)
from .modular import ModularFamily, ks_class, psh_check, wp_metric
from .torus import FormSection, GridForm, LineBundleData, TorusGeometry, build_fiber
