"""Multi-bubble reduction calculus for the subcritical prescribed scalar curvature problem on S^n."""
__version__ = "0.1.0"

from .bubbles import BubbleParams, Configuration
from .constants import ConstantsTable, build_table
from .functional import eval_functional, eval_reduced_gradient, eval_reduced_hessian
from .geometry import KField, SpherePoint
from .quadrature import QuadratureSpec

__all__ = ["BubbleParams", "Configuration", "ConstantsTable", "KField", "QuadratureSpec",
           "SpherePoint", "build_table", "eval_functional", "eval_reduced_gradient",
           "eval_reduced_hessian", "__version__"]
