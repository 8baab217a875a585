"""Figure rendering for pairerr artifacts.

This package is deliberately file-driven: it reads the documented CSV
schemas and renders exactly the numbers they contain, never recomputing
any statistic. It does not import the estimation package.
"""

from .figures import plot_bt, plot_fit, plot_scalability
from .readers import SchemaError

__all__ = ["plot_bt", "plot_fit", "plot_scalability", "SchemaError"]
