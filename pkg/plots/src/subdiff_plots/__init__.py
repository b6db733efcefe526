"""Figure rendering for subdiff experiment outputs.

Consumes only the public file contract (curves.csv + summary.json) and
draws the learning-curve comparison figures with flat theory overlays.
"""

__version__ = "0.1.0"

from subdiff_plots.errors import MissingSeries, SchemaMismatch
from subdiff_plots.render import FigureSpec, render_comparison

__all__ = ["FigureSpec", "render_comparison", "SchemaMismatch", "MissingSeries"]
