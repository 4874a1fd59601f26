"""Render fluctlab result tables into the figure analogs.

Consumes only the CSV contract (metadata preamble + header + rows) and
knows nothing about how the tables were produced.
"""

__version__ = "0.1.0"

from .spec import FIGURES, PlotSpec
from .render import RenderError, load_table, make_figure, render

__all__ = ["FIGURES", "PlotSpec", "RenderError", "load_table", "make_figure", "render", "__version__"]
