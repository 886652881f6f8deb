"""Static figure rendering for the receiver-datapath simulator's CSV artifacts."""

from .render import FigureSpec, SchemaError, render
from .schema import COMPARE_COLUMNS, METRICS_COLUMNS, SWEEP_COLUMNS

__version__ = "0.1.0"
