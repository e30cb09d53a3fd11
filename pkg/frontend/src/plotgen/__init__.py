"""Figure generation for the simulator's CSV output: multi-panel energy-error
figures with step-size envelopes, and log-log convergence plots."""
from .figures import (PanelSpec, build_convergence_figure, build_energy_figure,
                      fit_order, render_convergence, render_energy_panels)
from .records import RecordFile, SchemaError, read_convergence, read_records

__version__ = "0.1.0"
