"""Figure rendering for obo experiment artifacts."""

from .figures import FIGURES, PlotSpec, render
from .schema import RunArtifact, SchemaError, load_runs, read_run_csv, read_run_summary

__version__ = "0.1.0"
