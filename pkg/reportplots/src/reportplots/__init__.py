from .plots import KINDS, PlotSpec, SchemaError, aggregate_over_seeds, render

__all__ = ["KINDS", "PlotSpec", "SchemaError", "aggregate_over_seeds", "render"]
