"""Rendering of twistpo CSV outputs into publication-style figures.

Strictly a consumer: every number is read from the documented CSV schemas;
the only transformations applied are axis scaling (log residue/error axes)
and the (kappa/kappa_c)^eta abscissa rescale of the comparison figure.
"""

from twistpo_plots.figures import (
    SchemaError,
    fig_profile,
    fig_rescaled_comparison,
    fig_residue_trace,
    fig_surface_difference,
    fig_surface_heatmap,
    fig_mpm_error,
    read_csv,
    render_all,
)

__all__ = [
    "SchemaError",
    "read_csv",
    "fig_profile",
    "fig_residue_trace",
    "fig_surface_heatmap",
    "fig_surface_difference",
    "fig_rescaled_comparison",
    "fig_mpm_error",
    "render_all",
]

__version__ = "0.1.0"
