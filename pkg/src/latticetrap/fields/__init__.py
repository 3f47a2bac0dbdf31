"""Electrostatic basis fields from the analytic and grid solvers."""

from latticetrap.fields.analytic import (
    AnalyticFieldSolver,
    analytic_basis,
    analytic_fields,
    analytic_gradient_hessian,
    solid_angle_potential,
)
from latticetrap.fields.base import (
    BasisField,
    FieldSample,
    FieldSet,
    pseudo_coefficient,
    pseudopotential,
    pseudopotential_gradient,
    static_gradient,
    static_hessian,
    static_potential,
    total_gradient,
    total_hessian,
    total_potential,
)
from latticetrap.fields.grid import (
    GridFieldSolver,
    GridProblem,
    GridSpec,
    LaplaceSystem,
    fd_laplace_solve,
    grid_fields,
)
from latticetrap.fields.io import export_field_samples, load_fields, save_fields


def solve_fields(layout, backend: str = "analytic", grid: GridSpec | None = None, **kw) -> FieldSet:
    """Solve every basis of ``layout`` with the chosen backend."""
    if backend == "analytic":
        return analytic_fields(layout)
    if backend == "grid":
        return grid_fields(layout, grid or GridSpec.for_layout(layout, **kw))
    raise ValueError(f"unknown backend {backend!r} (expected 'analytic' or 'grid')")


__all__ = [name for name in dir() if not name.startswith("_")]
