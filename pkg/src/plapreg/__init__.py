"""Weighted p-Laplace regularization of elliptic problems with measure sources."""

from .kernel import (
    DEFAULT_TOLERANCES,
    RegularizationOrder,
    ScalarToleranceConfig,
    TransformTable,
    get_transform_table,
)
from .monotone import NonlinearityPair, PiecewiseLinearMonotone, preset_pair
from .mesh import DiffusionField, TriangleMesh, read_mesh, structured_mesh, write_mesh
from .measures import MeasureData, assemble_load, measure_norm
from .system import DiscreteState, ProblemInstance
from .solver import SolverOptions, SolveReport, continuation_run, fixed_point_solve, monolithic_solve
from .diagnostics import DiagnosticsOptions, DiagnosticsRecord, run_diagnostics

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_TOLERANCES",
    "RegularizationOrder",
    "ScalarToleranceConfig",
    "TransformTable",
    "get_transform_table",
    "NonlinearityPair",
    "PiecewiseLinearMonotone",
    "preset_pair",
    "DiffusionField",
    "TriangleMesh",
    "read_mesh",
    "structured_mesh",
    "write_mesh",
    "MeasureData",
    "assemble_load",
    "measure_norm",
    "DiscreteState",
    "ProblemInstance",
    "SolverOptions",
    "SolveReport",
    "continuation_run",
    "fixed_point_solve",
    "monolithic_solve",
    "DiagnosticsOptions",
    "DiagnosticsRecord",
    "run_diagnostics",
    "__version__",
]
