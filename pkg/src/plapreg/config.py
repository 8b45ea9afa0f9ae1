"""Run configuration: flat ``key = value`` ASCII files with bracketed sections.

Repeated keys accumulate (one ``dirac = x y w`` line per atom).  Comments
start with ``#``.  Recognized sections are ``[mesh]``, ``[diffusion]``,
``[measure]``, ``[nonlinearity]``, ``[solver]``, and ``[diagnostics]``; the
problem preset, exponent, eps schedule, and output directory live at the top
level.  Every value is validated against the module-level invariants before
any solve starts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diagnostics import DiagnosticsOptions
from .kernel import RegularizationOrder, ScalarToleranceConfig
from .measures import MeasureData, MeasureError
from .mesh import DiffusionField, MeshError, TriangleMesh, read_mesh, structured_mesh
from .monotone import (
    PRESET_NAMES,
    NonlinearityPair,
    PiecewiseLinearMonotone,
    normalize_pair,
    preset_pair,
)
from .solver import STRATEGIES, SolverOptions
from .system import ProblemInstance

__all__ = ["ConfigError", "RunConfig", "load_config", "build_instance", "build_mesh"]


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


_EXPR_NAMES = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log,
    "sqrt": np.sqrt, "abs": np.abs, "pi": np.pi, "e": np.e,
    "minimum": np.minimum, "maximum": np.maximum, "where": np.where,
    "hypot": np.hypot,
}


def _eval_expr(expr: str, x: np.ndarray, y: np.ndarray, what: str):
    try:
        code = compile(expr, f"<{what}>", "eval")
        return eval(code, {"__builtins__": {}}, {**_EXPR_NAMES, "x": x, "y": y})
    except Exception as exc:
        raise ConfigError(f"{what}: cannot evaluate expression {expr!r}: {exc}") from exc


@dataclass
class RunConfig:
    problem: str = "linear"
    p: float = 3.0
    eps_schedule: list = field(default_factory=lambda: [1e-2])
    output: Path = Path("out")
    figures: bool = True
    on_failure: str = "abort"

    mesh_shape: str = "unit_square"
    mesh_refinement: int = 16
    mesh_refinements: list | None = None
    mesh_file: Path | None = None

    diffusion_tensor: tuple = (1.0, 0.0, 1.0)
    diffusion_regions: list = field(default_factory=list)

    diracs: list = field(default_factory=list)
    lines: list = field(default_factory=list)
    ac_expr: str | None = None

    latent_heat: float = 1.0
    custom_beta: tuple | None = None
    custom_zeta: tuple | None = None

    solver: SolverOptions = field(default_factory=SolverOptions)
    diagnostics: DiagnosticsOptions = field(default_factory=DiagnosticsOptions)
    scalar_cfg: ScalarToleranceConfig = field(default_factory=ScalarToleranceConfig)


class _Items:
    """Parsed (section, key) -> list of raw string values."""

    def __init__(self, path: Path):
        self.data: dict[tuple[str, str], list[str]] = {}
        section = ""
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                section = line[1:-1].strip().lower()
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, value = line.split("=", 1)
            self.data.setdefault((section, key.strip().lower()), []).append(value.strip())
        self.consumed: set[tuple[str, str]] = set()

    def get(self, section: str, key: str, default=None) -> str | None:
        vals = self.data.get((section, key))
        if vals is None:
            return default
        self.consumed.add((section, key))
        if len(vals) > 1:
            raise ConfigError(f"[{section}] {key}: given {len(vals)} times, expected once")
        return vals[0]

    def get_all(self, section: str, key: str) -> list[str]:
        self.consumed.add((section, key))
        return self.data.get((section, key), [])

    def unknown(self) -> list[str]:
        return [f"[{s}] {k}" if s else k for (s, k) in self.data if (s, k) not in self.consumed]


def _as_float(raw: str, where: str) -> float:
    try:
        v = float(raw)
    except ValueError as exc:
        raise ConfigError(f"{where}: expected a number, got {raw!r}") from exc
    if not math.isfinite(v):
        raise ConfigError(f"{where}: value must be finite")
    return v


def _as_int(raw: str, where: str) -> int:
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"{where}: expected an integer, got {raw!r}") from exc


def _as_bool(raw: str, where: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"{where}: expected a boolean, got {raw!r}")


def _as_floats(raw: str, where: str, count: int | None = None) -> list[float]:
    parts = raw.replace(",", " ").split()
    vals = [_as_float(v, where) for v in parts]
    if count is not None and len(vals) != count:
        raise ConfigError(f"{where}: expected {count} numbers, got {len(vals)}")
    return vals


def load_config(path) -> RunConfig:
    """Parse and validate a config file; raises ``ConfigError`` with field context."""
    items = _Items(Path(path))
    cfg = RunConfig()

    cfg.problem = (items.get("", "problem", "linear") or "linear").lower()
    if cfg.problem not in PRESET_NAMES + ("custom",):
        raise ConfigError(f"problem: unknown preset {cfg.problem!r}")
    cfg.p = _as_float(items.get("", "p", "3.0"), "p")
    if cfg.p <= 2.0:
        raise ConfigError(f"p: must be > 2, got {cfg.p:g}")

    sched_raw = items.get("", "eps_schedule")
    eps_raw = items.get("", "eps")
    if sched_raw is not None and eps_raw is not None:
        raise ConfigError("give either eps or eps_schedule, not both")
    if sched_raw is not None:
        cfg.eps_schedule = _as_floats(sched_raw, "eps_schedule")
    elif eps_raw is not None:
        cfg.eps_schedule = [_as_float(eps_raw, "eps")]
    if not cfg.eps_schedule or any(e <= 0.0 for e in cfg.eps_schedule):
        raise ConfigError("eps schedule entries must be > 0")
    if any(b >= a for a, b in zip(cfg.eps_schedule, cfg.eps_schedule[1:])):
        raise ConfigError("eps_schedule must be strictly decreasing")

    out_raw = items.get("", "output")
    if out_raw is not None:
        cfg.output = Path(out_raw)
    fig_raw = items.get("", "figures")
    if fig_raw is not None:
        cfg.figures = _as_bool(fig_raw, "figures")
    cfg.on_failure = (items.get("", "on_failure", "abort") or "abort").lower()
    if cfg.on_failure not in ("abort", "continue"):
        raise ConfigError("on_failure: expected 'abort' or 'continue'")

    # [mesh]
    mesh_file = items.get("mesh", "file")
    cfg.mesh_shape = (items.get("mesh", "shape", "unit_square") or "unit_square").lower()
    if cfg.mesh_shape not in ("unit_square", "unit_disk"):
        raise ConfigError(f"[mesh] shape: unknown shape {cfg.mesh_shape!r}")
    cfg.mesh_refinement = _as_int(items.get("mesh", "refinement", "16"), "[mesh] refinement")
    refs = items.get("mesh", "refinements")
    cfg.mesh_refinements = (
        [_as_int(v, "[mesh] refinements") for v in refs.replace(",", " ").split()] if refs else None
    )
    if mesh_file is not None:
        cfg.mesh_file = Path(mesh_file)
        if cfg.mesh_refinements is not None:
            raise ConfigError("[mesh] refinements cannot be combined with a mesh file")
    if cfg.mesh_refinement < 1 or (cfg.mesh_refinements and any(r < 1 for r in cfg.mesh_refinements)):
        raise ConfigError("[mesh] refinement values must be >= 1")

    # [diffusion]
    iso = items.get("diffusion", "isotropic")
    tensor = items.get("diffusion", "tensor")
    if iso is not None and tensor is not None:
        raise ConfigError("[diffusion]: give either isotropic or tensor, not both")
    if iso is not None:
        v = _as_float(iso, "[diffusion] isotropic")
        if v <= 0.0:
            raise ConfigError("[diffusion] isotropic: must be > 0")
        cfg.diffusion_tensor = (v, 0.0, v)
    elif tensor is not None:
        a11, a12, a22 = _as_floats(tensor, "[diffusion] tensor", 3)
        cfg.diffusion_tensor = (a11, a12, a22)
    for raw in items.get_all("diffusion", "region"):
        if ";" not in raw:
            raise ConfigError("[diffusion] region: expected '<expr> ; a11 a12 a22'")
        expr, tens = raw.split(";", 1)
        a11, a12, a22 = _as_floats(tens, "[diffusion] region", 3)
        cfg.diffusion_regions.append((expr.strip(), (a11, a12, a22)))

    # [measure]
    for raw in items.get_all("measure", "dirac"):
        x, y, w = _as_floats(raw, "[measure] dirac", 3)
        cfg.diracs.append(((x, y), w))
    for raw in items.get_all("measure", "line"):
        x0, y0, x1, y1, rho = _as_floats(raw, "[measure] line", 5)
        cfg.lines.append(((x0, y0), (x1, y1), rho))
    cfg.ac_expr = items.get("measure", "ac")

    # [nonlinearity]
    lat = items.get("nonlinearity", "latent_heat")
    if lat is not None:
        cfg.latent_heat = _as_float(lat, "[nonlinearity] latent_heat")
        if cfg.latent_heat <= 0.0:
            raise ConfigError("[nonlinearity] latent_heat: must be > 0")
    for part in ("beta", "zeta"):
        bp = items.get("nonlinearity", f"{part}_breakpoints")
        sl = items.get("nonlinearity", f"{part}_slopes")
        if (bp is None) != (sl is None):
            raise ConfigError(f"[nonlinearity]: {part}_breakpoints and {part}_slopes come together")
        if bp is not None:
            spec = (
                tuple(_as_floats(bp, f"[nonlinearity] {part}_breakpoints")),
                tuple(_as_floats(sl, f"[nonlinearity] {part}_slopes")),
            )
            setattr(cfg, f"custom_{part}", spec)
    if cfg.problem == "custom" and (cfg.custom_beta is None or cfg.custom_zeta is None):
        raise ConfigError("problem = custom requires [nonlinearity] beta/zeta breakpoints and slopes")

    # [solver]
    sv = {}
    for key, cast in (
        ("inner_tol", _as_float), ("outer_tol", _as_float), ("damping", _as_float),
        ("max_inner", _as_int), ("max_outer", _as_int),
    ):
        raw = items.get("solver", key)
        if raw is not None:
            sv[key] = cast(raw, f"[solver] {key}")
    raw = items.get("solver", "strategy")
    if raw is not None:
        if raw not in STRATEGIES:
            raise ConfigError(f"[solver] strategy: expected one of {STRATEGIES}")
        sv["strategy"] = raw
    raw = items.get("solver", "linear_solver")
    if raw is not None:
        sv["linear_solver"] = raw
    try:
        cfg.solver = SolverOptions(**sv)
    except ValueError as exc:
        raise ConfigError(f"[solver]: {exc}") from exc

    # [diagnostics]
    dg = {}
    raw = items.get("diagnostics", "q")
    if raw is not None:
        dg["q_values"] = tuple(_as_floats(raw, "[diagnostics] q"))
    raw = items.get("diagnostics", "k")
    if raw is not None:
        dg["k_values"] = tuple(_as_floats(raw, "[diagnostics] k"))
    for key in ("slack_budget", "minty_tol", "entropy_budget", "diff_norm_q"):
        raw = items.get("diagnostics", key)
        if raw is not None:
            dg[key] = _as_float(raw, f"[diagnostics] {key}")
    try:
        cfg.diagnostics = DiagnosticsOptions(**dg)
    except ValueError as exc:
        raise ConfigError(f"[diagnostics]: {exc}") from exc

    leftover = items.unknown()
    if leftover:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(leftover))}")
    return cfg


def build_mesh(cfg: RunConfig, refinement: int | None = None) -> TriangleMesh:
    try:
        if cfg.mesh_file is not None:
            return read_mesh(cfg.mesh_file)
        return structured_mesh(cfg.mesh_shape, refinement or cfg.mesh_refinement)
    except MeshError as exc:
        raise ConfigError(f"[mesh]: {exc}") from exc


def build_pair(cfg: RunConfig) -> NonlinearityPair:
    try:
        if cfg.problem == "custom":
            beta_hat = PiecewiseLinearMonotone(*cfg.custom_beta)
            zeta_hat = PiecewiseLinearMonotone(*cfg.custom_zeta)
            return normalize_pair(beta_hat, zeta_hat)
        return preset_pair(cfg.problem, cfg.latent_heat)
    except ValueError as exc:
        raise ConfigError(f"[nonlinearity]: {exc}") from exc


def build_diffusion(cfg: RunConfig, mesh: TriangleMesh) -> DiffusionField:
    a11, a12, a22 = cfg.diffusion_tensor
    tensors = np.tile(np.array([[a11, a12], [a12, a22]]), (mesh.n_triangles, 1, 1))
    if cfg.diffusion_regions:
        cent = mesh.nodes[mesh.triangles].mean(axis=1)
        for expr, (b11, b12, b22) in cfg.diffusion_regions:
            mask = np.asarray(_eval_expr(expr, cent[:, 0], cent[:, 1], "[diffusion] region"), dtype=bool)
            if mask.shape != (mesh.n_triangles,):
                raise ConfigError("[diffusion] region: expression must be a per-triangle predicate")
            tensors[mask] = np.array([[b11, b12], [b12, b22]])
    try:
        return DiffusionField.from_tensors(tensors)
    except MeshError as exc:
        raise ConfigError(f"[diffusion]: {exc}") from exc


def build_measure(cfg: RunConfig, mesh: TriangleMesh) -> MeasureData:
    ac = None
    if cfg.ac_expr is not None:
        cent = mesh.nodes[mesh.triangles].mean(axis=1)
        vals = _eval_expr(cfg.ac_expr, cent[:, 0], cent[:, 1], "[measure] ac")
        ac = np.broadcast_to(np.asarray(vals, dtype=float), (mesh.n_triangles,)).copy()
    try:
        return MeasureData(diracs=list(cfg.diracs), lines=list(cfg.lines), ac_part=ac)
    except MeasureError as exc:
        raise ConfigError(f"[measure]: {exc}") from exc


def build_instance(cfg: RunConfig, refinement: int | None = None, eps: float | None = None) -> ProblemInstance:
    """Mesh, measure, pair, and instance with every invariant checked up front."""
    mesh = build_mesh(cfg, refinement)
    pair = build_pair(cfg)
    diffusion = build_diffusion(cfg, mesh)
    measure = build_measure(cfg, mesh)
    try:
        return ProblemInstance(
            mesh=mesh,
            diffusion=diffusion,
            rhs=measure,
            pair=pair,
            order=RegularizationOrder(cfg.p),
            eps=eps if eps is not None else cfg.eps_schedule[0],
            scalar_cfg=cfg.scalar_cfg,
        )
    except (ValueError, MeasureError) as exc:
        raise ConfigError(str(exc)) from exc
