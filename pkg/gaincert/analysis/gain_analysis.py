"""End-to-end L2-gain bounds: mesh, Hessian bounds, LMI assembly, SDP solve."""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Union

import numpy as np

from ..errors import ConfigError, ModeMismatchError, PreconditionError
from ..geometry.simplex_geometry import (Box, Triangulation, build_annulus, build_kuhn_grid, build_origin_fan,
                                         refine)
from ..lmi.assembly import ALPHA_MIN, DELTA, DecisionLayout, assemble
from ..model.system_model import SystemModel, bounds_for
from ..sdp.bridge import (DEFAULT_MAX_ITERS, DEFAULT_TOL, CvxpyAdapter, ReferenceAdapter,
                          SolverAdapter, compile_program, solve)
from ..storage.cpa_function import CpaFunction, HybridStorage, storage_from_dict
from ..utils import save_to_csv_file

CERTIFICATE_FORMAT_VERSION = 1
SWEEP_HEADER = ['num_simplexes', 'gamma_star', 'solve_seconds']
EPSILON_FRACTION = 0.1

Storage = Union[CpaFunction, HybridStorage]


@dataclass
class GainOptions:  # pylint: disable=too-many-instance-attributes
    """Solver and assembly settings shared by both analyses."""

    solver: str = 'CLARABEL'
    tol: float = DEFAULT_TOL
    max_iters: int = DEFAULT_MAX_ITERS
    alpha_min: float = ALPHA_MIN
    delta: float = DELTA
    origin_offset: Optional[float] = None
    threads: int = 1
    progress_bar: bool = False
    r_u: Optional[float] = None
    adapter: Optional[SolverAdapter] = None

    def make_adapter(self) -> SolverAdapter:
        if self.adapter is not None:
            return self.adapter
        if self.solver == ReferenceAdapter.name:
            return ReferenceAdapter()
        return CvxpyAdapter(self.solver)


@dataclass
class GainCertificate:  # pylint: disable=too-many-instance-attributes
    """
    Result of one gain analysis.

    Attributes:
        status (str): Solver status; a certificate exists for optimal and max_iters.
        mode (str): 'cpa' or 'hybrid'.
        model_name (str): Name of the analysed system.
        gamma_star (float): sqrt(alpha_star), or inf without a certificate.
        alpha_star (float): Optimal alpha = gamma^2, or inf.
        storage (Optional[Storage]): The storage function found.
        tri (Triangulation): The mesh analysed.
        epsilon (Optional[float]): Ball radius in hybrid mode.
        solver_stats (Dict): Iterations, seconds, solver name and re-check result.
        check_report (Optional[Dict]): Filled in by certificate checks.
        r_u (Optional[float]): Small-signal input radius the region was sized for.
    """

    status: str
    mode: str
    model_name: str
    gamma_star: float
    alpha_star: float
    storage: Optional[Storage]
    tri: Triangulation
    epsilon: Optional[float] = None
    solver_stats: Dict = field(default_factory=dict)
    check_report: Optional[Dict] = None
    r_u: Optional[float] = None

    @property
    def certified(self) -> bool:
        return self.storage is not None and math.isfinite(self.gamma_star)

    @property
    def mesh_stats(self) -> Dict:
        return self.tri.stats()

    def to_dict(self, report_timings: bool = False) -> Dict:
        """JSON document embedding the mesh; solve times only when report_timings."""
        stats = dict(self.solver_stats)
        if not report_timings:
            stats.pop('seconds', None)
        return {
            'version': CERTIFICATE_FORMAT_VERSION,
            'status': self.status,
            'mode': self.mode,
            'model': self.model_name,
            'gamma_star': _json_float(self.gamma_star),
            'alpha_star': _json_float(self.alpha_star),
            'epsilon': self.epsilon,
            'r_u': self.r_u,
            'mesh_stats': self.mesh_stats,
            'solver_stats': stats,
            'check_report': self.check_report,
            'storage': self.storage.to_dict() if self.storage is not None else None,
            'mesh': self.tri.to_document(),
        }

    @classmethod
    def from_dict(cls, doc: Dict) -> 'GainCertificate':
        if doc.get('version') != CERTIFICATE_FORMAT_VERSION:
            raise ConfigError(f"Unsupported certificate version: {doc.get('version')}")
        tri = Triangulation.from_document(doc['mesh'])
        storage = storage_from_dict(tri, doc['storage'], doc.get('epsilon')) if doc.get('storage') else None
        return cls(
            status=doc['status'], mode=doc['mode'], model_name=doc['model'],
            gamma_star=float(doc['gamma_star']), alpha_star=float(doc['alpha_star']),
            storage=storage, tri=tri, epsilon=doc.get('epsilon'),
            solver_stats=doc.get('solver_stats') or {}, check_report=doc.get('check_report'),
            r_u=doc.get('r_u'),
        )


def _json_float(value: float):
    return value if math.isfinite(value) else 'inf'


@dataclass(frozen=True)
class SweepRow:
    num_simplexes: int
    gamma_star: float
    solve_seconds: float


def _solve_and_package(model, tri, bounds, mode, opts: GainOptions, epsilon=None) -> GainCertificate:
    layout = DecisionLayout.for_mesh(tri, hybrid=mode == 'hybrid')
    constraints = assemble(model, tri, bounds, layout, mode, epsilon=epsilon, alpha_min=opts.alpha_min,
                           delta=opts.delta, origin_offset=opts.origin_offset, threads=opts.threads,
                           progress_bar=opts.progress_bar)
    program = compile_program(constraints, layout)
    result = solve(program, opts.make_adapter(), opts.tol, opts.max_iters)
    stats = {
        'status': result.status,
        'iterations': result.iterations,
        'seconds': result.seconds,
        'num_vars': program.num_vars,
        'num_cones': len(program.cones),
        'num_linear': len(program.linear_labels),
    }
    stats.update(result.diagnostics)

    # a solution is only trusted once it passed the re-check
    P = layout.p_matrix(result.values) if result.has_solution and mode == 'hybrid' else None
    if not result.verified or (P is not None and np.linalg.eigvalsh(P)[0] <= 0.0):
        if result.has_solution:
            print(f"Warning: discarding the {result.status} solution that failed the re-check")
        return GainCertificate(result.status, mode, model.name, math.inf, math.inf, None, tri,
                               epsilon, stats, r_u=opts.r_u)

    x = result.values
    alpha = max(layout.alpha_value(x), opts.alpha_min)
    cpa = CpaFunction(tri, layout.vertex_values(x))
    storage: Storage = cpa
    if P is not None:
        storage = HybridStorage(P, epsilon, cpa)
    return GainCertificate(result.status, mode, model.name, math.sqrt(alpha), alpha, storage, tri,
                           epsilon, stats, r_u=opts.r_u)


def bound_gain_cpa(model: SystemModel, tri: Triangulation, opts: Optional[GainOptions] = None) -> GainCertificate:
    """Gain bound with a CPA storage function; needs a model whose constant input matrix is zero."""
    opts = opts or GainOptions()
    if model.has_constant_input:
        raise ModeMismatchError(f"{model.name} has a nonzero constant input matrix; use hybrid mode")
    if tri.origin_vertex() is None:
        raise PreconditionError("CPA analysis needs a mesh with a vertex at the origin")
    bounds = bounds_for(model, tri, progress_bar=opts.progress_bar)
    return _solve_and_package(model, tri, bounds, 'cpa', opts)


def bound_gain_hybrid(model: SystemModel, tri: Triangulation, epsilon: float,
                      opts: Optional[GainOptions] = None) -> GainCertificate:
    """Gain bound with x^T P x on the epsilon-ball and a CPA function on the annulus mesh."""
    opts = opts or GainOptions()
    if tri.hole is None or abs(tri.hole.epsilon - epsilon) > 1e-12:
        hole = None if tri.hole is None else tri.hole.epsilon
        raise PreconditionError(f"Mesh hole radius {hole} does not match epsilon {epsilon}")
    bounds = bounds_for(model, tri, epsilon=epsilon, progress_bar=opts.progress_bar)
    return _solve_and_package(model, tri, bounds, 'hybrid', opts, epsilon)


def default_epsilon(box: Box) -> float:
    """A tenth of the smallest half-width of the box."""
    return EPSILON_FRACTION * box.origin_margin()


def build_mesh(box: Box, mode: str, divisions, epsilon: Optional[float] = None,
               boundary_segments: int = 16, fan_radius: Optional[float] = None) -> Triangulation:
    """Level-0 mesh of a sweep.

    CPA mode uses a Kuhn grid, with a polygonal fan of boundary_segments
    triangles around the origin in the plane. Hybrid mode uses an annulus.
    """
    if mode == 'cpa':
        if box.n == 2:
            return build_origin_fan(box, divisions, fan_radius, boundary_segments)
        return build_kuhn_grid(box, divisions)
    if mode == 'hybrid':
        return build_annulus(box, divisions, epsilon, boundary_segments)
    raise ConfigError(f"Unknown mode: {mode}. Expected 'cpa' or 'hybrid'")


def analyze(model: SystemModel, tri: Triangulation, mode: str, epsilon: Optional[float] = None,
            opts: Optional[GainOptions] = None) -> GainCertificate:
    if mode == 'cpa':
        return bound_gain_cpa(model, tri, opts)
    return bound_gain_hybrid(model, tri, epsilon, opts)


def refinement_sweep(model: SystemModel, box: Box, levels: int, mode: str, epsilon: Optional[float] = None,
                     divisions=8, boundary_segments: int = 16, fan_radius: Optional[float] = None,
                     opts: Optional[GainOptions] = None) -> List[SweepRow]:
    """Analyse the level-0 mesh and levels - 1 successive refinements of it.

    Infeasible levels are kept with gamma_star = inf.
    """
    if levels < 1:
        raise ConfigError(f"A sweep needs at least one level, got {levels}")
    opts = opts or GainOptions()
    if mode == 'hybrid' and epsilon is None:
        epsilon = default_epsilon(box)
    tri = build_mesh(box, mode, divisions, epsilon, boundary_segments, fan_radius)
    rows = []
    for level in range(levels):
        if level:
            tri = refine(tri, progress_bar=opts.progress_bar)
        cert = analyze(model, tri, mode, epsilon, opts)
        rows.append(SweepRow(tri.num_simplexes, cert.gamma_star, cert.solver_stats.get('seconds', 0.0)))
        if not cert.certified:
            print(f"Warning: no certificate at level {level} ({tri.num_simplexes} simplexes), "
                  f"solver status {cert.status}")
    return rows


def is_non_increasing(rows: List[SweepRow], tol: float = 1e-6) -> bool:
    gammas = [row.gamma_star for row in rows]
    return all(b <= a + tol for a, b in zip(gammas, gammas[1:]))


def sweep_to_csv(rows: List[SweepRow], file_path: str, report_timings: bool = False):
    """Write rows under the num_simplexes,gamma_star,solve_seconds header.

    solve_seconds is left empty unless report_timings.
    """
    save_to_csv_file(SWEEP_HEADER, [
        [row.num_simplexes, f"{row.gamma_star:.12g}", f"{row.solve_seconds:.3f}" if report_timings else '']
        for row in rows
    ], file_path)

