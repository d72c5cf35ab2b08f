"""Newton-type solvers for the discrete state equation and the KKT systems.

The state equation uses mass lumping for the nonlinear term,

    stiffness @ y + m * phi(y) = load,        y = 0 on the boundary,

so the nonlinearity contributes a diagonal to every Jacobian.  The first
order system eliminates the control through the box projection
u = clamp(-p/alpha): the state residual carries the exactly integrated
projected-control load, the adjoint residual carries the tracking misfit, and
pointwise state constraints add one multiplier per interior node with a
primal-dual active set (semismooth Newton) treatment.  A residual-halving
line search guards the Newton steps; all solves are deterministic.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import (FeFunction, assemble_mass, assemble_stiffness, band_mass_matrix,
                  clamped_control_load, clamped_control_sq_norm, lumped_mass,
                  smooth_l2_product)
from .mesh import Mesh, build_uniform_mesh, evaluate_field
from .problems import ProblemSpec

__all__ = [
    "SolverError",
    "ResidualRecord",
    "SolveDiagnostics",
    "KKTSolution",
    "MultistartResult",
    "solve_state",
    "solve_kkt",
    "kkt_residual",
    "objective",
    "multistart_probe",
]

STATE_TOL = 1e-11
KKT_TOL = 1e-9
MAX_ITER = 100
MAX_HALVINGS = 30
PDAS_WEIGHT = 1.0


class SolverError(RuntimeError):
    """Raised when a Newton solve fails; carries the diagnostics so far."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class ResidualRecord:
    """Sup-norms of the state, adjoint and complementarity residuals."""
    state: float
    adjoint: float
    complementarity: float

    @property
    def sup(self) -> float:
        return max(self.state, self.adjoint, self.complementarity)


@dataclass(frozen=True)
class SolveDiagnostics:
    iterations: int
    residuals: ResidualRecord
    active_set_changes: int
    converged: bool
    message: str = ""


@dataclass(frozen=True)
class KKTSolution:
    """Stationary point; the control is implicit as clamp(-p/alpha)."""
    y: FeFunction
    p: FeFunction
    mu: np.ndarray
    diagnostics: SolveDiagnostics


@dataclass(frozen=True)
class MultistartResult:
    objective: float
    converged: bool
    distance_to_reference: float
    start_y: np.ndarray
    start_p: np.ndarray


@dataclass(frozen=True)
class _Operators:
    mesh: Mesh
    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    lumped: np.ndarray
    interior: np.ndarray
    stiffness_ii: sp.csr_matrix
    mass_ii: sp.csr_matrix


@functools.lru_cache(maxsize=8)
def _operators(n: int) -> _Operators:
    mesh = build_uniform_mesh(n)
    A = assemble_stiffness(mesh)
    M = assemble_mass(mesh)
    interior = mesh.interior_indices()
    return _Operators(mesh=mesh, stiffness=A, mass=M, lumped=lumped_mass(mesh),
                      interior=interior,
                      stiffness_ii=A[interior][:, interior].tocsr(),
                      mass_ii=M[interior][:, interior].tocsr())


def _sparse_solve(matrix, rhs, iteration):
    with np.errstate(all="ignore"):
        step = spla.spsolve(matrix.tocsc(), rhs)
    if not np.all(np.isfinite(step)):
        raise SolverError(f"singular Newton system at iteration {iteration}")
    return step


# ---------------------------------------------------------------------------
# state equation

def solve_state(mesh: Mesh, nl, control, tol: float = STATE_TOL,
                max_iter: int = MAX_ITER) -> FeFunction:
    """Solve the lumped semilinear state equation for a given control.

    ``control`` is either a finite-element function (its exact mass load is
    used) or an already assembled load vector.  Newton with residual-halving
    line search, started at zero; the Jacobian is an M-matrix on this mesh,
    so failures indicate genuinely bad data.
    """
    A = assemble_stiffness(mesh)
    if isinstance(control, FeFunction):
        load = assemble_mass(mesh) @ control.values
    else:
        load = np.asarray(control, dtype=float)
        if load.shape != (mesh.num_vertices,):
            raise ValueError("control load vector has wrong length")
    m = lumped_mass(mesh)
    interior = mesh.interior_indices()
    a_ii = A[interior][:, interior].tocsr()
    m_i = m[interior]
    load_i = load[interior]

    y = np.zeros(mesh.num_vertices)

    def residual(y_full):
        return (A @ y_full + m * nl.phi(y_full) - load)[interior]

    res = residual(y)
    norm = float(np.abs(res).max(initial=0.0))
    for iteration in range(max_iter):
        if norm <= tol:
            return FeFunction(mesh=mesh, values=y, zero_trace=True)
        jac = a_ii + sp.diags(m_i * nl.phi_y(y[interior]))
        step = _sparse_solve(jac, -res, iteration)
        scale = 1.0
        for _ in range(MAX_HALVINGS + 1):
            trial = y.copy()
            trial[interior] += scale * step
            trial_res = residual(trial)
            trial_norm = float(np.abs(trial_res).max(initial=0.0))
            if trial_norm < norm:
                break
            scale *= 0.5
        else:
            trial = y.copy()
            trial[interior] += step
            trial_res = residual(trial)
            trial_norm = float(np.abs(trial_res).max(initial=0.0))
        y, res, norm = trial, trial_res, trial_norm
    if norm <= tol:
        return FeFunction(mesh=mesh, values=y, zero_trace=True)
    raise SolverError(
        f"state solve did not converge in {max_iter} iterations "
        f"(residual sup-norm {norm:.3e}, tolerance {tol:.1e})")


# ---------------------------------------------------------------------------
# first order system

def _state_bound_values(spec: ProblemSpec, mesh: Mesh):
    lower = evaluate_field(spec.state_bounds.lower, mesh.vertices)
    upper = evaluate_field(spec.state_bounds.upper, mesh.vertices)
    if np.any(lower >= upper):
        raise ValueError("state bounds must satisfy lower < upper at every node")
    on_boundary = mesh.boundary_mask
    if np.any(lower[on_boundary] >= 0.0) or np.any(upper[on_boundary] <= 0.0):
        raise ValueError("state bounds must satisfy lower < 0 < upper on the boundary")
    return lower, upper


class _KKTSystem:
    """Residuals and generalized Jacobians of the discrete first order system."""

    def __init__(self, spec: ProblemSpec, ops: _Operators, pdas_weight: float):
        self.spec = spec
        self.ops = ops
        self.c = pdas_weight
        self.interior = ops.interior
        self.load_target = smooth_l2_product(ops.mesh, spec.desired_state)
        self.unbounded_control = not spec.control_constrained
        self.has_state = spec.state_constrained
        if self.has_state:
            lower, upper = _state_bound_values(spec, ops.mesh)
            self.state_lower_i = lower[self.interior]
            self.state_upper_i = upper[self.interior]

    def control_load(self, p: np.ndarray) -> np.ndarray:
        if self.unbounded_control:
            return -(self.ops.mass @ p) / self.spec.alpha
        fe_p = FeFunction(mesh=self.ops.mesh, values=p)
        return clamped_control_load(fe_p, self.spec.alpha,
                                    self.spec.control_lower, self.spec.control_upper)

    def residual_parts(self, y, p, mu):
        nl = self.spec.nonlinearity
        i = self.interior
        r_state = (self.ops.stiffness @ y + self.ops.lumped * nl.phi(y)
                   - self.control_load(p))[i]
        r_adjoint = (self.ops.stiffness @ p + self.ops.lumped * nl.phi_y(y) * p
                     - self.ops.mass @ y + self.load_target - mu)[i]
        if not self.has_state:
            return r_state, r_adjoint, None, None, None
        mu_i = mu[i]
        y_i = y[i]
        upper_test = mu_i + self.c * (y_i - self.state_upper_i)
        lower_test = mu_i + self.c * (y_i - self.state_lower_i)
        r_comp = mu_i - np.maximum(upper_test, 0.0) - np.minimum(lower_test, 0.0)
        return r_state, r_adjoint, r_comp, upper_test > 0.0, lower_test < 0.0

    def stacked(self, parts):
        r_state, r_adjoint, r_comp = parts[0], parts[1], parts[2]
        blocks = [r_state, r_adjoint] if r_comp is None else [r_state, r_adjoint, r_comp]
        return np.concatenate(blocks)

    def record(self, parts) -> ResidualRecord:
        comp = 0.0 if parts[2] is None else float(np.abs(parts[2]).max(initial=0.0))
        return ResidualRecord(state=float(np.abs(parts[0]).max(initial=0.0)),
                              adjoint=float(np.abs(parts[1]).max(initial=0.0)),
                              complementarity=comp)

    def jacobian(self, y, p, active_upper, active_lower):
        spec, ops, i = self.spec, self.ops, self.interior
        nl = spec.nonlinearity
        size = i.size
        diag_phi = sp.diags(ops.lumped[i] * nl.phi_y(y)[i])
        j11 = ops.stiffness_ii + diag_phi
        j22 = ops.stiffness_ii + diag_phi
        if self.unbounded_control:
            j12 = ops.mass_ii / spec.alpha
        else:
            fe_p = FeFunction(mesh=ops.mesh, values=p)
            band = band_mass_matrix(fe_p, spec.alpha,
                                    spec.control_lower, spec.control_upper)
            j12 = band[i][:, i] / spec.alpha
        j21 = sp.diags(ops.lumped[i] * nl.phi_yy(y)[i] * p[i]) - ops.mass_ii
        if not self.has_state:
            return sp.bmat([[j11, j12], [j21, j22]], format="csc")
        active = active_upper | active_lower
        zero = sp.csr_matrix((size, size))
        comp_y = sp.diags(np.where(active, -self.c, 0.0))
        comp_mu = sp.diags(np.where(active, 0.0, 1.0))
        return sp.bmat([[j11, j12, zero],
                        [j21, j22, -sp.identity(size, format="csr")],
                        [comp_y, zero, comp_mu]], format="csc")


def _initial_point(spec, ops, init):
    size = ops.mesh.num_vertices
    if init is None:
        return np.zeros(size), np.zeros(size), np.zeros(size)
    if init.y.mesh.n != spec.n:
        raise ValueError("initial guess lives on a different mesh resolution")
    mu = np.array(init.mu, dtype=float) if init.mu is not None else np.zeros(size)
    if not spec.state_constrained:
        mu = np.zeros(size)
    return init.y.values.copy(), init.p.values.copy(), mu


def solve_kkt(spec: ProblemSpec, init: Optional[KKTSolution] = None, *,
              tol: float = KKT_TOL, max_iter: int = MAX_ITER,
              pdas_weight: float = PDAS_WEIGHT) -> KKTSolution:
    """Solve the discrete first order system by semismooth Newton.

    The three constraint regimes share one loop: the control is always
    eliminated through clamp(-p/alpha) (exact load and exact generalized
    derivative), and pointwise state constraints contribute a primal-dual
    active set row per interior node.  Termination requires the residual
    sup-norm to reach ``tol`` and, in the state-constrained regime, the
    active sets to repeat.  Raises SolverError after ``max_iter`` iterations
    or on a singular linearization.
    """
    if spec.control_constrained and spec.state_constrained:
        import warnings
        warnings.warn("combined control and state constraints are experimental",
                      stacklevel=2)
    ops = _operators(spec.n)
    system = _KKTSystem(spec, ops, pdas_weight)
    interior = ops.interior
    size = interior.size

    y, p, mu = _initial_point(spec, ops, init)
    parts = system.residual_parts(y, p, mu)
    norm = system.record(parts).sup
    previous_active = None
    active_changes = 0

    for iteration in range(max_iter):
        if system.has_state:
            active = (parts[3].tobytes(), parts[4].tobytes())
            if previous_active is not None and active != previous_active:
                active_changes += 1
            sets_stable = previous_active is None or active == previous_active
            previous_active = active
        else:
            sets_stable = True
        if norm <= tol and sets_stable:
            diag = SolveDiagnostics(iterations=iteration, residuals=system.record(parts),
                                    active_set_changes=active_changes, converged=True)
            return KKTSolution(y=FeFunction(ops.mesh, y, zero_trace=True),
                               p=FeFunction(ops.mesh, p, zero_trace=True),
                               mu=mu.copy(), diagnostics=diag)

        jac = system.jacobian(y, p, parts[3], parts[4])
        step = _sparse_solve(jac, -system.stacked(parts), iteration)
        dy, dp = step[:size], step[size:2 * size]
        dmu = step[2 * size:] if system.has_state else None

        scale = 1.0
        accepted = None
        for _ in range(MAX_HALVINGS + 1):
            y_t, p_t, mu_t = y.copy(), p.copy(), mu.copy()
            y_t[interior] += scale * dy
            p_t[interior] += scale * dp
            if dmu is not None:
                mu_t[interior] += scale * dmu
            parts_t = system.residual_parts(y_t, p_t, mu_t)
            norm_t = system.record(parts_t).sup
            if scale == 1.0:
                full = (y_t, p_t, mu_t, parts_t, norm_t)
            if norm_t < norm:
                accepted = (y_t, p_t, mu_t, parts_t, norm_t)
                break
            scale *= 0.5
        if accepted is None:
            # no descent found: take the full semismooth step anyway, which
            # is what changes active sets near kinks
            accepted = full
        y, p, mu, parts, norm = accepted

    record = system.record(parts)
    diag = SolveDiagnostics(iterations=max_iter, residuals=record,
                            active_set_changes=active_changes, converged=False)
    raise SolverError(
        f"first order system did not converge in {max_iter} iterations "
        f"(residual sup-norm {record.sup:.3e}, tolerance {tol:.1e})", diag)


def kkt_residual(spec: ProblemSpec, sol: KKTSolution) -> ResidualRecord:
    """Recompute the residual sup-norms of a candidate stationary point."""
    if sol.y.mesh.n != spec.n:
        raise ValueError("solution mesh resolution does not match the problem")
    ops = _operators(spec.n)
    system = _KKTSystem(spec, ops, PDAS_WEIGHT)
    mu = sol.mu if sol.mu is not None else np.zeros(ops.mesh.num_vertices)
    parts = system.residual_parts(sol.y.values, sol.p.values, np.asarray(mu, float))
    return system.record(parts)


def objective(spec: ProblemSpec, sol: KKTSolution) -> float:
    """Tracking plus control cost at the implicit control clamp(-p/alpha)."""
    if sol.y.mesh.n != spec.n:
        raise ValueError("solution mesh resolution does not match the problem")
    tracking = smooth_l2_product(sol.y.mesh, spec.desired_state, v=sol.y)
    control_sq = clamped_control_sq_norm(sol.p, spec.alpha,
                                         spec.control_lower, spec.control_upper)
    return 0.5 * tracking + 0.5 * spec.alpha * control_sq


def multistart_probe(spec: ProblemSpec, k: int, radius: float, seed: int = 0,
                     **solve_kwargs) -> list[MultistartResult]:
    """Re-solve from k random interior initializations and report objectives.

    Start values for state and adjoint are uniform in [-radius, radius] at
    interior nodes (multipliers start at zero).  Per-start failures are
    recorded as flags and never abort the batch; with a fixed seed the whole
    probe is deterministic.  A tight spread of converged objectives is the
    empirical companion of a certified unique global minimum.
    """
    if k < 1:
        raise ValueError(f"start count k must be at least 1, got {k}")
    ops = _operators(spec.n)
    interior = ops.interior
    reference = solve_kkt(spec, **solve_kwargs)
    rng = np.random.default_rng(seed)
    results = []
    for _ in range(k):
        y0 = np.zeros(ops.mesh.num_vertices)
        p0 = np.zeros(ops.mesh.num_vertices)
        y0[interior] = rng.uniform(-radius, radius, interior.size)
        p0[interior] = rng.uniform(-radius, radius, interior.size)
        start = KKTSolution(y=FeFunction(ops.mesh, y0, zero_trace=True),
                            p=FeFunction(ops.mesh, p0, zero_trace=True),
                            mu=np.zeros(ops.mesh.num_vertices),
                            diagnostics=SolveDiagnostics(
                                0, ResidualRecord(np.inf, np.inf, np.inf), 0, False))
        try:
            sol = solve_kkt(spec, init=start, **solve_kwargs)
            dist = max(float(np.abs(sol.y.values - reference.y.values).max()),
                       float(np.abs(sol.p.values - reference.p.values).max()))
            results.append(MultistartResult(objective=objective(spec, sol),
                                            converged=True,
                                            distance_to_reference=dist,
                                            start_y=y0, start_p=p0))
        except SolverError:
            results.append(MultistartResult(objective=np.nan, converged=False,
                                            distance_to_reference=np.nan,
                                            start_y=y0, start_p=p0))
    return results
