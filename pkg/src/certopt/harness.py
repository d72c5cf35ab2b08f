"""Benchmark harness: configs, alpha sweeps, CSV output, solution files.

A run is described by a flat JSON document (one key per RunSpec field).  The
sweep solves the first order system for every alpha, evaluates the lumped
and/or exact-norm certificate, and materializes one CSV row per alpha with a
fixed header so that repeated runs are byte-identical.  Solved instances can
be persisted to JSON and re-certified later without solving again.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .certificates import (certify_continuous_norm, certify_discrete,
                           continuous_threshold, discrete_threshold,
                           make_certificate_params)
from .fem import FeFunction
from .mesh import build_uniform_mesh
from .nonlinearity import make_power_law
from .problems import ProblemSpec, make_case_spec
from .solvers import (KKTSolution, ResidualRecord, SolveDiagnostics, SolverError,
                      kkt_residual, objective, solve_kkt)

__all__ = [
    "RunSpec",
    "ResultRow",
    "RESULT_FIELDS",
    "parse_config",
    "serialize_config",
    "build_problem",
    "run_sweep",
    "write_csv",
    "save_solution",
    "load_solution",
]

_NORM_MODES = ("lumped", "exact", "both")
_SCENARIOS = ("A1", "A2", "custom")
_EXACT_NORM_Q = (2, 3, 4, 5, 6)


@dataclass(frozen=True)
class RunSpec:
    """Validated sweep description; see parse_config for the JSON keys."""
    phi: str
    phi_a: float
    phi_p: float
    scenario: str
    case: int
    alphas: tuple
    q: float
    n: int = 32
    norm_mode: str = "both"
    out: Optional[str] = None
    warm_start: bool = True
    control_bound: float = 5.0
    state_bound: float = 1.0
    y0_constant: Optional[float] = None
    gn_constant_override: Optional[float] = None
    multistart_k: Optional[int] = None
    multistart_radius: Optional[float] = None
    multistart_seed: Optional[int] = None


_REQUIRED_KEYS = ("phi", "phi_a", "phi_p", "scenario", "case", "alphas", "q")
_ALL_KEYS = tuple(f.name for f in fields(RunSpec))


def parse_config(source) -> RunSpec:
    """Parse and validate a run configuration from JSON text or a file path."""
    if isinstance(source, Path):
        text = source.read_text()
    elif isinstance(source, str) and source.lstrip().startswith("{"):
        text = source
    else:
        text = Path(source).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ValueError(f"malformed configuration JSON: {err}") from err
    if not isinstance(raw, dict):
        raise ValueError("configuration must be a JSON object")

    unknown = sorted(set(raw) - set(_ALL_KEYS))
    if unknown:
        raise ValueError(f"unknown configuration keys: {', '.join(unknown)}")
    missing = [k for k in _REQUIRED_KEYS if k not in raw]
    if missing:
        raise ValueError(f"missing required configuration keys: {', '.join(missing)}")
    return _validate_runspec(dict(raw))


def _validate_runspec(raw: dict) -> RunSpec:
    if raw["phi"] != "power":
        raise ValueError(f"phi: only the 'power' family is configurable, got {raw['phi']!r}")
    try:
        phi_a = float(raw["phi_a"])
        phi_p = float(raw["phi_p"])
    except (TypeError, ValueError) as err:
        raise ValueError(f"phi_a/phi_p: malformed number ({err})") from err
    if phi_a < 0:
        raise ValueError(f"phi_a: must be nonnegative, got {phi_a}")
    if phi_p < 3:
        raise ValueError(f"phi_p: must be >= 3, got {phi_p}")

    scenario = raw["scenario"]
    if scenario not in _SCENARIOS:
        raise ValueError(f"scenario: expected one of {_SCENARIOS}, got {scenario!r}")
    y0_constant = raw.get("y0_constant")
    if scenario == "custom":
        if y0_constant is None:
            raise ValueError("y0_constant: required for scenario 'custom'")
        y0_constant = float(y0_constant)
    elif y0_constant is not None:
        raise ValueError("y0_constant: only allowed for scenario 'custom'")

    case = raw["case"]
    if case not in (1, 2, 3):
        raise ValueError(f"case: must be 1, 2 or 3, got {case!r}")

    alphas = raw["alphas"]
    if not isinstance(alphas, (list, tuple)) or len(alphas) == 0:
        raise ValueError("alphas: must be a nonempty list of positive numbers")
    try:
        alphas = tuple(float(a) for a in alphas)
    except (TypeError, ValueError) as err:
        raise ValueError(f"alphas: malformed number ({err})") from err
    if any(not a > 0 for a in alphas):
        raise ValueError("alphas: all values must be strictly positive")

    try:
        q = float(raw["q"])
    except (TypeError, ValueError) as err:
        raise ValueError(f"q: malformed number ({err})") from err

    n = int(raw.get("n", 32))
    if n < 1:
        raise ValueError(f"n: must be a positive integer, got {n}")

    norm_mode = raw.get("norm_mode", "both")
    if norm_mode not in _NORM_MODES:
        raise ValueError(f"norm_mode: expected one of {_NORM_MODES}, got {norm_mode!r}")
    if norm_mode in ("exact", "both"):
        if not (float(q).is_integer() and int(q) in _EXACT_NORM_Q):
            raise ValueError(
                f"q: exact-norm certification needs integer q in {_EXACT_NORM_Q}, got {q}")

    multistart = [raw.get("multistart_k"), raw.get("multistart_radius"),
                  raw.get("multistart_seed")]
    if any(v is not None for v in multistart) and any(v is None for v in multistart):
        raise ValueError("multistart_k/multistart_radius/multistart_seed must be "
                         "given together")

    gn_override = raw.get("gn_constant_override")
    if gn_override is not None:
        gn_override = float(gn_override)
        if not gn_override > 0:
            raise ValueError(f"gn_constant_override: must be positive, got {gn_override}")

    return RunSpec(
        phi="power", phi_a=phi_a, phi_p=phi_p, scenario=scenario, case=int(case),
        alphas=alphas, q=q, n=n, norm_mode=norm_mode, out=raw.get("out"),
        warm_start=bool(raw.get("warm_start", True)),
        control_bound=float(raw.get("control_bound", 5.0)),
        state_bound=float(raw.get("state_bound", 1.0)),
        y0_constant=y0_constant, gn_constant_override=gn_override,
        multistart_k=None if multistart[0] is None else int(multistart[0]),
        multistart_radius=None if multistart[1] is None else float(multistart[1]),
        multistart_seed=None if multistart[2] is None else int(multistart[2]))


def serialize_config(run: RunSpec) -> str:
    """Canonical JSON form of a run; parse_config round-trips it."""
    doc = {}
    for f in fields(RunSpec):
        value = getattr(run, f.name)
        if value is None:
            continue
        if isinstance(value, tuple):
            value = list(value)
        doc[f.name] = value
    return json.dumps(doc, indent=2, sort_keys=False)


def build_problem(run: RunSpec, alpha: float) -> ProblemSpec:
    nl = make_power_law(run.phi_a, run.phi_p)
    desired = None
    if run.scenario == "custom":
        const = run.y0_constant

        def desired(x, c=const):
            return np.full(np.asarray(x, dtype=float).shape[:-1], c)

    return make_case_spec(run.case, run.scenario, alpha, nl, n=run.n,
                          control_bound=run.control_bound,
                          state_bound=run.state_bound, desired_state=desired)


# ---------------------------------------------------------------------------
# result rows and CSV contract

RESULT_FIELDS = (
    "alpha", "case", "scenario", "q", "gamma", "M", "t", "rho", "C_t", "eta",
    "threshold_discrete", "norm_h_q", "norm_L_q", "certified_discrete",
    "certified_continuous", "margin_discrete", "margin_continuous", "J_value",
    "kkt_residual", "newton_iterations", "pdas_iterations", "converged")


@dataclass(frozen=True)
class ResultRow:
    alpha: float
    case: int
    scenario: str
    q: float
    gamma: float
    M: float
    t: float
    rho: float
    C_t: float
    eta: float
    threshold_discrete: float
    norm_h_q: Optional[float]
    norm_L_q: Optional[float]
    certified_discrete: Optional[bool]
    certified_continuous: Optional[bool]
    margin_discrete: Optional[float]
    margin_continuous: Optional[float]
    J_value: float
    kkt_residual: float
    newton_iterations: int
    pdas_iterations: int
    converged: bool


def _solve_row(run: RunSpec, alpha: float, init) -> tuple[ResultRow, Optional[KKTSolution]]:
    spec = build_problem(run, alpha)
    nl = spec.nonlinearity
    params = make_certificate_params(nl, q=run.q, alpha=alpha, d=2,
                                     gn_override=run.gn_constant_override)
    base = dict(alpha=alpha, case=run.case, scenario=run.scenario, q=run.q,
                gamma=params.gamma, M=params.growth_bound, t=params.t,
                rho=params.rho, C_t=params.c_t, eta=continuous_threshold(params),
                threshold_discrete=discrete_threshold(params))
    try:
        sol = solve_kkt(spec, init=init)
    except SolverError as err:
        diag = err.diagnostics
        return ResultRow(**base, norm_h_q=None, norm_L_q=None,
                         certified_discrete=None, certified_continuous=None,
                         margin_discrete=None, margin_continuous=None,
                         J_value=float("nan"),
                         kkt_residual=diag.residuals.sup if diag else float("nan"),
                         newton_iterations=diag.iterations if diag else 0,
                         pdas_iterations=diag.active_set_changes if diag else 0,
                         converged=False), None

    norm_h = cert_d = margin_d = None
    norm_l = cert_c = margin_c = None
    if run.norm_mode in ("lumped", "both"):
        report = certify_discrete(sol, params)
        norm_h, cert_d, margin_d = report.norm_value, report.certified, report.margin
    if run.norm_mode in ("exact", "both"):
        report = certify_continuous_norm(sol, params)
        norm_l, cert_c, margin_c = report.norm_value, report.certified, report.margin
    row = ResultRow(**base, norm_h_q=norm_h, norm_L_q=norm_l,
                    certified_discrete=cert_d, certified_continuous=cert_c,
                    margin_discrete=margin_d, margin_continuous=margin_c,
                    J_value=objective(spec, sol),
                    kkt_residual=sol.diagnostics.residuals.sup,
                    newton_iterations=sol.diagnostics.iterations,
                    pdas_iterations=sol.diagnostics.active_set_changes,
                    converged=True)
    return row, sol


def run_sweep(run: RunSpec, keep_solutions: bool = False):
    """Solve every alpha and certify; one ResultRow per alpha, input order.

    With warm starting (the default) the alphas are solved from largest to
    smallest, each initialized at the previous solution; small-alpha
    instances are stiff and benefit from the continuation.  Without warm
    starting the rows are independent and may be computed concurrently
    (bounded by the CERTOPT_THREADS environment variable).  Solver failures
    mark their row converged=false and never abort the sweep.
    """
    indexed = list(enumerate(run.alphas))
    rows: list = [None] * len(indexed)
    solutions: list = [None] * len(indexed)

    if run.warm_start:
        init = None
        for idx, alpha in sorted(indexed, key=lambda pair: -pair[1]):
            rows[idx], sol = _solve_row(run, alpha, init)
            solutions[idx] = sol
            if sol is not None:
                init = sol
    else:
        workers = int(os.environ.get("CERTOPT_THREADS", "1"))
        if workers > 1:
            with ThreadPoolExecutor(max_workers=min(workers, len(indexed))) as pool:
                out = list(pool.map(lambda pair: _solve_row(run, pair[1], None), indexed))
            for idx, (row, sol) in enumerate(out):
                rows[idx], solutions[idx] = row, sol
        else:
            for idx, alpha in indexed:
                rows[idx], solutions[idx] = _solve_row(run, alpha, None)

    if keep_solutions:
        return rows, solutions
    return rows


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def write_csv(rows, path) -> None:
    """Write rows with the fixed header; identical rows give identical bytes."""
    lines = [",".join(RESULT_FIELDS)]
    for row in rows:
        lines.append(",".join(_format_cell(getattr(row, name)) for name in RESULT_FIELDS))
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# solution persistence (enables the separate certify step and fixtures)

_SOLUTION_FORMAT = "certopt-solution"


def _encode_bound(value: float) -> Optional[float]:
    return None if not np.isfinite(value) else float(value)


def save_solution(path, run: RunSpec, alpha: float, sol: KKTSolution) -> None:
    doc = {
        "format": _SOLUTION_FORMAT,
        "version": 1,
        "phi": run.phi, "phi_a": run.phi_a, "phi_p": run.phi_p,
        "scenario": run.scenario, "y0_constant": run.y0_constant,
        "case": run.case, "alpha": alpha, "n": run.n,
        "control_bound": run.control_bound, "state_bound": run.state_bound,
        "y": sol.y.values.tolist(),
        "p": sol.p.values.tolist(),
        "mu": np.asarray(sol.mu, dtype=float).tolist(),
        "diagnostics": {
            "iterations": sol.diagnostics.iterations,
            "residual_state": sol.diagnostics.residuals.state,
            "residual_adjoint": sol.diagnostics.residuals.adjoint,
            "residual_complementarity": sol.diagnostics.residuals.complementarity,
            "active_set_changes": sol.diagnostics.active_set_changes,
            "converged": sol.diagnostics.converged,
        },
    }
    Path(path).write_text(json.dumps(doc))


def load_solution(path):
    """Read a persisted solution; returns (run_spec, alpha, problem, solution)."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != _SOLUTION_FORMAT:
        raise ValueError(f"{path}: not a {_SOLUTION_FORMAT} file")
    run = RunSpec(phi=doc["phi"], phi_a=doc["phi_a"], phi_p=doc["phi_p"],
                  scenario=doc["scenario"], case=doc["case"],
                  alphas=(doc["alpha"],), q=2.0, n=doc["n"],
                  control_bound=doc.get("control_bound", 5.0),
                  state_bound=doc.get("state_bound", 1.0),
                  y0_constant=doc.get("y0_constant"))
    alpha = float(doc["alpha"])
    spec = build_problem(run, alpha)
    mesh = build_uniform_mesh(run.n)
    diag = doc["diagnostics"]
    sol = KKTSolution(
        y=FeFunction(mesh, np.asarray(doc["y"], dtype=float), zero_trace=True),
        p=FeFunction(mesh, np.asarray(doc["p"], dtype=float), zero_trace=True),
        mu=np.asarray(doc["mu"], dtype=float),
        diagnostics=SolveDiagnostics(
            iterations=diag["iterations"],
            residuals=ResidualRecord(state=diag["residual_state"],
                                     adjoint=diag["residual_adjoint"],
                                     complementarity=diag["residual_complementarity"]),
            active_set_changes=diag["active_set_changes"],
            converged=diag["converged"]))
    return run, alpha, spec, sol
