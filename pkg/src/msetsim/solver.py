"""Nonlinear solvers: clamped Newton for Poisson, Gummel decoupling for the
carrier equations, and voltage continuation.

The linear sub-solver is a direct sparse LU factorization (SuperLU via
scipy); iterative methods are not used.  Carrier systems are solved in the
Slotboom variable w = n e^{-psi/Vt} (a symmetric M-matrix form) for relative
accuracy in depleted regions, then converted back to densities.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import physics
from .constants import thermal_voltage


class LinearSolveError(RuntimeError):
    def __init__(self, message, achieved_residual=float("inf")):
        super().__init__(message)
        self.achieved_residual = achieved_residual


class NonConvergenceError(RuntimeError):
    def __init__(self, message, trace=None, bias=None):
        super().__init__(message)
        self.trace = trace
        self.bias = dict(bias) if bias else None


@dataclass
class SolverOptions:
    gummel_tol_psi: float = 1e-5        # V, max nodal psi change per cycle
    gummel_tol_carrier: float = 1e-6    # relative L2 carrier change per cycle
    max_gummel: int = 200
    newton_tol: float = 1e-8            # V, max nodal update
    max_newton: int = 50
    psi_clamp: float = field(default_factory=lambda: thermal_voltage(300.0))  # V
    linear_tol: float = 1e-10
    continuation_step_max: float = 0.25  # V

    def validate(self, vt):
        for name in ("gummel_tol_psi", "gummel_tol_carrier", "newton_tol",
                     "linear_tol", "continuation_step_max", "psi_clamp"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"SolverOptions.{name} must be positive")
        if self.psi_clamp < 0.1 * vt:
            raise ValueError("psi_clamp must be at least 0.1 kT/q")


@dataclass
class ConvergenceTrace:
    """Per-iteration solver history."""

    psi_updates: list = field(default_factory=list)      # V
    residuals: list = field(default_factory=list)        # scaled residual norm
    carrier_updates: list = field(default_factory=list)  # relative
    converged: bool = False
    iterations: int = 0

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "residual", "update_norm"])
            for k in range(max(len(self.residuals), len(self.psi_updates))):
                res = self.residuals[k] if k < len(self.residuals) else ""
                upd = self.psi_updates[k] if k < len(self.psi_updates) else ""
                w.writerow([k, repr(res), repr(upd)])


def _direct_solve(matrix, rhs, tol):
    """LU-factorize and solve, verifying the relative residual.

    The residual is normalized backward-error style against
    max(||b||, || |A| |x| ||) so that well-solved but badly scaled systems
    (tiny right-hand sides late in a Newton iteration, exponential Slotboom
    weights) are not rejected.
    """
    mat = matrix.tocsc()
    diag = mat.diagonal()
    try:
        if np.all(diag > 0.0):
            # symmetric Jacobi scaling: the Slotboom weights span many
            # orders of magnitude and break the LU without it
            s = 1.0 / np.sqrt(diag)
            mat_s = (sp.diags(s) @ mat @ sp.diags(s)).tocsc()
            rhs_s = s * rhs
            lu = spla.splu(mat_s)
            y = lu.solve(rhs_s)
            # one refinement step removes the residual LU noise floor that
            # otherwise keeps the Gummel carrier updates from settling
            y += lu.solve(rhs_s - mat_s @ y)
            x = s * y
        else:
            lu = spla.splu(mat)
            x = lu.solve(rhs)
            x += lu.solve(rhs - mat @ x)
    except RuntimeError as exc:
        raise LinearSolveError(f"sparse LU breakdown: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise LinearSolveError("sparse LU produced non-finite values")
    rnorm = np.linalg.norm(matrix @ x - rhs)
    scale = max(np.linalg.norm(rhs), np.linalg.norm(abs(matrix) @ np.abs(x)))
    rel = rnorm / scale if scale > 0 else rnorm
    if rel > tol:
        raise LinearSolveError(
            f"linear solve residual {rel:.3e} exceeds tolerance {tol:.3e}",
            achieved_residual=rel)
    return x


def solve_linear(system, tol=1e-10):
    """Solve a LinearSystem to the requested relative residual."""
    return _direct_solve(system.matrix(), system.rhs, tol)


def newton_poisson(mesh, state, bias, opts=None):
    """Solve the nonlinear Poisson equation at frozen quasi-Fermi potentials.

    The state is updated in place (psi everywhere; carriers follow their
    Boltzmann factors on non-contact semiconductor nodes) and returned with
    the iteration trace.  Every nodal update is clamped to +-psi_clamp and a
    step-halving line search keeps the residual norm non-increasing.
    """
    opts = opts or SolverOptions()
    physics.check_bias(mesh, bias)
    asm = physics.assembly(mesh)
    opts.validate(asm.vt)
    trace = ConvergenceTrace()

    vt, ni, alpha = asm.vt, asm.ni, asm.alpha
    u = state.psi / vt
    nn = state.n / ni
    pp = state.p / ni
    semi = mesh.node_is_semi
    free = semi & asm.is_interior
    dop = mesh.node_doping / ni
    area = alpha * mesh.sem_areas
    u_bc = asm.dirichlet_u(bias)
    clamp = opts.psi_clamp / vt

    def residual(uu, nnn, ppp):
        f = asm.K @ uu - area * (ppp - nnn + dop)
        f[asm.contact_all] = uu[asm.contact_all] - u_bc
        return f

    f = residual(u, nn, pp)
    fnorm = np.linalg.norm(f)
    converged = False
    for it in range(opts.max_newton):
        trace.residuals.append(fnorm)
        dq = area * (nn + pp)
        dq[asm.contact_all] = 0.0
        jac = asm.K_bc + sp.diags(dq)
        delta = _direct_solve(jac, -f, opts.linear_tol)
        np.clip(delta, -clamp, clamp, out=delta)

        t = 1.0
        best = None
        for _ in range(25):
            u_try = u + t * delta
            grow = np.exp(np.clip(t * delta, -200.0, 200.0))
            nn_try = np.where(free, nn * grow, nn)
            pp_try = np.where(free, pp / grow, pp)
            f_try = residual(u_try, nn_try, pp_try)
            fn_try = np.linalg.norm(f_try)
            if best is None or fn_try < best[0]:
                best = (fn_try, t, u_try, nn_try, pp_try, f_try)
            if fn_try <= fnorm * (1.0 + 1e-12):
                break
            t *= 0.5
        fnorm, t, u, nn, pp, f = best
        upd = float(np.max(np.abs(t * delta))) * vt
        trace.psi_updates.append(upd)
        trace.iterations = it + 1
        if upd < opts.newton_tol:
            converged = True
            break

    state.psi = u * vt
    state.n = np.where(semi, nn * ni, 0.0)
    state.p = np.where(semi, pp * ni, 0.0)
    # contacts stay pinned at their ohmic reservoir values
    for name, nodes in mesh.contact_nodes.items():
        state.n[nodes] = asm.contact_n[name] * ni
        state.p[nodes] = asm.contact_p[name] * ni
    trace.converged = converged
    if not converged:
        raise NonConvergenceError(
            f"Poisson Newton did not converge in {opts.max_newton} iterations "
            f"(last update {trace.psi_updates[-1]:.3e} V)", trace=trace, bias=bias)
    return state, trace


def _solve_carrier(mesh, u, carrier, bias, tol):
    mat, rhs, free_index, w, expf = physics.carrier_w_system(mesh, u, carrier, bias)
    if len(free_index):
        w_free = _direct_solve(mat, rhs, tol)
        np.maximum(w_free, 1e-300, out=w_free)  # guard rounding-level positivity loss
        w[free_index] = w_free
    asm = physics.assembly(mesh)
    with np.errstate(over="ignore"):
        dens = asm.ni * w * expf
    return np.where(np.isfinite(dens), dens, 0.0)


def gummel_solve(mesh, state, bias, opts=None):
    """Decoupled self-consistent solve: alternate nonlinear Poisson with
    linear electron/hole continuity until both the potential and the
    carriers stop moving.  Never returns an unconverged state."""
    opts = opts or SolverOptions()
    physics.check_bias(mesh, bias)
    asm = physics.assembly(mesh)
    opts.validate(asm.vt)
    trace = ConvergenceTrace()

    for cycle in range(opts.max_gummel):
        psi_prev = state.psi.copy()
        try:
            _, ntrace = newton_poisson(mesh, state, bias, opts)
        except NonConvergenceError as exc:
            raise NonConvergenceError(
                f"Gummel cycle {cycle}: {exc}", trace=trace, bias=bias) from exc
        u = state.psi / asm.vt
        n_new = _solve_carrier(mesh, u, physics.ELECTRON, bias, opts.linear_tol)
        p_new = _solve_carrier(mesh, u, physics.HOLE, bias, opts.linear_tol)
        rel_n = np.linalg.norm(n_new - state.n) / max(np.linalg.norm(state.n), 1e-300)
        rel_p = np.linalg.norm(p_new - state.p) / max(np.linalg.norm(state.p), 1e-300)
        state.n = n_new
        state.p = p_new

        dpsi = float(np.max(np.abs(state.psi - psi_prev)))
        rel = max(rel_n, rel_p)
        trace.psi_updates.append(dpsi)
        trace.carrier_updates.append(rel)
        trace.residuals.append(ntrace.residuals[0])
        trace.iterations = cycle + 1
        if dpsi < opts.gummel_tol_psi and rel < opts.gummel_tol_carrier:
            trace.converged = True
            return state, trace

    raise NonConvergenceError(
        f"Gummel iteration did not converge in {opts.max_gummel} cycles "
        f"(last dpsi {trace.psi_updates[-1]:.3e} V, carrier {trace.carrier_updates[-1]:.3e})",
        trace=trace, bias=bias)


def continuation_solve(mesh, from_bias, to_bias, opts=None, warm_state=None):
    """Ramp contact voltages from one bias to another in steps no larger
    than continuation_step_max, Gummel-solving at each step.

    Returns warm_state itself when the biases are equal (zero steps).
    """
    opts = opts or SolverOptions()
    physics.check_bias(mesh, from_bias)
    physics.check_bias(mesh, to_bias)
    if warm_state is None:
        raise ValueError("continuation_solve needs a converged warm_state at from_bias")

    names = sorted(to_bias)
    jump = max(abs(to_bias[k] - from_bias[k]) for k in names)
    nsteps = int(np.ceil(jump / opts.continuation_step_max - 1e-12))
    if nsteps <= 0:
        return warm_state

    state = warm_state.copy()
    for k in range(1, nsteps + 1):
        frac = k / nsteps
        bias_k = {name: from_bias[name] + frac * (to_bias[name] - from_bias[name])
                  for name in names}
        try:
            state, _ = gummel_solve(mesh, state, bias_k, opts)
        except NonConvergenceError as exc:
            raise NonConvergenceError(
                f"continuation failed at step {k}/{nsteps}, bias {bias_k}: {exc}",
                trace=exc.trace, bias=bias_k) from exc
    return state
