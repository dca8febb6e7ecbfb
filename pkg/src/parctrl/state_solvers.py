"""Forward solvers for the mixed heat-conduction problems.

Parabolic problems are discretized by backward Euler: unconditionally stable,
monotone with lumped mass, and its algebraic transpose is again a backward
recursion, which is what makes the discrete optimality identities exact.
On the temperature boundary the Dirichlet variant eliminates rows/columns and
lifts the datum; the Robin variant keeps all nodes and adds the transfer term
alpha * (boundary mass).  A transfer coefficient of +inf routes to the
Dirichlet solver.

Solvers are pure functions of immutable inputs; concurrent calls are safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fem_core import (
    BoundaryControl,
    DiscreteOperators,
    TimeField,
    TimeGrid,
    _check_control,
    _check_field,
    spd_solver,
)


@dataclass
class ProblemSpec:
    """Data of one control problem instance.

    source         internal energy g as a TimeField
    boundary_temp  temperature datum on the GAMMA1 nodes
    initial_temp   initial nodal temperature; must equal boundary_temp on GAMMA1
    target         tracking target as a TimeField
    flux_penalty   weight of the boundary control in the cost (> 0)
    source_penalty weight of the distributed control in the cost (> 0)
    transfer_coeff Robin heat-transfer coefficient (> 0); +inf means Dirichlet
    """

    source: TimeField
    boundary_temp: np.ndarray
    initial_temp: np.ndarray
    target: TimeField
    flux_penalty: float = 1.0
    source_penalty: float = 1.0
    transfer_coeff: float = math.inf

    def validate(self, ops: DiscreteOperators, grid: TimeGrid):
        _check_field(grid, ops, self.source, "source")
        _check_field(grid, ops, self.target, "target")
        if self.boundary_temp.shape != (ops.dirichlet_nodes.size,):
            raise ValueError(
                f"boundary_temp has shape {self.boundary_temp.shape}, "
                f"expected ({ops.dirichlet_nodes.size},)")
        if self.initial_temp.shape != (ops.n_nodes,):
            raise ValueError(
                f"initial_temp has shape {self.initial_temp.shape}, "
                f"expected ({ops.n_nodes},)")
        if self.flux_penalty <= 0:
            raise ValueError(f"flux_penalty must be > 0, got {self.flux_penalty}")
        if self.source_penalty <= 0:
            raise ValueError(f"source_penalty must be > 0, got {self.source_penalty}")
        if not math.isinf(self.transfer_coeff) and self.transfer_coeff <= 0:
            raise ValueError(f"transfer_coeff must be > 0, got {self.transfer_coeff}")
        mismatch = np.max(np.abs(self.initial_temp[ops.dirichlet_nodes] - self.boundary_temp))
        if mismatch != 0.0:
            raise ValueError(
                f"initial_temp disagrees with boundary_temp on GAMMA1 (max {mismatch:.3e})")


def _mass_of(ops, lumped):
    return ops.mass_lumped if lumped else ops.mass


def _gamma2_load(ops, lumped):
    # n x |GAMMA2| block mapping control values to the nodal load
    b2 = ops.bmass_gamma2_lumped if lumped else ops.bmass_gamma2
    return b2[:, ops.gamma2_nodes].tocsr()


class ParabolicStepper:
    """Prefactored backward-Euler marcher for one boundary-condition variant.

    alpha=None gives the Dirichlet variant (GAMMA1 rows eliminated, datum
    lifted); finite alpha > 0 gives the Robin variant on all nodes.  The same
    factorization drives the forward state recursion and its exact transpose,
    the backward adjoint recursion.
    """

    def __init__(self, ops: DiscreteOperators, grid: TimeGrid, alpha=None,
                 lumped: bool = False):
        if alpha is not None and math.isinf(alpha):
            alpha = None
        if alpha is not None and alpha <= 0:
            raise ValueError(f"transfer coefficient must be > 0, got {alpha}")
        self.ops = ops
        self.grid = grid
        self.alpha = alpha
        self.lumped = lumped
        self.mass = _mass_of(ops, lumped)
        self.load_gamma2 = _gamma2_load(ops, lumped)
        dt = grid.dt
        if alpha is None:
            a_full = (self.mass + dt * ops.stiffness).tocsr()
            f, d = ops.free_nodes, ops.dirichlet_nodes
            self._a_fd = a_full[np.ix_(f, d)].tocsr()
            self._solve = spd_solver(a_full[np.ix_(f, f)].tocsr())
        else:
            b1 = ops.bmass_gamma1_lumped if lumped else ops.bmass_gamma1
            a_full = (self.mass + dt * (ops.stiffness + alpha * b1)).tocsr()
            self._robin_b1 = b1
            self._solve = spd_solver(a_full)

    def run(self, initial, boundary_temp=None, source_values=None,
            flux_values=None) -> np.ndarray:
        """March the state recursion; returns the (N+1, n) trajectory."""
        ops, grid = self.ops, self.grid
        n, dt = ops.n_nodes, grid.dt
        nsteps = grid.n_steps
        u = np.empty((nsteps + 1, n))
        u[0] = initial

        b = np.zeros(ops.dirichlet_nodes.size) if boundary_temp is None else boundary_temp
        if self.alpha is None:
            f, d = ops.free_nodes, ops.dirichlet_nodes
            lift = self._a_fd @ b
            for k in range(1, nsteps + 1):
                rhs = self.mass @ u[k - 1]
                if source_values is not None:
                    rhs = rhs + dt * (self.mass @ source_values[k])
                if flux_values is not None:
                    rhs = rhs - dt * (self.load_gamma2 @ flux_values[k])
                u[k, f] = self._solve(rhs[f] - lift)
                u[k, d] = b
        else:
            b_ext = np.zeros(n)
            b_ext[ops.dirichlet_nodes] = b
            robin_load = dt * self.alpha * (self._robin_b1 @ b_ext)
            for k in range(1, nsteps + 1):
                rhs = self.mass @ u[k - 1] + robin_load
                if source_values is not None:
                    rhs = rhs + dt * (self.mass @ source_values[k])
                if flux_values is not None:
                    rhs = rhs - dt * (self.load_gamma2 @ flux_values[k])
                u[k] = self._solve(rhs)
        return u

    def run_adjoint(self, source_values: np.ndarray) -> np.ndarray:
        """March the transposed recursion backward from a zero terminal value.

        source_values[k] drives step k for k = 1..N; row 0 is ignored.  The
        returned row 0 is the homogeneous continuation of the recursion, kept
        for diagnostics only.
        """
        ops, grid = self.ops, self.grid
        n, dt = ops.n_nodes, grid.dt
        nsteps = grid.n_steps
        p = np.zeros((nsteps + 1, n))
        p_next = np.zeros(n)
        if self.alpha is None:
            f = ops.free_nodes
            for k in range(nsteps, 0, -1):
                rhs = self.mass @ p_next + dt * (self.mass @ source_values[k])
                p[k, f] = self._solve(rhs[f])
                p_next = p[k]
            p[0, f] = self._solve((self.mass @ p[1])[f])
        else:
            for k in range(nsteps, 0, -1):
                rhs = self.mass @ p_next + dt * (self.mass @ source_values[k])
                p[k] = self._solve(rhs)
                p_next = p[k]
            p[0] = self._solve(self.mass @ p[1])
        return p


def make_stepper(ops, grid, spec: ProblemSpec, variant: str,
                 lumped: bool = False) -> ParabolicStepper:
    """Stepper for a named variant; 'robin' with an infinite transfer
    coefficient falls back to the Dirichlet recursion."""
    if variant == "dirichlet":
        return ParabolicStepper(ops, grid, alpha=None, lumped=lumped)
    if variant == "robin":
        alpha = spec.transfer_coeff
        if math.isinf(alpha):
            return ParabolicStepper(ops, grid, alpha=None, lumped=lumped)
        return ParabolicStepper(ops, grid, alpha=alpha, lumped=lumped)
    raise ValueError(f"unknown variant {variant!r}, expected 'dirichlet' or 'robin'")


def solve_parabolic_dirichlet(ops: DiscreteOperators, spec: ProblemSpec,
                              q: BoundaryControl, grid: TimeGrid) -> TimeField:
    """Backward-Euler solution with the temperature datum imposed exactly."""
    spec.validate(ops, grid)
    _check_control(grid, ops, q)
    stepper = ParabolicStepper(ops, grid, alpha=None)
    u = stepper.run(spec.initial_temp, spec.boundary_temp,
                    spec.source.values, q.values)
    return TimeField(u)


def solve_parabolic_robin(ops: DiscreteOperators, spec: ProblemSpec,
                          q: BoundaryControl, grid: TimeGrid,
                          alpha: float | None = None) -> TimeField:
    """Backward-Euler solution with the Robin transfer condition on GAMMA1.

    alpha defaults to spec.transfer_coeff; +inf routes to the Dirichlet solver.
    """
    spec.validate(ops, grid)
    _check_control(grid, ops, q)
    if alpha is None:
        alpha = spec.transfer_coeff
    if math.isinf(alpha):
        return solve_parabolic_dirichlet(ops, spec, q, grid)
    if alpha <= 0:
        raise ValueError(f"transfer coefficient must be > 0, got {alpha}")
    stepper = ParabolicStepper(ops, grid, alpha=alpha)
    u = stepper.run(spec.initial_temp, spec.boundary_temp,
                    spec.source.values, q.values)
    return TimeField(u)


def solve_elliptic_dirichlet(ops: DiscreteOperators, g: np.ndarray,
                             q: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Steady solution: K u = M g - (GAMMA2 load) q on free nodes, u = b on GAMMA1."""
    g = np.asarray(g, dtype=float)
    q = np.asarray(q, dtype=float)
    b = np.asarray(b, dtype=float)
    if g.shape != (ops.n_nodes,):
        raise ValueError(f"g has shape {g.shape}, expected ({ops.n_nodes},)")
    if q.shape != (ops.gamma2_nodes.size,):
        raise ValueError(f"q has shape {q.shape}, expected ({ops.gamma2_nodes.size},)")
    if b.shape != (ops.dirichlet_nodes.size,):
        raise ValueError(f"b has shape {b.shape}, expected ({ops.dirichlet_nodes.size},)")
    f, d = ops.free_nodes, ops.dirichlet_nodes
    rhs = ops.mass @ g - _gamma2_load(ops, False) @ q
    lift = ops.stiffness[np.ix_(f, d)] @ b
    u = np.empty(ops.n_nodes)
    u[d] = b
    u[f] = spd_solver(ops.stiffness[np.ix_(f, f)].tocsr())(rhs[f] - lift)
    return u


def solve_elliptic_robin(ops: DiscreteOperators, g: np.ndarray, q: np.ndarray,
                         b: np.ndarray, alpha: float) -> np.ndarray:
    """Steady solution with the Robin condition: (K + alpha B1) u = rhs."""
    if math.isinf(alpha):
        return solve_elliptic_dirichlet(ops, g, q, b)
    if alpha <= 0:
        raise ValueError(f"transfer coefficient must be > 0, got {alpha}")
    g = np.asarray(g, dtype=float)
    q = np.asarray(q, dtype=float)
    b = np.asarray(b, dtype=float)
    if g.shape != (ops.n_nodes,):
        raise ValueError(f"g has shape {g.shape}, expected ({ops.n_nodes},)")
    if q.shape != (ops.gamma2_nodes.size,):
        raise ValueError(f"q has shape {q.shape}, expected ({ops.gamma2_nodes.size},)")
    if b.shape != (ops.dirichlet_nodes.size,):
        raise ValueError(f"b has shape {b.shape}, expected ({ops.dirichlet_nodes.size},)")
    b_ext = np.zeros(ops.n_nodes)
    b_ext[ops.dirichlet_nodes] = b
    rhs = ops.mass @ g - _gamma2_load(ops, False) @ q + alpha * (ops.bmass_gamma1 @ b_ext)
    a_mat = (ops.stiffness + alpha * ops.bmass_gamma1).tocsr()
    return spd_solver(a_mat)(rhs)
