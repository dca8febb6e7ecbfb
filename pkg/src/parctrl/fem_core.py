"""P1 finite elements on intervals and axis-aligned rectangle triangulations.

Provides mesh construction with two-part boundary tagging (GAMMA1 carries the
temperature datum, GAMMA2 the flux control), assembly of the stiffness, mass
and boundary-mass matrices, the discrete coercivity and trace constants via
power iterations, a deterministic SPD solver, and the discrete inner products
used by every other module.

All assembled objects are immutable after construction and safe to share
between threads; assembly and the eigen-iterations are single-threaded and
deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

GAMMA1 = "gamma1"
GAMMA2 = "gamma2"

LEFT, RIGHT, BOTTOM, TOP = "left", "right", "bottom", "top"
RECT_EDGES = (LEFT, RIGHT, BOTTOM, TOP)

# direct sparse factorization below this size, Jacobi-CG above
DIRECT_LIMIT = 20_000

EIG_TOL = 1e-10
EIG_MAX_ITER = 100_000


class MeshError(ValueError):
    pass


class SolverError(RuntimeError):
    pass


class EigenSolverError(SolverError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, t_final] with n_steps backward-Euler steps."""

    t_final: float
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.t_final <= 0:
            raise ValueError(f"t_final must be > 0, got {self.t_final}")

    @property
    def dt(self) -> float:
        return self.t_final / self.n_steps

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_final, self.n_steps + 1)


@dataclass
class TimeField:
    """Nodal coefficients per time step, shape (n_steps+1, n_nodes).

    Row k holds the field at t_k = k*dt.  Under the right-endpoint rectangle
    rule row 0 never enters a time integral.
    """

    values: np.ndarray

    @classmethod
    def zeros(cls, grid: TimeGrid, n_nodes: int) -> "TimeField":
        return cls(np.zeros((grid.n_steps + 1, n_nodes)))

    @classmethod
    def constant_in_time(cls, grid: TimeGrid, nodal: np.ndarray) -> "TimeField":
        return cls(np.tile(np.asarray(nodal, dtype=float), (grid.n_steps + 1, 1)))

    def copy(self) -> "TimeField":
        return TimeField(self.values.copy())


@dataclass
class BoundaryControl:
    """Flux values on the GAMMA2 nodes per time step, shape (n_steps+1, m)."""

    values: np.ndarray

    @classmethod
    def zeros(cls, grid: TimeGrid, n_gamma2: int) -> "BoundaryControl":
        return cls(np.zeros((grid.n_steps + 1, n_gamma2)))

    @classmethod
    def constant_in_time(cls, grid: TimeGrid, nodal: np.ndarray) -> "BoundaryControl":
        return cls(np.tile(np.asarray(nodal, dtype=float), (grid.n_steps + 1, 1)))

    def copy(self) -> "BoundaryControl":
        return BoundaryControl(self.values.copy())


@dataclass
class Mesh:
    """Simplicial mesh with every boundary facet tagged GAMMA1 or GAMMA2."""

    dim: int
    node_coords: np.ndarray          # (n, dim)
    elements: np.ndarray             # (ne, dim+1) node indices
    boundary_facets: list            # [(node index tuple, tag)]

    @property
    def n_nodes(self) -> int:
        return self.node_coords.shape[0]

    def tagged_nodes(self, tag: str) -> np.ndarray:
        nodes = sorted({i for facet, t in self.boundary_facets if t == tag for i in facet})
        return np.asarray(nodes, dtype=int)

    def to_json_dict(self) -> dict:
        return {
            "dim": self.dim,
            "node_coords": self.node_coords.tolist(),
            "elements": self.elements.tolist(),
            "boundary_facets": [[list(f), t] for f, t in self.boundary_facets],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "Mesh":
        return cls(
            dim=int(d["dim"]),
            node_coords=np.asarray(d["node_coords"], dtype=float),
            elements=np.asarray(d["elements"], dtype=int),
            boundary_facets=[(tuple(f), t) for f, t in d["boundary_facets"]],
        )


def build_interval_mesh(n_cells: int, left: float = 0.0, right: float = 1.0,
                        gamma1_side: str = LEFT) -> Mesh:
    """Uniform 1D mesh on [left, right]; one endpoint is GAMMA1, the other GAMMA2."""
    if n_cells < 2:
        raise MeshError(f"interval mesh needs n_cells >= 2, got {n_cells}")
    if not right > left:
        raise MeshError(f"degenerate interval [{left}, {right}]")
    if gamma1_side not in (LEFT, RIGHT):
        raise MeshError(f"gamma1_side must be '{LEFT}' or '{RIGHT}', got {gamma1_side!r}")
    coords = np.linspace(left, right, n_cells + 1).reshape(-1, 1)
    elements = np.column_stack([np.arange(n_cells), np.arange(1, n_cells + 1)])
    if gamma1_side == LEFT:
        facets = [((0,), GAMMA1), ((n_cells,), GAMMA2)]
    else:
        facets = [((n_cells,), GAMMA1), ((0,), GAMMA2)]
    return Mesh(dim=1, node_coords=coords, elements=elements, boundary_facets=facets)


def build_rect_mesh(nx: int, ny: int, gamma1_edges) -> Mesh:
    """Unit square split into axis-aligned right triangles (right isoceles
    when nx == ny); never obtuse, so the lumped-mass comparison principle
    holds.

    gamma1_edges is a nonempty, proper subset of {left, right, bottom, top};
    the remaining edges are tagged GAMMA2 so both boundary parts have positive
    measure.  Nodes where the two parts meet count as datum nodes.
    """
    if nx < 2 or ny < 2:
        raise MeshError(f"rect mesh needs nx, ny >= 2, got ({nx}, {ny})")
    edges = set(gamma1_edges)
    if not edges:
        raise MeshError("gamma1_edges is empty: the temperature part of the boundary "
                        "would have zero measure")
    if not edges <= set(RECT_EDGES):
        raise MeshError(f"unknown edge names: {sorted(edges - set(RECT_EDGES))}")
    if edges == set(RECT_EDGES):
        raise MeshError("gamma1_edges covers the whole boundary: the flux part "
                        "would have zero measure")

    xs = np.linspace(0.0, 1.0, nx + 1)
    ys = np.linspace(0.0, 1.0, ny + 1)
    # node (i, j) -> j*(nx+1) + i
    coords = np.array([[x, y] for y in ys for x in xs])

    def nid(i, j):
        return j * (nx + 1) + i

    tris = []
    for j in range(ny):
        for i in range(nx):
            n00, n10 = nid(i, j), nid(i + 1, j)
            n01, n11 = nid(i, j + 1), nid(i + 1, j + 1)
            # split along the lower-left to upper-right diagonal: both halves
            # are right isoceles, so the lumped-mass maximum principle holds
            tris.append((n00, n10, n11))
            tris.append((n00, n11, n01))
    elements = np.asarray(tris, dtype=int)

    def tag_for(edge):
        return GAMMA1 if edge in edges else GAMMA2

    facets = []
    for j in range(ny):
        facets.append(((nid(0, j), nid(0, j + 1)), tag_for(LEFT)))
        facets.append(((nid(nx, j), nid(nx, j + 1)), tag_for(RIGHT)))
    for i in range(nx):
        facets.append(((nid(i, 0), nid(i + 1, 0)), tag_for(BOTTOM)))
        facets.append(((nid(i, ny), nid(i + 1, ny)), tag_for(TOP)))
    return Mesh(dim=2, node_coords=coords, elements=elements, boundary_facets=facets)


@dataclass
class DiscreteOperators:
    """Assembled P1 matrices plus the discrete spectral constants.

    stiffness            K,   houses the gradient form
    mass / mass_lumped   M_H, houses the L2(Omega) product
    bmass_gamma1(_lumped)     boundary mass on the temperature part (Robin term)
    bmass_gamma2(_lumped)     boundary mass on the flux part (control pairing)
    lambda0              coercivity of the gradient form on {v: v=0 on GAMMA1}
    lambda1              coercivity of gradient form + GAMMA1 mass on all of V
    trace_norm           discrete norm of the GAMMA2 trace operator
    """

    mesh: Mesh
    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    mass_lumped: sp.csr_matrix
    bmass_gamma1: sp.csr_matrix
    bmass_gamma1_lumped: sp.csr_matrix
    bmass_gamma2: sp.csr_matrix
    bmass_gamma2_lumped: sp.csr_matrix
    dirichlet_nodes: np.ndarray
    gamma2_nodes: np.ndarray
    free_nodes: np.ndarray
    lambda0: float = 0.0
    lambda1: float = 0.0
    trace_norm: float = 0.0
    # |GAMMA2| x |GAMMA2| Gram matrix of the control space
    bmass_gamma2_sub: sp.csr_matrix = field(default=None, repr=False)

    @property
    def n_nodes(self) -> int:
        return self.mesh.n_nodes

    def v_matrix(self) -> sp.csr_matrix:
        """Gram matrix of the H1 norm: gradient part plus mass."""
        return (self.stiffness + self.mass).tocsr()


def _interval_local(h):
    k = np.array([[1.0, -1.0], [-1.0, 1.0]]) / h
    m = np.array([[2.0, 1.0], [1.0, 2.0]]) * (h / 6.0)
    return k, m


def _triangle_local(coords):
    x, y = coords[:, 0], coords[:, 1]
    area2 = (x[1] - x[0]) * (y[2] - y[0]) - (x[2] - x[0]) * (y[1] - y[0])
    area = 0.5 * abs(area2)
    if area <= 0.0:
        raise MeshError("zero-area element encountered during assembly")
    b = np.array([y[1] - y[2], y[2] - y[0], y[0] - y[1]]) / area2
    c = np.array([x[2] - x[1], x[0] - x[2], x[1] - x[0]]) / area2
    k = area * (np.outer(b, b) + np.outer(c, c))
    m = area / 12.0 * (np.ones((3, 3)) + np.eye(3))
    return k, m


def _facet_mass(mesh, tag):
    n = mesh.n_nodes
    rows, cols, vals = [], [], []
    for facet, t in mesh.boundary_facets:
        if t != tag:
            continue
        if len(facet) == 1:
            # 1D: the boundary measure is the counting measure
            rows.append(facet[0]); cols.append(facet[0]); vals.append(1.0)
        else:
            i, j = facet
            length = float(np.linalg.norm(mesh.node_coords[j] - mesh.node_coords[i]))
            loc = np.array([[2.0, 1.0], [1.0, 2.0]]) * (length / 6.0)
            for a, ga in enumerate((i, j)):
                for b_, gb in enumerate((i, j)):
                    rows.append(ga); cols.append(gb); vals.append(loc[a, b_])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _lump(mat: sp.csr_matrix) -> sp.csr_matrix:
    return sp.diags(np.asarray(mat.sum(axis=1)).ravel(), format="csr")


def assemble(mesh: Mesh) -> DiscreteOperators:
    """Assemble all bilinear forms with exact element quadrature and compute
    the spectral constants."""
    n = mesh.n_nodes
    rows, cols, kvals, mvals = [], [], [], []
    for elem in mesh.elements:
        coords = mesh.node_coords[list(elem)]
        if mesh.dim == 1:
            h = coords[1, 0] - coords[0, 0]
            if h <= 0.0:
                raise MeshError("zero-area element encountered during assembly")
            k_loc, m_loc = _interval_local(h)
        else:
            k_loc, m_loc = _triangle_local(coords)
        for a, ga in enumerate(elem):
            for b, gb in enumerate(elem):
                rows.append(ga); cols.append(gb)
                kvals.append(k_loc[a, b]); mvals.append(m_loc[a, b])

    stiffness = sp.csr_matrix((kvals, (rows, cols)), shape=(n, n))
    mass = sp.csr_matrix((mvals, (rows, cols)), shape=(n, n))
    b1 = _facet_mass(mesh, GAMMA1)
    b2 = _facet_mass(mesh, GAMMA2)

    dirichlet = mesh.tagged_nodes(GAMMA1)
    gamma2 = mesh.tagged_nodes(GAMMA2)
    if dirichlet.size == 0 or gamma2.size == 0:
        raise MeshError("both boundary parts must have positive measure")
    free = np.setdiff1d(np.arange(n), dirichlet)

    ops = DiscreteOperators(
        mesh=mesh,
        stiffness=stiffness,
        mass=mass,
        mass_lumped=_lump(mass),
        bmass_gamma1=b1,
        bmass_gamma1_lumped=_lump(b1),
        bmass_gamma2=b2,
        bmass_gamma2_lumped=_lump(b2),
        dirichlet_nodes=dirichlet,
        gamma2_nodes=gamma2,
        free_nodes=free,
        bmass_gamma2_sub=b2[np.ix_(gamma2, gamma2)].tocsr(),
    )
    ops.lambda0 = coercivity_constant(ops, "v0")
    ops.lambda1 = coercivity_constant(ops, "v_robin")
    ops.trace_norm = trace_norm(ops)
    return ops


def _start_vector(n):
    # deterministic, not orthogonal to the slowly varying principal modes
    return np.ones(n) + 1e-3 * np.linspace(0.0, 1.0, n)


def _smallest_pencil_eig(a_mat, b_mat, tol=EIG_TOL, max_iter=EIG_MAX_ITER):
    """Smallest eigenvalue of A x = lam B x by inverse power iteration, both SPD."""
    solve = spla.factorized(a_mat.tocsc())
    x = _start_vector(a_mat.shape[0])
    x /= np.sqrt(x @ (b_mat @ x))
    lam_old = np.inf
    for _ in range(max_iter):
        y = solve(b_mat @ x)
        bn = np.sqrt(y @ (b_mat @ y))
        if bn == 0.0:
            raise EigenSolverError("inverse iteration produced a null vector")
        y /= bn
        lam = y @ (a_mat @ y)
        if abs(lam - lam_old) <= tol * abs(lam):
            return float(lam)
        lam_old = lam
        x = y
    raise EigenSolverError(f"inverse power iteration did not converge in {max_iter} iterations")


def _largest_pencil_eig(a_mat, b_mat, tol=EIG_TOL, max_iter=EIG_MAX_ITER):
    """Largest eigenvalue of A x = mu B x by power iteration; A PSD, B SPD."""
    solve = spla.factorized(b_mat.tocsc())
    x = _start_vector(b_mat.shape[0])
    x /= np.sqrt(x @ (b_mat @ x))
    mu_old = np.inf
    for _ in range(max_iter):
        ax = a_mat @ x
        y = solve(ax)
        bn = np.sqrt(y @ (b_mat @ y))
        if bn == 0.0:
            raise EigenSolverError("power iteration start vector lies in the kernel")
        y /= bn
        mu = y @ (a_mat @ y)
        if abs(mu - mu_old) <= tol * abs(mu):
            return float(mu)
        mu_old = mu
        x = y
    raise EigenSolverError(f"power iteration did not converge in {max_iter} iterations")


def coercivity_constant(ops: DiscreteOperators, space: str) -> float:
    """Discrete coercivity constant against the H1 Gram matrix.

    space="v0":      inf of vKv / v(K+M)v over v vanishing on GAMMA1
    space="v_robin": inf of v(K+B1)v / v(K+M)v over all v
    """
    v_mat = ops.v_matrix()
    if space == "v0":
        f = ops.free_nodes
        a_mat = ops.stiffness[np.ix_(f, f)].tocsc()
        b_mat = v_mat[np.ix_(f, f)].tocsr()
    elif space == "v_robin":
        a_mat = (ops.stiffness + ops.bmass_gamma1).tocsc()
        b_mat = v_mat
    else:
        raise ValueError(f"unknown space {space!r}, expected 'v0' or 'v_robin'")
    return _smallest_pencil_eig(a_mat, b_mat)


def trace_norm(ops: DiscreteOperators) -> float:
    """Discrete operator norm of the GAMMA2 trace: sqrt of the largest
    eigenvalue of B2 x = mu (K+M) x over all of V."""
    mu = _largest_pencil_eig(ops.bmass_gamma2, ops.v_matrix())
    return float(np.sqrt(mu))


def lambda_alpha(ops: DiscreteOperators, alpha: float) -> float:
    """Coercivity constant of the Robin form: lambda1 * min(1, alpha)."""
    if alpha <= 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    return ops.lambda1 * min(1.0, alpha)


def spd_solver(a_mat: sp.spmatrix, tol: float = 1e-12, direct_limit: int = DIRECT_LIMIT):
    """Return a deterministic solve callable for an SPD matrix.

    Direct sparse factorization up to direct_limit unknowns, Jacobi-CG above.
    """
    n = a_mat.shape[0]
    if n <= direct_limit:
        lu = spla.factorized(a_mat.tocsc())

        def solve(rhs):
            return lu(rhs)

        return solve

    diag = a_mat.diagonal()
    if np.any(diag <= 0):
        raise SolverError("non-positive diagonal entry: matrix is not SPD")
    inv_diag = 1.0 / diag
    a_csr = a_mat.tocsr()

    def solve(rhs):
        x, r = np.zeros_like(rhs), rhs.copy()
        z = inv_diag * r
        p = z.copy()
        rz = r @ z
        rhs_norm = np.linalg.norm(rhs)
        if rhs_norm == 0.0:
            return x
        for _ in range(10 * n):
            ap = a_csr @ p
            pap = p @ ap
            if pap <= 0.0:
                raise SolverError("indefiniteness detected in CG (pAp <= 0)")
            alpha = rz / pap
            x += alpha * p
            r -= alpha * ap
            if np.linalg.norm(r) <= tol * rhs_norm:
                return x
            z = inv_diag * r
            rz_new = r @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
        raise SolverError("CG iteration cap exceeded without reaching tolerance")

    return solve


def solve_spd(a_mat: sp.spmatrix, rhs: np.ndarray, tol: float = 1e-12,
              direct_limit: int = DIRECT_LIMIT) -> np.ndarray:
    """Solve A x = rhs for SPD A with residual norm <= tol * ||rhs||.

    The direct path adds one step of iterative refinement if the first
    factorized solve misses the tolerance; failing after that is diagnosed.
    """
    rhs = np.asarray(rhs, dtype=float)
    solve = spd_solver(a_mat, tol=tol, direct_limit=direct_limit)
    x = solve(rhs)
    rhs_norm = np.linalg.norm(rhs)
    if rhs_norm == 0.0:
        return x
    res = rhs - a_mat @ x
    if np.linalg.norm(res) > tol * rhs_norm:
        x = x + solve(res)
        res = rhs - a_mat @ x
        if np.linalg.norm(res) > tol * rhs_norm:
            raise SolverError(
                f"solver residual {np.linalg.norm(res):.3e} exceeds "
                f"{tol:.1e} * ||rhs||; matrix may be indefinite or singular")
    return x


# ---------------------------------------------------------------------------
# discrete inner products; time integrals use the right-endpoint rectangle
# rule sum_{k=1..N} dt * (.,.) so the backward-Euler adjoint is exact
# ---------------------------------------------------------------------------

def inner_domain(ops: DiscreteOperators, u: np.ndarray, v: np.ndarray) -> float:
    u, v = np.asarray(u), np.asarray(v)
    if u.shape != (ops.n_nodes,) or v.shape != (ops.n_nodes,):
        raise ValueError(f"expected nodal vectors of length {ops.n_nodes}")
    return float(u @ (ops.mass @ v))


def inner_boundary(ops: DiscreteOperators, q: np.ndarray, r: np.ndarray) -> float:
    q, r = np.asarray(q), np.asarray(r)
    m = ops.gamma2_nodes.size
    if q.shape != (m,) or r.shape != (m,):
        raise ValueError(f"expected flux-boundary vectors of length {m}")
    return float(q @ (ops.bmass_gamma2_sub @ r))


def _check_field(grid, ops, tf: TimeField, name="field"):
    want = (grid.n_steps + 1, ops.n_nodes)
    if tf.values.shape != want:
        raise ValueError(f"{name} has shape {tf.values.shape}, expected {want}")


def _check_control(grid, ops, bc: BoundaryControl, name="control"):
    want = (grid.n_steps + 1, ops.gamma2_nodes.size)
    if bc.values.shape != want:
        raise ValueError(f"{name} has shape {bc.values.shape}, expected {want}")


def inner_domain_time(grid: TimeGrid, ops: DiscreteOperators,
                      u: TimeField, v: TimeField) -> float:
    _check_field(grid, ops, u)
    _check_field(grid, ops, v)
    uu, vv = u.values[1:], v.values[1:]
    return grid.dt * float(np.sum(uu * (ops.mass @ vv.T).T))


def inner_boundary_time(grid: TimeGrid, ops: DiscreteOperators,
                        q: BoundaryControl, r: BoundaryControl) -> float:
    _check_control(grid, ops, q)
    _check_control(grid, ops, r)
    qq, rr = q.values[1:], r.values[1:]
    return grid.dt * float(np.sum(qq * (ops.bmass_gamma2_sub @ rr.T).T))


def norm_domain_time(grid, ops, u: TimeField) -> float:
    return float(np.sqrt(max(inner_domain_time(grid, ops, u, u), 0.0)))


def norm_boundary_time(grid, ops, q: BoundaryControl) -> float:
    return float(np.sqrt(max(inner_boundary_time(grid, ops, q, q), 0.0)))


def norm_h1_time(grid, ops, u: TimeField) -> float:
    """L2-in-time H1-in-space norm: sum_k dt * u_k (K+M) u_k, square-rooted."""
    _check_field(grid, ops, u)
    v_mat = ops.v_matrix()
    uu = u.values[1:]
    return float(np.sqrt(max(grid.dt * np.sum(uu * (v_mat @ uu.T).T), 0.0)))


def norm_gamma1_time(grid, ops, u: TimeField) -> float:
    """L2-in-time L2(GAMMA1)-in-space norm of a full nodal field."""
    _check_field(grid, ops, u)
    uu = u.values[1:]
    return float(np.sqrt(max(grid.dt * np.sum(uu * (ops.bmass_gamma1 @ uu.T).T), 0.0)))
