"""Quasi-static cohesive phase-field fracture solver on a structured grid.

Displacements are discretized with bilinear quadrilateral elements (2x2
Gauss quadrature) and the damage field with the same bilinear nodes. Each
load increment alternates between a linear elastic solve with per-cell
degraded stiffness and a bound-constrained Newton solve of the damage
equation, iterating until the damage update stagnates.

Model ingredients:

* geometric crack function ``alpha(phi) = 2 phi - phi**2`` with
  normalization constant ``C0 = pi``;
* rational degradation function ``omega`` whose first coefficient is
  ``a1 = (4/pi) * (E * Gc / sigma_u**2) / lc`` with (a2, a3) chosen by the
  softening law (linear by default), so that the homogeneous response peaks
  at the material strength ``sigma_u`` and is insensitive to ``lc``;
* per-cell history variable ``H``, the running maximum of the crack driving
  force, floored at ``sigma_u**2 / (2 E)`` so damage cannot nucleate below
  the strength;
* driving force either from the positive maximum principal effective stress
  (default) or the full undamaged strain energy density.

Boundary conditions are fixed to the tension setup used for the dataset:
left edge roller (u_x = 0), bottom edge roller (u_y = 0), right edge pulled
in x, top edge traction free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, SolverFailureError
from .raster import GridSpec, MaterialFieldMaps, PhaseProperties

# Normalization constant of the crack surface density for alpha = 2p - p^2:
# C0 = 4 * integral_0^1 sqrt(alpha(s)) ds.
C0 = math.pi

SOFTENING_COEFFS = {
    "linear": (-0.5, 0.0),
    "exponential": (2.0 ** (5.0 / 3.0) - 3.0, 0.0),
}

_GAUSS = 1.0 / math.sqrt(3.0)


@dataclass
class SolverConfig:
    """Numerical parameters for one fracture simulation."""

    lc: float = 0.3  # phase-field length scale, mm
    softening: str = "linear"
    plane_assumption: str = "plane_stress"
    n_load_steps: int = 400
    u_max: float = 0.05  # final prescribed displacement, mm
    staggered_tol: float = 1e-3  # max |delta phi| per staggered pass
    staggered_max_iters: int = 50
    linear_solver_rel_tol: float = 1e-8
    driving_force: str = "rankine"  # or "full_energy"
    linear_solver_max_iters: int = 50000
    residual_stiffness: float = 1e-8  # stiffness floor keeping K invertible
    newton_tol: float = 1e-6  # damage Newton, relative residual
    newton_max_iters: int = 30
    capture_every: int = 4

    def validate(self, grid: GridSpec | None = None) -> None:
        if self.softening not in SOFTENING_COEFFS:
            raise ConfigError(f"unknown softening '{self.softening}'")
        if self.plane_assumption not in ("plane_stress", "plane_strain"):
            raise ConfigError(f"unknown plane assumption '{self.plane_assumption}'")
        if self.driving_force not in ("rankine", "full_energy"):
            raise ConfigError(f"unknown driving force '{self.driving_force}'")
        if self.u_max <= 0:
            raise ConfigError("u_max must be positive")
        if self.n_load_steps < 1:
            raise ConfigError("n_load_steps must be >= 1")
        for name in ("staggered_tol", "linear_solver_rel_tol", "newton_tol"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.capture_every < 1:
            raise ConfigError("capture_every must be >= 1")
        if grid is not None and self.lc < 2.0 * grid.cell_size - 1e-12:
            raise ConfigError(
                f"lc = {self.lc} under-resolved: needs lc >= 2 * cell_size "
                f"= {2.0 * grid.cell_size}"
            )


@dataclass
class BoundaryConditions:
    """Monotone x-tension: ubar(load_factor) on the right edge."""

    u_max: float = 0.05
    n_load_steps: int = 400

    def ubar(self, step: int) -> float:
        return self.u_max * step / self.n_load_steps


@dataclass
class DegradationCoefficients:
    """Coefficients of the rational degradation function (a1 may be per cell)."""

    a1: np.ndarray | float
    a2: float
    a3: float


@dataclass
class FieldState:
    """Nodal and per-cell solution state; see module docstring for layout."""

    u: np.ndarray  # (n+1, n+1, 2) nodal displacements, mm
    phi: np.ndarray  # (n+1, n+1) nodal damage in [0, 1]
    H: np.ndarray  # (n, n) per-cell history variable, MPa
    eps: np.ndarray  # (n, n, 3) centroid strains (eps_x, eps_y, gamma_xy)
    sig: np.ndarray  # (n, n, 3) centroid stresses, MPa
    internal_force: np.ndarray  # (n+1, n+1, 2) assembled K u of last solve
    step_index: int = 0


@dataclass
class Frame:
    """Captured per-cell snapshot at one load step."""

    step: int
    eps_x: np.ndarray
    eps_y: np.ndarray
    sig_x: np.ndarray
    sig_y: np.ndarray
    phi: np.ndarray  # cell means
    converged: bool = True


@dataclass
class SimulationResult:
    grid: GridSpec
    maps: MaterialFieldMaps
    config: SolverConfig
    frames: list[Frame]
    strain: np.ndarray  # per step, incl. step 0
    stress: np.ndarray  # per step, MPa
    converged: np.ndarray  # per step, bool
    state: FieldState
    failed: bool = False
    failure_message: str = ""


# ---------------------------------------------------------------------------
# Material point functions
# ---------------------------------------------------------------------------


def lame_constants(E: float, nu: float, plane_assumption: str = "plane_stress"):
    """Lame constants (lambda, mu); lambda reduced for plane stress."""
    if nu >= 0.5:
        raise ConfigError("nu = 0.5 (incompressible) is not supported")
    mu = E / (2.0 * (1.0 + nu))
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    if plane_assumption == "plane_stress":
        lam = 2.0 * lam * mu / (lam + 2.0 * mu)
    elif plane_assumption != "plane_strain":
        raise ConfigError(f"unknown plane assumption '{plane_assumption}'")
    return lam, mu


def alpha(phi):
    """Crack geometric function."""
    return 2.0 * phi - phi * phi


def alpha_prime(phi):
    return 2.0 - 2.0 * phi


def _omega_parts(phi, coeffs: DegradationCoefficients):
    one = 1.0 - phi
    num = one * one
    den = num + coeffs.a1 * phi * (1.0 + coeffs.a2 * phi * (1.0 + coeffs.a3 * phi))
    return one, num, den


def omega(phi, coeffs: DegradationCoefficients):
    """Rational stiffness degradation function; omega(0)=1, omega(1)=0."""
    _, num, den = _omega_parts(phi, coeffs)
    return num / den


def omega_prime(phi, coeffs: DegradationCoefficients):
    """Analytic derivative of :func:`omega`."""
    one, num, den = _omega_parts(phi, coeffs)
    dnum = -2.0 * one
    dden = dnum + coeffs.a1 * (1.0 + 2.0 * coeffs.a2 * phi + 3.0 * coeffs.a2 * coeffs.a3 * phi * phi)
    return (dnum * den - num * dden) / (den * den)


def _omega_second(phi, coeffs: DegradationCoefficients):
    one, num, den = _omega_parts(phi, coeffs)
    dnum = -2.0 * one
    dden = dnum + coeffs.a1 * (1.0 + 2.0 * coeffs.a2 * phi + 3.0 * coeffs.a2 * coeffs.a3 * phi * phi)
    d2den = 2.0 + coeffs.a1 * (2.0 * coeffs.a2 + 6.0 * coeffs.a2 * coeffs.a3 * phi)
    first = dnum * den - num * dden
    return (2.0 * den - num * d2den) / (den * den) - 2.0 * dden * first / (den * den * den)


def psi0(eps, lam: float, mu: float):
    """Undamaged strain energy density; eps = (eps_x, eps_y, gamma_xy)."""
    eps = np.asarray(eps, dtype=float)
    ex, ey, g = eps[..., 0], eps[..., 1], eps[..., 2]
    tr = ex + ey
    return 0.5 * lam * tr * tr + mu * (ex * ex + ey * ey + 0.5 * g * g)


def degradation_coefficients(
    material: PhaseProperties, lc: float, softening: str = "linear"
) -> DegradationCoefficients:
    """Coefficients for one material; a1 scales with the Irwin length over lc."""
    if softening not in SOFTENING_COEFFS:
        raise ConfigError(f"unknown softening '{softening}'")
    a2, a3 = SOFTENING_COEFFS[softening]
    l_ch = material.E * material.Gc / material.sigma_u**2
    a1 = (4.0 / C0) * l_ch / lc
    return DegradationCoefficients(a1=a1, a2=a2, a3=a3)


def _effective_stress(eps, lam, mu):
    ex, ey, g = eps[..., 0], eps[..., 1], eps[..., 2]
    sx = (lam + 2.0 * mu) * ex + lam * ey
    sy = lam * ex + (lam + 2.0 * mu) * ey
    txy = mu * g
    return sx, sy, txy


def _driving_force_arrays(eps, E, lam, mu, sigma_u, mode: str):
    floor = sigma_u * sigma_u / (2.0 * E)
    if mode == "rankine":
        sx, sy, txy = _effective_stress(eps, lam, mu)
        mid = 0.5 * (sx + sy)
        rad = np.sqrt(0.25 * (sx - sy) ** 2 + txy * txy)
        s1 = np.maximum(mid + rad, 0.0)
        y = s1 * s1 / (2.0 * E)
    elif mode == "full_energy":
        y = psi0(eps, lam, mu)
    else:
        raise ConfigError(f"unknown driving force '{mode}'")
    return np.maximum(y, floor)


def driving_force(
    eps,
    material: PhaseProperties,
    mode: str = "rankine",
    plane_assumption: str = "plane_stress",
):
    """Crack driving force of one material point, floored at nucleation."""
    lam, mu = lame_constants(material.E, material.nu, plane_assumption)
    return _driving_force_arrays(np.asarray(eps, dtype=float), material.E, lam, mu, material.sigma_u, mode)


def optimal_profile_1d(x, lc: float, variant: int = 1):
    """Closed-form 1D diffuse crack profiles centered at x = 0.

    Variant 1 is the compact parabolic profile (support 2 lc), variant 2 the
    exponential, variant 3 the sine-based profile valid for
    ``|x| <= pi/2 * lc`` and clamped to zero beyond.
    """
    if lc <= 0:
        raise ConfigError("lc must be positive")
    ax = np.abs(np.asarray(x, dtype=float))
    if variant == 1:
        return np.where(ax <= 2.0 * lc, (ax / (2.0 * lc) - 1.0) ** 2, 0.0)
    if variant == 2:
        return np.exp(-ax / lc)
    if variant == 3:
        return np.where(ax <= 0.5 * math.pi * lc, 1.0 - np.sin(ax / lc), 0.0)
    raise ConfigError(f"unknown profile variant {variant}")


# ---------------------------------------------------------------------------
# Structured-grid FEM
# ---------------------------------------------------------------------------


def _shape_functions(xi: float, eta: float):
    n = 0.25 * np.array(
        [(1 - xi) * (1 - eta), (1 + xi) * (1 - eta), (1 + xi) * (1 + eta), (1 - xi) * (1 + eta)]
    )
    dxi = 0.25 * np.array([-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)])
    deta = 0.25 * np.array([-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)])
    return n, dxi, deta


def _b_matrix(dndx: np.ndarray, dndy: np.ndarray) -> np.ndarray:
    b = np.zeros((3, 8))
    b[0, 0::2] = dndx
    b[1, 1::2] = dndy
    b[2, 0::2] = dndy
    b[2, 1::2] = dndx
    return b


def _d_matrix(lam: float, mu: float) -> np.ndarray:
    return np.array(
        [[lam + 2.0 * mu, lam, 0.0], [lam, lam + 2.0 * mu, 0.0], [0.0, 0.0, mu]]
    )


def _csr_template(edof: np.ndarray, ndof: int):
    """Fixed sparsity pattern for repeated assembly of element blocks.

    Returns (inverse map from stacked element entries to csr slots, csr
    indices, csr indptr, number of stored entries).
    """
    k = edof.shape[1]
    rows = np.repeat(edof, k, axis=1).ravel()
    cols = np.tile(edof, (1, k)).ravel()
    keys = rows.astype(np.int64) * ndof + cols.astype(np.int64)
    ukeys, inv = np.unique(keys, return_inverse=True)
    indices = (ukeys % ndof).astype(np.int32)
    urows = (ukeys // ndof).astype(np.int64)
    indptr = np.zeros(ndof + 1, dtype=np.int64)
    np.add.at(indptr, urows + 1, 1)
    indptr = np.cumsum(indptr)
    return inv, indices, indptr, len(ukeys)


class PhaseFieldSolver:
    """Staggered displacement / damage solver bound to one material map."""

    def __init__(self, maps: MaterialFieldMaps, grid: GridSpec, config: SolverConfig):
        config.validate(grid)
        grid.validate()
        if maps.phase.shape != (grid.n_cells, grid.n_cells):
            raise ConfigError("material maps do not match the grid")
        self.maps = maps
        self.grid = grid
        self.config = config
        self.bc = BoundaryConditions(u_max=config.u_max, n_load_steps=config.n_load_steps)

        n = grid.n_cells
        h = grid.cell_size
        self.n = n
        self.h = h
        self.n_nodes_side = n + 1
        self.n_nodes = (n + 1) * (n + 1)
        self.n_dof = 2 * self.n_nodes
        self.n_cells = n * n
        self._detj = 0.25 * h * h

        # Connectivity: cell (i, j) -> nodes (bl, br, tr, tl), CCW.
        jj, ii = np.meshgrid(np.arange(n), np.arange(n))
        n0 = (ii * (n + 1) + jj).ravel()
        self.edof_phi = np.column_stack([n0, n0 + 1, n0 + n + 2, n0 + n + 1]).astype(np.int64)
        self.edof_u = np.empty((self.n_cells, 8), dtype=np.int64)
        self.edof_u[:, 0::2] = 2 * self.edof_phi
        self.edof_u[:, 1::2] = 2 * self.edof_phi + 1

        # Quadrature tables.
        gps = [(-_GAUSS, -_GAUSS), (_GAUSS, -_GAUSS), (_GAUSS, _GAUSS), (-_GAUSS, _GAUSS)]
        self._n_gp = np.empty((4, 4))
        self._nn_gp = np.empty((4, 4, 4))
        grad_stiff = np.zeros((4, 4))
        b_gps = []
        for g, (xi, eta) in enumerate(gps):
            nvec, dxi, deta = _shape_functions(xi, eta)
            self._n_gp[g] = nvec
            self._nn_gp[g] = np.outer(nvec, nvec)
            dndx = dxi * 2.0 / h
            dndy = deta * 2.0 / h
            grad = np.vstack([dndx, dndy])
            grad_stiff += grad.T @ grad * self._detj
            b_gps.append(_b_matrix(dndx, dndy))
        self._grad_stiff = grad_stiff
        _, dxi0, deta0 = _shape_functions(0.0, 0.0)
        self._b_cent = _b_matrix(dxi0 * 2.0 / h, deta0 * 2.0 / h)

        # Per-cell material arrays (flattened, C order matching edof rows).
        self._E = maps.E_map.ravel()
        self._nu = maps.nu_map.ravel()
        self._Gc = maps.Gc_map.ravel()
        self._sigma_u = maps.sigma_u_map.ravel()
        lam = np.empty(self.n_cells)
        mu = np.empty(self.n_cells)
        pairs, pair_idx = np.unique(
            np.column_stack([self._E, self._nu]), axis=0, return_inverse=True
        )
        ke_flat = np.empty((len(pairs), 64))
        for p, (e_val, nu_val) in enumerate(pairs):
            lam_p, mu_p = lame_constants(float(e_val), float(nu_val), config.plane_assumption)
            ke = np.zeros((8, 8))
            d = _d_matrix(lam_p, mu_p)
            for b in b_gps:
                ke += b.T @ d @ b * self._detj
            ke_flat[p] = ke.ravel()
            lam[pair_idx == p] = lam_p
            mu[pair_idx == p] = mu_p
        self._lam = lam
        self._mu = mu
        self._ke_cells = ke_flat[pair_idx]

        coeffs = SOFTENING_COEFFS[config.softening]
        l_ch = self._E * self._Gc / self._sigma_u**2
        self.coeffs = DegradationCoefficients(
            a1=(4.0 / C0) * l_ch / config.lc, a2=coeffs[0], a3=coeffs[1]
        )
        self._coeffs_col = DegradationCoefficients(
            a1=self.coeffs.a1[:, None], a2=coeffs[0], a3=coeffs[1]
        )
        self._h_floor = self._sigma_u**2 / (2.0 * self._E)
        # Damage equation coefficients per cell.
        self._c_alpha = self._Gc / (C0 * config.lc)
        self._c_grad = 2.0 * self._Gc * config.lc / C0

        # Assembly templates.
        self._u_inv, self._u_indices, self._u_indptr, self._u_nnz = _csr_template(
            self.edof_u, self.n_dof
        )

        # Dirichlet sets: left u_x = 0, bottom u_y = 0, right u_x = ubar.
        side = self.n_nodes_side
        node_ids = np.arange(self.n_nodes).reshape(side, side)
        self._left_nodes = node_ids[:, 0]
        self._right_nodes = node_ids[:, -1]
        self._bottom_nodes = node_ids[0, :]
        self._fixed_zero = np.concatenate(
            [2 * self._left_nodes, 2 * self._bottom_nodes + 1]
        )
        self._driven = 2 * self._right_nodes
        cons = np.unique(np.concatenate([self._fixed_zero, self._driven]))
        self._cons_dofs = cons
        mask = np.ones(self.n_dof, dtype=bool)
        mask[cons] = False
        self._free_dofs = np.flatnonzero(mask)

        # Index map extracting the free-free stiffness block without slicing:
        # a probe matrix with arange data records where every stored entry of
        # the full pattern lands in the sliced pattern.
        nfree = len(self._free_dofs)
        probe = sp.csr_matrix(
            (np.arange(self._u_nnz, dtype=np.float64), self._u_indices, self._u_indptr),
            shape=(self.n_dof, self.n_dof),
        )
        sub = probe[self._free_dofs][:, self._free_dofs].tocsr()
        self._ff_map = sub.data.astype(np.int64)
        self._ff_indices = sub.indices
        self._ff_indptr = sub.indptr
        self._n_free = nfree

        self._last_K: sp.csr_matrix | None = None
        self._last_Kff: sp.csr_matrix | None = None
        self._last_omega: np.ndarray | None = None
        self._last_ubar: float | None = None
        self._pc_lu = None  # LU of some (possibly stale) Kff, used as preconditioner
        self._phi_increment = np.zeros(self.n_nodes)
        self._phase_newton_ok = True
        self._newton_scale = float(np.max(2.0 * self._c_alpha) * self._detj * 4.0)

    # -- state ----------------------------------------------------------

    def initial_state(self) -> FieldState:
        side = self.n_nodes_side
        n = self.n
        return FieldState(
            u=np.zeros((side, side, 2)),
            phi=np.zeros((side, side)),
            H=self._h_floor.reshape(n, n).copy(),
            eps=np.zeros((n, n, 3)),
            sig=np.zeros((n, n, 3)),
            internal_force=np.zeros((side, side, 2)),
            step_index=0,
        )

    def cell_phi(self, state: FieldState) -> np.ndarray:
        """Cell-mean damage (mean of the 4 nodal values)."""
        return state.phi.ravel()[self.edof_phi].mean(axis=1).reshape(self.n, self.n)

    def _omega_eff(self, state: FieldState) -> np.ndarray:
        phi_cell = state.phi.ravel()[self.edof_phi].mean(axis=1)
        w = omega(phi_cell, self.coeffs)
        eta = self.config.residual_stiffness
        return (1.0 - eta) * w + eta

    # -- displacement subproblem -----------------------------------------

    def _assemble_stiffness(self, omega_eff: np.ndarray) -> sp.csr_matrix:
        if self._last_omega is not None and np.array_equal(omega_eff, self._last_omega):
            return self._last_K
        vals = self._ke_cells * omega_eff[:, None]
        data = np.bincount(self._u_inv, weights=vals.ravel(), minlength=self._u_nnz)
        K = sp.csr_matrix(
            (data, self._u_indices, self._u_indptr), shape=(self.n_dof, self.n_dof)
        )
        self._last_K = K
        self._last_Kff = sp.csr_matrix(
            (data[self._ff_map], self._ff_indices, self._ff_indptr),
            shape=(self._n_free, self._n_free),
        )
        self._last_omega = omega_eff.copy()
        return K

    def _factorize(self) -> None:
        self._pc_lu = spla.splu(
            self._last_Kff.tocsc(),
            permc_spec="MMD_AT_PLUS_A",
            options={"SymmetricMode": True},
        )

    def solve_displacement(self, state: FieldState, load_factor: float) -> FieldState:
        """Linear elastic solve at fixed damage; updates u, eps, sig in place.

        Conjugate gradients preconditioned by an LU factorization of a
        recent stiffness state; the factorization is refreshed whenever the
        iteration count exceeds a small cap (damage evolves gradually, so a
        slightly stale factorization stays a near-exact preconditioner).

        Raises
        ------
        SolverFailureError
            If the preconditioned conjugate-gradient solve stalls.
        """
        cfg = self.config
        omega_eff = self._omega_eff(state)
        K = self._assemble_stiffness(omega_eff)

        ubar = self.bc.u_max * load_factor
        u_full = np.zeros(self.n_dof)
        u_full[self._driven] = ubar
        rhs = -K @ u_full
        b = rhs[self._free_dofs]

        Kff = self._last_Kff
        if self._pc_lu is None:
            self._factorize()
        precond = spla.LinearOperator(Kff.shape, matvec=self._pc_lu.solve)
        # The previous solution scaled by the load ratio is an excellent
        # initial guess (exact while the damage field is unchanged).
        x0 = state.u.reshape(-1)[self._free_dofs]
        if self._last_ubar not in (None, 0.0) and ubar != 0.0:
            x0 = x0 * (ubar / self._last_ubar)
        self._last_ubar = ubar

        iters = [0]

        def count(_):
            iters[0] += 1

        u_free, info = spla.cg(
            Kff,
            b,
            x0=x0,
            rtol=cfg.linear_solver_rel_tol,
            atol=0.0,
            maxiter=cfg.linear_solver_max_iters,
            M=precond,
            callback=count,
        )
        if info != 0:
            res = float(np.linalg.norm(b - Kff @ u_free))
            raise SolverFailureError(
                f"displacement CG did not converge within {cfg.linear_solver_max_iters} iterations",
                residual=res,
            )
        if iters[0] > 12:
            # Preconditioner gone stale; refresh it for the next solve.
            self._factorize()

        u_full[self._free_dofs] = u_free
        state.u = u_full.reshape(self.n_nodes_side, self.n_nodes_side, 2)

        u_cells = u_full[self.edof_u]
        eps = u_cells @ self._b_cent.T
        sx, sy, txy = _effective_stress(eps, self._lam, self._mu)
        sig = np.column_stack([sx, sy, txy]) * omega_eff[:, None]
        state.eps = eps.reshape(self.n, self.n, 3)
        state.sig = sig.reshape(self.n, self.n, 3)
        state.internal_force = (K @ u_full).reshape(self.n_nodes_side, self.n_nodes_side, 2)
        return state

    def reaction_force(self, state: FieldState, edge: str) -> float:
        """Sum of constrained-direction internal forces on one edge (N per mm)."""
        f = state.internal_force
        if edge == "left":
            return float(f[:, 0, 0].sum())
        if edge == "right":
            return float(f[:, -1, 0].sum())
        if edge == "bottom":
            return float(f[0, :, 1].sum())
        raise ConfigError(f"unknown edge '{edge}'")

    def update_history(self, state: FieldState) -> FieldState:
        """H <- max(H, Y) per cell from the centroid strain."""
        eps = state.eps.reshape(self.n_cells, 3)
        y = _driving_force_arrays(
            eps, self._E, self._lam, self._mu, self._sigma_u, self.config.driving_force
        )
        state.H = np.maximum(state.H, y.reshape(self.n, self.n))
        return state

    # -- damage subproblem -------------------------------------------------

    def _phase_energy(
        self, phi_flat: np.ndarray, h_cells: np.ndarray, cells: np.ndarray | None = None
    ) -> float:
        edof = self.edof_phi if cells is None else self.edof_phi[cells]
        h_c = h_cells if cells is None else h_cells[cells]
        c_alpha = self._c_alpha if cells is None else self._c_alpha[cells]
        c_grad = self._c_grad if cells is None else self._c_grad[cells]
        a1 = self._coeffs_col.a1 if cells is None else self._coeffs_col.a1[cells]
        coeffs = DegradationCoefficients(a1=a1, a2=self.coeffs.a2, a3=self.coeffs.a3)

        phi_e = phi_flat[edof]
        total = 0.5 * float((((phi_e @ self._grad_stiff) * phi_e).sum(axis=1) * c_grad).sum())
        phi_g = phi_e @ self._n_gp.T  # (ncell, 4 gauss points)
        dens = omega(phi_g, coeffs) * h_c[:, None]
        dens += c_alpha[:, None] * alpha(phi_g)
        total += float(dens.sum()) * self._detj
        return total

    def _phase_residual(
        self, phi_flat: np.ndarray, h_cells: np.ndarray, cells: np.ndarray | None = None
    ) -> np.ndarray:
        """Gradient of the damage energy; restricted to ``cells`` if given
        (zero rows for nodes not touching them)."""
        edof = self.edof_phi if cells is None else self.edof_phi[cells]
        h_c = h_cells if cells is None else h_cells[cells]
        c_alpha = self._c_alpha if cells is None else self._c_alpha[cells]
        c_grad = self._c_grad if cells is None else self._c_grad[cells]
        a1 = self._coeffs_col.a1 if cells is None else self._coeffs_col.a1[cells]
        coeffs = DegradationCoefficients(a1=a1, a2=self.coeffs.a2, a3=self.coeffs.a3)

        phi_e = phi_flat[edof]
        phi_g = phi_e @ self._n_gp.T  # (ncell, 4)
        c_g = omega_prime(phi_g, coeffs) * h_c[:, None]
        c_g += c_alpha[:, None] * alpha_prime(phi_g)
        r_e = phi_e @ self._grad_stiff.T * c_grad[:, None]
        r_e += (c_g * self._detj) @ self._n_gp
        return np.bincount(edof.ravel(), weights=r_e.ravel(), minlength=self.n_nodes)

    def _phase_jacobian(
        self, phi_flat: np.ndarray, h_cells: np.ndarray, cells: np.ndarray | None = None
    ) -> sp.csr_matrix:
        edof = self.edof_phi if cells is None else self.edof_phi[cells]
        h_c = h_cells if cells is None else h_cells[cells]
        c_alpha = self._c_alpha if cells is None else self._c_alpha[cells]
        c_grad = self._c_grad if cells is None else self._c_grad[cells]

        coeffs = DegradationCoefficients(
            a1=self.coeffs.a1 if cells is None else self.coeffs.a1[cells],
            a2=self.coeffs.a2,
            a3=self.coeffs.a3,
        )
        phi_e = phi_flat[edof]
        j_e = c_grad[:, None, None] * self._grad_stiff[None, :, :]
        for g in range(4):
            phi_g = phi_e @ self._n_gp[g]
            m_g = _omega_second(phi_g, coeffs) * h_c - 2.0 * c_alpha
            j_e = j_e + (m_g * self._detj)[:, None, None] * self._nn_gp[g][None, :, :]
        k = edof.shape[1]
        rows = np.repeat(edof, k, axis=1).ravel()
        cols = np.tile(edof, (1, k)).ravel()
        return sp.coo_matrix(
            (j_e.ravel(), (rows, cols)), shape=(self.n_nodes, self.n_nodes)
        ).tocsr()

    @staticmethod
    def _projected_residual(r: np.ndarray, phi: np.ndarray, lower: np.ndarray) -> np.ndarray:
        rp = r.copy()
        at_lower = phi <= lower + 1e-14
        at_upper = phi >= 1.0 - 1e-14
        rp[at_lower] = np.minimum(r[at_lower], 0.0)
        rp[at_upper] = np.maximum(rp[at_upper], 0.0)
        return rp

    def _dilate_mask(self, mask: np.ndarray) -> np.ndarray:
        cells = np.flatnonzero(mask[self.edof_phi].any(axis=1))
        out = mask.copy()
        out[self.edof_phi[cells].ravel()] = True
        return out

    def solve_phase(self, state: FieldState) -> FieldState:
        """Bound-constrained damage solve on the set of nodes free to move.

        The entry value of ``state.phi`` acts as the irreversibility lower
        bound; every iterate is projected into [phi_entry, 1]. Damage
        evolution is local, so the nonlinear solve runs on the nodes whose
        optimality conditions are violated (plus a halo), verified against
        the full-domain residual and re-expanded until it holds everywhere.

        Raises
        ------
        SolverFailureError
            If no iterate reaches the residual tolerance.
        """
        cfg = self.config
        h_cells = state.H.ravel()
        lower = state.phi.ravel().copy()
        phi = lower.copy()
        tol = cfg.newton_tol * self._newton_scale

        r = self._phase_residual(phi, h_cells)
        rp = np.abs(self._projected_residual(r, phi, lower))
        res_norm = float(rp.max())
        if res_norm < tol:
            return state

        mask = (phi > lower) | (rp >= 0.1 * tol) | (self._phi_increment > 0)
        mask = self._dilate_mask(self._dilate_mask(mask))
        for _ in range(100):
            active = np.flatnonzero(mask)
            cells = np.flatnonzero(mask[self.edof_phi].any(axis=1))
            phi = self._solve_phase_restricted(phi, h_cells, lower, tol, active, cells)
            r = self._phase_residual(phi, h_cells)
            rp = np.abs(self._projected_residual(r, phi, lower))
            res_norm = float(rp.max())
            if res_norm < tol:
                self._phi_increment = phi - lower
                state.phi = phi.reshape(self.n_nodes_side, self.n_nodes_side)
                return state
            grown = self._dilate_mask(mask | (rp >= 0.1 * tol) | (phi > lower))
            if np.array_equal(grown, mask):
                break
            mask = grown
        raise SolverFailureError(
            "phase-field solve did not converge", residual=res_norm
        )

    def _solve_phase_restricted(
        self,
        phi: np.ndarray,
        h_cells: np.ndarray,
        lower: np.ndarray,
        tol: float,
        active: np.ndarray,
        cells: np.ndarray,
    ) -> np.ndarray:
        """Damped Newton with energy line search on the active node set,
        falling back once to bound-constrained L-BFGS-B when the quadratic
        model stalls (it does while a band opens against the nucleation
        floor, where the degradation curvature spans orders of magnitude)."""
        cfg = self.config
        phi = phi.copy()
        lo = lower[active]
        # Warm start: repeat the previous solve's increment where feasible.
        x = np.clip(lower[active] + self._phi_increment[active], lo, 1.0)

        def energy_of(xx: np.ndarray) -> float:
            phi[active] = xx
            return self._phase_energy(phi, h_cells, cells)

        def residual_of(xx: np.ndarray) -> np.ndarray:
            phi[active] = xx
            return self._phase_residual(phi, h_cells, cells)[active]

        energy = energy_of(x)
        r = residual_of(x)
        res_norm = float(np.abs(self._projected_residual(r, x, lo)).max())
        used_fallback = False
        if not self._phase_newton_ok and res_norm >= tol:
            # Newton stalled on the previous solve; this regime persists
            # while a band is opening, so go straight to the descent solver.
            used_fallback = True
            x = self._phase_lbfgs(energy_of, residual_of, x, lo, tol)
            energy = energy_of(x)
            r = residual_of(x)
            res_norm = float(np.abs(self._projected_residual(r, x, lo)).max())
        for _ in range(cfg.newton_max_iters):
            if res_norm < tol:
                break
            J = self._phase_jacobian(phi, h_cells, cells)[active][:, active]
            direction = None
            try:
                direction = spla.spsolve(J.tocsc(), -r)
            except RuntimeError:
                direction = None
            if direction is not None and (
                not np.all(np.isfinite(direction)) or float(r @ direction) >= 0.0
            ):
                direction = None
            stalled = direction is None
            if direction is not None:
                s = 1.0
                improved = False
                for _ in range(8):
                    cand = np.clip(x + s * direction, lo, 1.0)
                    cand_energy = energy_of(cand)
                    if cand_energy <= energy:
                        improved = not np.array_equal(cand, x)
                        x, energy = cand, cand_energy
                        break
                    s *= 0.5
                r = residual_of(x)
                new_norm = float(np.abs(self._projected_residual(r, x, lo)).max())
                stalled = (not improved) or (s < 0.2 and new_norm > 0.5 * res_norm)
                res_norm = new_norm
            if stalled:
                if used_fallback:
                    break
                used_fallback = True
                x = self._phase_lbfgs(energy_of, residual_of, x, lo, tol)
                energy = energy_of(x)
                r = residual_of(x)
                res_norm = float(np.abs(self._projected_residual(r, x, lo)).max())
        self._phase_newton_ok = not used_fallback
        phi[active] = x
        return phi

    @staticmethod
    def _phase_lbfgs(energy_of, residual_of, x0, lo, tol) -> np.ndarray:
        from scipy.optimize import Bounds, minimize

        result = minimize(
            fun=energy_of,
            x0=x0,
            jac=residual_of,
            method="L-BFGS-B",
            bounds=Bounds(lo, np.ones_like(lo)),
            options={"maxiter": 5000, "maxfun": 20000, "ftol": 1e-18,
                     "gtol": 0.5 * tol, "maxcor": 30},
        )
        return np.clip(result.x, lo, 1.0)

    # -- staggered stepping ------------------------------------------------

    def staggered_step(self, state: FieldState, step: int) -> dict:
        """Advance one load increment with staggered alternation.

        Returns a step record with the reaction force and convergence info;
        a non-converged staggered loop is flagged but the state is still
        advanced.
        """
        cfg = self.config
        load_factor = step / cfg.n_load_steps
        converged = False
        iters = 0
        delta = 0.0
        for iters in range(1, cfg.staggered_max_iters + 1):
            self.solve_displacement(state, load_factor)
            self.update_history(state)
            phi_old = state.phi.copy()
            self.solve_phase(state)
            delta = float(np.abs(state.phi - phi_old).max())
            if delta < cfg.staggered_tol:
                converged = True
                break
        if delta > 0.0:
            # Sync stresses and reactions with the final damage field.
            self.solve_displacement(state, load_factor)
        state.step_index = step
        return {
            "step": step,
            "converged": converged,
            "staggered_iters": iters,
            "reaction_right": self.reaction_force(state, "right"),
            "reaction_left": self.reaction_force(state, "left"),
            "ubar": self.bc.ubar(step),
        }

    def elastic_energy(self, state: FieldState) -> float:
        """Stored (degraded) elastic energy, one-point quadrature per cell."""
        eps = state.eps.reshape(self.n_cells, 3)
        ex, ey, g = eps[:, 0], eps[:, 1], eps[:, 2]
        tr = ex + ey
        dens = 0.5 * self._lam * tr * tr + self._mu * (ex * ex + ey * ey + 0.5 * g * g)
        return float(np.sum(self._omega_eff(state) * dens) * self.h * self.h)


# ---------------------------------------------------------------------------
# Convenience wrappers matching the operation-level API
# ---------------------------------------------------------------------------


def solve_displacement(
    state: FieldState,
    maps: MaterialFieldMaps,
    bc: BoundaryConditions,
    load_factor: float,
    config: SolverConfig | None = None,
    grid: GridSpec | None = None,
) -> FieldState:
    solver = _make_solver(maps, bc, config, grid)
    return solver.solve_displacement(state, load_factor)


def solve_phase(
    state: FieldState,
    maps: MaterialFieldMaps,
    config: SolverConfig | None = None,
    grid: GridSpec | None = None,
) -> FieldState:
    solver = _make_solver(maps, BoundaryConditions(), config, grid)
    return solver.solve_phase(state)


def _make_solver(maps, bc, config, grid) -> PhaseFieldSolver:
    n = maps.phase.shape[0]
    if grid is None:
        grid = GridSpec(n_cells=n, domain_length=n * 0.15)
    if config is None:
        config = SolverConfig(u_max=bc.u_max, n_load_steps=bc.n_load_steps)
    return PhaseFieldSolver(maps, grid, config)


def run_simulation(
    meso,
    grid: GridSpec,
    materials: dict[int, PhaseProperties],
    config: SolverConfig,
    stop_when=None,
) -> SimulationResult:
    """Full quasi-static run: rasterize, load stepping, frame capture.

    Frames are captured every ``config.capture_every`` steps starting at the
    unloaded step 0 (so ``n_load_steps / capture_every`` frames in total).
    ``stop_when(state, step)`` may end the run early (used for probing
    initiation); sub-solver failures mark the result instead of raising.
    """
    from .raster import rasterize, assign_materials

    phase = rasterize(meso, grid)
    maps = assign_materials(phase, materials)
    solver = PhaseFieldSolver(maps, grid, config)
    state = solver.initial_state()

    n_steps = config.n_load_steps
    n_frames = n_steps // config.capture_every
    frames: list[Frame] = []
    strain = np.zeros(n_steps + 1)
    stress = np.zeros(n_steps + 1)
    converged = np.ones(n_steps + 1, dtype=bool)
    length = grid.domain_length

    def capture(step: int, ok: bool) -> None:
        if step % config.capture_every == 0 and len(frames) < n_frames:
            eps = state.eps
            sig = state.sig
            frames.append(
                Frame(
                    step=step,
                    eps_x=eps[:, :, 0].astype(np.float32),
                    eps_y=eps[:, :, 1].astype(np.float32),
                    sig_x=sig[:, :, 0].astype(np.float32),
                    sig_y=sig[:, :, 1].astype(np.float32),
                    phi=solver.cell_phi(state).astype(np.float32),
                    converged=ok,
                )
            )

    capture(0, True)
    failed = False
    message = ""
    last_step = 0
    try:
        for step in range(1, n_steps + 1):
            info = solver.staggered_step(state, step)
            strain[step] = info["ubar"] / length
            stress[step] = info["reaction_right"] / length
            converged[step] = info["converged"]
            capture(step, info["converged"])
            last_step = step
            if stop_when is not None and stop_when(state, step):
                break
    except SolverFailureError as exc:
        failed = True
        message = str(exc)

    end = last_step + 1
    return SimulationResult(
        grid=grid,
        maps=maps,
        config=config,
        frames=frames,
        strain=strain[:end],
        stress=stress[:end],
        converged=converged[:end],
        state=state,
        failed=failed,
        failure_message=message,
    )


def config_to_dict(config: SolverConfig) -> dict:
    return asdict(config)


def config_from_dict(d: dict) -> SolverConfig:
    base = SolverConfig()
    known = set(asdict(base))
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown solver config keys: {sorted(unknown)}")
    cfg = replace(base, **d)
    cfg.validate()
    return cfg
