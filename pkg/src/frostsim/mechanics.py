"""Plane strain mechanics with pore pressure loading and nonlocal damage.

The solid skeleton is linear elastic degraded by an isotropic damage
variable per element. Ice crystallization enters as an equivalent pore
pressure weighted by the Biot coefficient, thermal expansion as an
eigenstrain; both act as element loads on the damaged stiffness:

    sum_e (1 - d_e) B^T D_e B A_e u = sum_e B^T [b p_p i + (1 - d_e) D_e eps_th] A_e

with i = {1, 1, 0} in Voigt order [eps_xx, eps_yy, gamma_xy]. Damage is
driven by the nonlocal average of the equivalent tensile strain of the
total strain field and never decreases. The stiffness keeps a small
residual factor at full damage so the system stays solvable.

Supports come from the mesh tags: u_x = 0 on A edges, u_y = 0 on B edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from ._linalg import apply_dirichlet, solve_sparse
from .errors import InvalidParametersError
from .mesh import BoundaryTag, Mesh

# Voigt vector of an isotropic unit strain or stress in 2-D
_IDENTITY = np.array([1.0, 1.0, 0.0])


def biot_coefficient(n: float) -> float:
    """Biot coefficient b = 2n / (n + 1) from the total porosity."""
    if not 0.0 <= n <= 1.0:
        raise InvalidParametersError("porosity must lie in [0, 1]")
    return 2.0 * n / (n + 1.0)


def elastic_stiffness(E: float, nu: float) -> np.ndarray:
    """Plane strain elasticity matrix, Voigt order [xx, yy, xy]."""
    if E <= 0.0:
        raise InvalidParametersError("Young's modulus must be positive")
    if not -1.0 < nu < 0.5:
        raise InvalidParametersError("Poisson ratio must lie in (-1, 0.5)")
    c = E / ((1.0 + nu) * (1.0 - 2.0 * nu))
    return c * np.array([
        [1.0 - nu, nu, 0.0],
        [nu, 1.0 - nu, 0.0],
        [0.0, 0.0, 0.5 * (1.0 - 2.0 * nu)],
    ])


def mazars_equivalent_strain(strain: np.ndarray) -> np.ndarray:
    """Equivalent tensile strain sqrt(sum <eps_I>^2) of plane strain states.

    ``strain`` is Voigt [eps_xx, eps_yy, gamma_xy] with engineering shear,
    shape (..., 3). The out-of-plane principal strain is zero and never
    contributes. Positive part brackets drop compressive principals.
    """
    strain = np.asarray(strain, dtype=float)
    exx = strain[..., 0]
    eyy = strain[..., 1]
    exy = 0.5 * strain[..., 2]
    mean = 0.5 * (exx + eyy)
    radius = np.sqrt((0.5 * (exx - eyy)) ** 2 + exy ** 2)
    p1 = np.maximum(mean + radius, 0.0)
    p2 = np.maximum(mean - radius, 0.0)
    return np.sqrt(p1 ** 2 + p2 ** 2)


def damage_function(kappa, eps_0: float, eps_f: float):
    """Damage g(kappa): 0 up to eps_0, linear to 1 at eps_f, then 1."""
    if not 0.0 < eps_0 < eps_f:
        raise InvalidParametersError("need 0 < eps_0 < eps_f")
    kappa = np.asarray(kappa, dtype=float)
    out = np.clip((kappa - eps_0) / (eps_f - eps_0), 0.0, 1.0)
    if out.ndim == 0:
        return float(out)
    return out


class NonlocalAverager:
    """Gaussian area-weighted averaging between element centroids.

    Weight of source element j at target i is exp(-d^2 / (2 l^2)) A_j,
    truncated at 3 l, normalized per target so rows sum to one. The
    element itself always contributes, so as l -> 0 the operator becomes
    the identity.
    """

    def __init__(self, mesh: Mesh, length: float):
        if length <= 0.0:
            raise InvalidParametersError("interaction length must be positive")
        self.length = length
        centroids = mesh.centroids
        areas = mesh.areas
        tree = cKDTree(centroids)
        pairs = tree.query_pairs(3.0 * length, output_type="ndarray")
        e = mesh.num_elements
        if len(pairs):
            d2 = np.sum((centroids[pairs[:, 0]] - centroids[pairs[:, 1]]) ** 2,
                        axis=1)
            w = np.exp(-d2 / (2.0 * length ** 2))
            rows = np.concatenate([pairs[:, 0], pairs[:, 1], np.arange(e)])
            cols = np.concatenate([pairs[:, 1], pairs[:, 0], np.arange(e)])
            vals = np.concatenate([w * areas[pairs[:, 1]],
                                   w * areas[pairs[:, 0]], areas])
        else:
            rows = cols = np.arange(e)
            vals = areas.copy()
        W = sp.coo_matrix((vals, (rows, cols)), shape=(e, e)).tocsr()
        norm = np.asarray(W.sum(axis=1)).ravel()
        self.weights = sp.diags(1.0 / norm) @ W

    def __call__(self, element_values: np.ndarray) -> np.ndarray:
        return self.weights @ np.asarray(element_values, dtype=float)


def nonlocal_average(element_values: np.ndarray, mesh: Mesh,
                     length: float) -> np.ndarray:
    """One-off nonlocal average; build a NonlocalAverager to reuse weights."""
    return NonlocalAverager(mesh, length)(element_values)


@dataclass(frozen=True)
class MechParams:
    E: float = 1e10             # Pa
    nu: float = 0.2             # -
    f_t: float = 2.5e6          # Pa, tensile strength; inf disables damage
    eps_f: float = 2.5e-3       # -, strain at full damage
    l_intl: float = 1e-3        # m, nonlocal interaction length
    alpha: float = 1.2e-5       # K^-1, thermal expansion
    n: float = 0.35             # -, porosity (Biot coefficient input)
    residual_stiffness: float = 1e-6
    body_force: tuple[float, float] = (0.0, 0.0)   # N m^-3

    def __post_init__(self):
        elastic_stiffness(self.E, self.nu)        # validates E, nu
        biot_coefficient(self.n)                  # validates n
        if self.f_t <= 0.0:
            raise InvalidParametersError("tensile strength must be positive")
        if np.isfinite(self.f_t) and not self.eps_0 < self.eps_f:
            raise InvalidParametersError("need f_t / E < eps_f")
        if self.l_intl <= 0.0:
            raise InvalidParametersError("interaction length must be positive")
        if not 0.0 < self.residual_stiffness < 1.0:
            raise InvalidParametersError("residual stiffness must lie in (0, 1)")

    @property
    def eps_0(self) -> float:
        """Damage threshold strain f_t / E."""
        return self.f_t / self.E

    @property
    def biot(self) -> float:
        return biot_coefficient(self.n)


def default_lime_mortar_mech() -> MechParams:
    return MechParams()


@dataclass
class MechState:
    """Displacements plus the damage history of every element."""

    u: np.ndarray               # (2N,) nodal displacements, m
    kappa: np.ndarray           # (E,) largest nonlocal equivalent strain seen
    d_w: np.ndarray             # (E,) damage in [0, 1]
    converged: bool = True
    iterations: int = 0

    @classmethod
    def zero(cls, mesh: Mesh) -> "MechState":
        return cls(np.zeros(2 * mesh.num_nodes),
                   np.zeros(mesh.num_elements),
                   np.zeros(mesh.num_elements))


class MechanicsProblem:
    """Assembled geometry, supports and nonlocal weights for one mesh.

    ``constraints`` overrides the tag-derived supports with explicit
    (dof ids, values); dof 2i is u_x of node i, dof 2i + 1 is u_y.
    """

    def __init__(self, mesh: Mesh, params: MechParams,
                 constraints: tuple[np.ndarray, np.ndarray] | None = None):
        self.mesh = mesh
        self.params = params
        self.D = elastic_stiffness(params.E, params.nu)
        self.averager = NonlocalAverager(mesh, params.l_intl)

        grads = mesh.grads                    # (E, 3, 2)
        e = mesh.num_elements
        B = np.zeros((e, 3, 6))
        B[:, 0, 0::2] = grads[:, :, 0]
        B[:, 1, 1::2] = grads[:, :, 1]
        B[:, 2, 0::2] = grads[:, :, 1]
        B[:, 2, 1::2] = grads[:, :, 0]
        self.B = B
        self.KE = np.einsum("eai,ab,ebj->eij", B, self.D, B) \
            * mesh.areas[:, None, None]       # undamaged element stiffness

        conn = mesh.elements
        dofs = np.empty((e, 6), dtype=np.int64)
        dofs[:, 0::2] = 2 * conn
        dofs[:, 1::2] = 2 * conn + 1
        self.dofs = dofs
        self._rows = np.repeat(dofs, 6, axis=1).ravel()
        self._cols = np.tile(dofs, (1, 6)).ravel()

        if constraints is None:
            fixedentries = []
            for tag, comp in ((BoundaryTag.A, 0), (BoundaryTag.B, 1)):
                nodes = mesh.nodes_with_tag(tag)
                fixedentries.append(2 * nodes + comp)
            cd = np.unique(np.concatenate(fixedentries)) if fixedentries else \
                np.zeros(0, dtype=np.int64)
            self.constraint_dofs = cd
            self.constraint_values = np.zeros(len(cd))
        else:
            self.constraint_dofs = np.asarray(constraints[0], dtype=np.int64)
            self.constraint_values = np.asarray(constraints[1], dtype=float)
        if len(self.constraint_dofs) < 3:
            raise InvalidParametersError(
                "mechanics needs at least 3 constrained dofs to fix rigid "
                "body motion")

    # -- pieces -------------------------------------------------------------

    def _stiffness(self, factor: np.ndarray) -> sp.csr_matrix:
        vals = (self.KE * factor[:, None, None]).ravel()
        n2 = 2 * self.mesh.num_nodes
        return sp.coo_matrix((vals, (self._rows, self._cols)),
                             shape=(n2, n2)).tocsr()

    def _loads(self, factor: np.ndarray, p_p: np.ndarray,
               eps_th: np.ndarray) -> np.ndarray:
        mesh = self.mesh
        b = self.params.biot
        # per-element Voigt stress-like load: pore pressure plus thermal
        t_vec = (b * p_p)[:, None] * _IDENTITY[None, :] \
            + factor[:, None] * eps_th[:, None] * (self.D @ _IDENTITY)[None, :]
        fe = np.einsum("eai,ea->ei", self.B, t_vec) * mesh.areas[:, None]
        F = np.zeros(2 * mesh.num_nodes)
        np.add.at(F, self.dofs.ravel(), fe.ravel())
        bf = self.params.body_force
        if bf[0] != 0.0 or bf[1] != 0.0:
            share = mesh.areas / 3.0
            for comp in (0, 1):
                np.add.at(F, 2 * mesh.elements.ravel() + comp,
                          np.repeat(share * bf[comp], 3))
        return F

    def strains(self, u: np.ndarray) -> np.ndarray:
        """Element Voigt strains (E, 3) from nodal displacements."""
        return np.einsum("eij,ej->ei", self.B, u[self.dofs])

    def effective_stress(self, u: np.ndarray, d_w: np.ndarray,
                         theta=None, theta_ref: float = 0.0) -> np.ndarray:
        """Damaged skeleton stress (E, 3): (1 - d) D (eps - eps_th)."""
        eps = self.strains(u)
        if theta is not None:
            dt = self.mesh.element_mean(theta) - theta_ref
            eps = eps - (self.params.alpha * dt)[:, None] * _IDENTITY[None, :]
        factor = np.maximum(1.0 - d_w, self.params.residual_stiffness)
        return factor[:, None] * (eps @ self.D.T)

    # -- equilibrium --------------------------------------------------------

    def solve(self, theta=None, theta_ref: float = 0.0, p_p=None,
              prev: MechState | None = None, *, tol: float = 1e-4,
              max_iter: int = 30) -> MechState:
        """Secant iteration between elastic solves and damage updates.

        Returns the new state; ``converged`` is False when the damage
        update still moved more than ``tol`` after ``max_iter`` rounds.
        Damage and its history variable never drop below ``prev``.
        """
        mesh = self.mesh
        e = mesh.num_elements
        prev = prev if prev is not None else MechState.zero(mesh)
        p_p = np.zeros(e) if p_p is None else np.asarray(p_p, dtype=float)
        if theta is not None:
            eps_th = self.params.alpha * (mesh.element_mean(theta) - theta_ref)
        else:
            eps_th = np.zeros(e)

        kappa_floor = prev.kappa
        d = prev.d_w.copy()
        eps0 = self.params.eps_0
        u = prev.u
        kappa = kappa_floor.copy()
        converged = False
        iterations = 0
        for iterations in range(1, max_iter + 1):
            factor = np.maximum(1.0 - d, self.params.residual_stiffness)
            K = self._stiffness(factor)
            F = self._loads(factor, p_p, eps_th)
            A, b = apply_dirichlet(K, F, self.constraint_dofs,
                                   self.constraint_values)
            u = solve_sparse(A, b)
            eq = mazars_equivalent_strain(self.strains(u))
            kappa = np.maximum(kappa_floor, self.averager(eq))
            if np.isfinite(eps0):
                d_new = damage_function(kappa, eps0, self.params.eps_f)
            else:
                d_new = np.zeros(e)
            delta = float(np.max(np.abs(d_new - d))) if e else 0.0
            d = d_new
            if delta < tol:
                converged = True
                break
        return MechState(u, kappa, d, converged, iterations)


def solve_equilibrium(mesh: Mesh, theta, theta_ref: float, p_p,
                      prev: MechState | None, params: MechParams,
                      **options) -> MechState:
    """Convenience wrapper building a MechanicsProblem for a single solve."""
    return MechanicsProblem(mesh, params).solve(theta, theta_ref, p_p, prev,
                                                **options)
