"""Finite element solver for the coupled heat and moisture balance.

Unknowns are nodal temperature theta (degC) and relative humidity phi,
stacked as r = [theta_0 .. theta_{N-1}, phi_0 .. phi_{N-1}]. Linear
triangles carry both fields; material coefficients are evaluated once per
element at the centroid state, the shape-function products are integrated
exactly. The semi-discrete system

    K(r) r + C(r) dr/dt = F(t, r)

is advanced with the one-parameter theta scheme

    [gamma dt K + C] r_new = gamma dt F + C [r_old + dt (1 - gamma) rdot_old]

(gamma = 0.5 is the trapezoidal rule) and the nonlinearity is resolved by
Picard iteration on the frozen-coefficient linear system, with the mixing
factor backed off automatically when the residual grows.

Boundary terms: Robin exchange adds alpha L/2 to the diagonal of the
matching block and alpha ambient L/2 to the load (edge-lumped); prescribed
boundary fluxes are positive into the domain; Dirichlet rows are eliminated
symmetrically. Volumetric sources exist as callables for verification
problems only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from . import constitutive
from ._linalg import apply_dirichlet, solve_sparse
from .errors import (
    DomainError,
    InvalidParametersError,
    StepFailureError,
)
from .mesh import BoundaryTag, Mesh

__all__ = [
    "TransportState", "CoefficientFields", "KunzelCoefficients",
    "ConstantCoefficients", "RobinBC", "BoundaryFlux", "AssembledSystem",
    "TransportProblem", "apply_dirichlet", "nonlinear_iterate",
    "NonlinearResult",
]

_SATURATED = 1.0 - 1e-9

Value = float | Callable[[float], float]


def _at(value: Value, t: float) -> float:
    return value(t) if callable(value) else value


@dataclass
class TransportState:
    """Nodal fields at one time level, plus the time derivative vector."""

    t: float
    theta: np.ndarray
    phi: np.ndarray
    rdot: np.ndarray
    picard_iterations: int = 0

    @classmethod
    def uniform(cls, mesh: Mesh, theta: float, phi: float,
                t: float = 0.0) -> "TransportState":
        n = mesh.num_nodes
        return cls(t, np.full(n, float(theta)), np.full(n, float(phi)),
                   np.zeros(2 * n))

    @property
    def r(self) -> np.ndarray:
        return np.concatenate([self.theta, self.phi])


@dataclass(frozen=True)
class CoefficientFields:
    """Per-element PDE coefficients at one state."""

    k_tt: np.ndarray
    k_tp: np.ndarray
    k_pt: np.ndarray
    k_pp: np.ndarray
    c_tt: np.ndarray
    c_pp: np.ndarray


class KunzelCoefficients:
    """PDE coefficients of the moisture dependent mortar model.

    Conduction plus vapor enthalpy transport in the heat block, liquid
    plus vapor transport in the moisture block. The gradient of the vapor
    pressure phi p_sat(theta) is split into its theta and phi parts, which
    produces the off-diagonal coupling blocks. An ice model adds frozen
    water and latent heat to the storage coefficient.
    """

    # admissible centroid state; evaluations outside raise DomainError
    theta_range = (constitutive.THETA_MIN, constitutive.THETA_MAX)
    phi_range = (0.0, 1.0)

    def __init__(self, params: constitutive.TransportParams,
                 ice_model=None,
                 constants: constitutive.PhysicalConstants = constitutive.CONSTANTS):
        self.params = params
        self.ice_model = ice_model
        self.constants = constants

    def evaluate(self, theta: np.ndarray, phi: np.ndarray) -> CoefficientFields:
        return self._evaluate(theta, phi, None)

    def evaluate_step(self, theta, phi, theta_ref) -> CoefficientFields:
        """Coefficients for a step from ``theta_ref``; the heat capacity
        uses the enthalpy chord so a front crossed within the step still
        absorbs the full latent heat."""
        return self._evaluate(theta, phi, theta_ref)

    def _evaluate(self, theta, phi, theta_ref) -> CoefficientFields:
        params = self.params
        p_sat = constitutive.saturation_pressure(theta)
        dp_sat = constitutive.saturation_pressure_derivative(theta)
        delta_v = constitutive.vapor_permeability(theta, params, self.constants)
        h_v = constitutive.latent_heat_vapor(theta, self.constants)
        w = constitutive.water_content(phi, params)
        return CoefficientFields(
            k_tt=constitutive.thermal_conductivity(w, params)
                 + h_v * delta_v * phi * dp_sat,
            k_tp=h_v * delta_v * p_sat,
            k_pt=delta_v * phi * dp_sat,
            k_pp=constitutive.moisture_diffusivity(phi, params)
                 + delta_v * p_sat,
            c_tt=constitutive.effective_heat_capacity(theta, phi, params,
                                                      self.ice_model,
                                                      theta_ref),
            c_pp=constitutive.moisture_capacity(phi, params),
        )


class ConstantCoefficients:
    """Constant coefficients; the resulting system is linear.

    Used by verification problems (manufactured solutions, conservation
    checks) where the exact behavior of the scheme matters more than the
    material model.
    """

    theta_range = None
    phi_range = None

    def __init__(self, k_tt=1.0, k_tp=0.0, k_pt=0.0, k_pp=1.0,
                 c_tt=1.0, c_pp=1.0):
        self._values = (k_tt, k_tp, k_pt, k_pp, c_tt, c_pp)

    def evaluate(self, theta: np.ndarray, phi: np.ndarray) -> CoefficientFields:
        shape = np.broadcast_shapes(np.shape(theta), np.shape(phi))
        k_tt, k_tp, k_pt, k_pp, c_tt, c_pp = (
            np.full(shape, v) for v in self._values)
        return CoefficientFields(k_tt, k_tp, k_pt, k_pp, c_tt, c_pp)


@dataclass(frozen=True)
class RobinBC:
    """Surface exchange toward an ambient state on one tag group."""

    alpha_h: float                  # W m^-2 K^-1
    beta_v: float                   # kg m^-2 s^-1 per unit humidity
    theta_amb: Value                # degC
    phi_amb: Value                  # -


@dataclass(frozen=True)
class BoundaryFlux:
    """Prescribed fluxes into the domain on one tag group.

    ``suppress_moist_at_saturation`` turns the moisture flux off at nodes
    whose humidity has reached 1, the flux-limiter treatment of rain on a
    saturated surface.
    """

    q_heat: Value = 0.0             # W m^-2, positive inward
    q_moist: Value = 0.0            # kg m^-2 s^-1, positive inward
    suppress_moist_at_saturation: bool = False


@dataclass
class AssembledSystem:
    """K r + C rdot = F with block dof ordering [theta, phi]."""

    K: sp.csr_matrix
    C: sp.csr_matrix
    F: np.ndarray
    num_nodes: int

    def block(self, matrix: str, name: str) -> sp.csr_matrix:
        """Extract a block ('tt', 'tp', 'pt', 'pp') of K or C for inspection."""
        m = {"K": self.K, "C": self.C}[matrix]
        n = self.num_nodes
        rows = slice(0, n) if name[0] == "t" else slice(n, 2 * n)
        cols = slice(0, n) if name[1] == "t" else slice(n, 2 * n)
        return m[rows, cols]


@dataclass
class NonlinearResult:
    r: np.ndarray
    iterations: int
    residuals: list[float] = field(default_factory=list)


def nonlinear_iterate(system_builder, r_guess: np.ndarray, *,
                      tol: float = 1e-6, max_iter: int = 50,
                      relax: float = 0.7, blocks=None,
                      project=None) -> NonlinearResult:
    """Safeguarded Picard iteration on A(r) r = b(r).

    ``system_builder(r)`` returns the frozen-coefficient pair (A, b).
    Convergence is judged on the worst per-block relative residual before
    each solve, so a linear system converges after one solve. ``relax``
    is the starting (and maximum) mixing factor; it is halved whenever
    the residual grows, down to a quarter of its starting value, which
    damps the oscillation of the frozen-coefficient map across a phase
    change front without slowing smooth steps. Divergence (residual
    growing tenfold over five iterations) and exceeding ``max_iter``
    solves raise StepFailureError.
    """
    if not 0.0 < relax <= 1.0:
        raise InvalidParametersError("relaxation factor must lie in (0, 1]")
    if max_iter < 1:
        raise InvalidParametersError("max_iter must be at least 1")
    r = np.array(r_guess, dtype=float)
    if project is not None:
        r = project(r)
    if blocks is None:
        blocks = [(0, len(r))]
    residuals: list[float] = []
    omega = relax
    for k in range(max_iter + 1):
        A, b = system_builder(r)
        mismatch = A @ r - b
        res = 0.0
        for lo, hi in blocks:
            scale = max(float(np.linalg.norm(b[lo:hi])), 1e-30)
            res = max(res, float(np.linalg.norm(mismatch[lo:hi])) / scale)
        residuals.append(res)
        if res < tol:
            return NonlinearResult(r, k, residuals)
        if k >= 5 and res > 10.0 * residuals[k - 5]:
            raise StepFailureError(
                f"Picard iteration diverging after {k} iterations",
                residual_norm=res, iterations=k)
        if k == max_iter:
            raise StepFailureError(
                f"no convergence in {max_iter} iterations (residual {res:.3e})",
                residual_norm=res, iterations=k)
        if k >= 1 and res > residuals[k - 1]:
            omega = max(0.5 * omega, 0.25 * relax)
        x = solve_sparse(A, b)
        r = (1.0 - omega) * r + omega * x
        if project is not None:
            r = project(r)
    raise AssertionError("unreachable")


class TransportProblem:
    """Mesh, coefficients and boundary data for the coupled balance.

    Parameters
    ----------
    mesh : Mesh
    coefficients : object
        Provides ``evaluate(theta, phi) -> CoefficientFields`` per element,
        e.g. KunzelCoefficients or ConstantCoefficients.
    robin : mapping BoundaryTag -> RobinBC, optional
    flux : mapping BoundaryTag -> BoundaryFlux, optional
    dirichlet_theta, dirichlet_phi : sequence of (node_ids, value), optional
        value is a float or callable(t) returning a float or per-node array.
    source_heat, source_moist : callable(x, y, t), optional
        Volumetric sources for verification problems; evaluated at element
        centroids.
    phi_bounds : (float, float) or None
        Humidity clamp applied to iterates and results. None disables it
        (linear verification problems).
    lumped_capacity : bool
        Replace the consistent storage matrix by its row-sum diagonal.
    """

    def __init__(self, mesh: Mesh, coefficients, *,
                 robin: dict[BoundaryTag, RobinBC] | None = None,
                 flux: dict[BoundaryTag, BoundaryFlux] | None = None,
                 dirichlet_theta: Sequence[tuple[np.ndarray, Value]] = (),
                 dirichlet_phi: Sequence[tuple[np.ndarray, Value]] = (),
                 source_heat=None, source_moist=None,
                 phi_bounds: tuple[float, float] | None = (0.0, 1.0),
                 lumped_capacity: bool = False):
        self.mesh = mesh
        self.coefficients = coefficients
        self.robin = dict(robin or {})
        self.flux = dict(flux or {})
        self.dirichlet_theta = [(np.asarray(nodes, dtype=np.int64), val)
                                for nodes, val in dirichlet_theta]
        self.dirichlet_phi = [(np.asarray(nodes, dtype=np.int64), val)
                              for nodes, val in dirichlet_phi]
        self.source_heat = source_heat
        self.source_moist = source_moist
        self.phi_bounds = phi_bounds
        self.lumped_capacity = lumped_capacity

        n = mesh.num_nodes
        conn = mesh.elements
        grads = mesh.grads
        areas = mesh.areas
        # exact element integrals for unit coefficients: stiffness from the
        # constant gradients, storage from the linear shape products
        self._S9 = (np.einsum("eik,ejk->eij", grads, grads)
                    * areas[:, None, None]).reshape(len(conn), 9)
        mass_pattern = (np.ones((3, 3)) + np.eye(3)) / 12.0
        if lumped_capacity:
            mass_pattern = np.eye(3) / 3.0
        self._M9 = (mass_pattern[None, :, :]
                    * areas[:, None, None]).reshape(len(conn), 9)
        self._M33 = self._M9.reshape(-1, 3, 3)
        rows = np.repeat(conn, 3, axis=1)            # (E, 9) i i i j j j ...
        cols = np.tile(conn, (1, 3))                 # (E, 9) i j k i j k ...
        self._rows = rows.ravel()
        self._cols = cols.ravel()
        self._conn_flat = conn.ravel()
        # scatter indices for the four K blocks and the two C blocks
        r_, c_ = self._rows, self._cols
        self._k_rows = np.concatenate([r_, r_, r_ + n, r_ + n])
        self._k_cols = np.concatenate([c_, c_ + n, c_, c_ + n])
        self._c_rows = np.concatenate([r_, r_ + n])
        self._c_cols = np.concatenate([c_, c_ + n])

        # edge node pairs and half-lengths per tag that carries a condition
        self._edges: dict[BoundaryTag, tuple[np.ndarray, np.ndarray]] = {}
        pairs = mesh.boundary_edge_nodes()
        lengths = mesh.boundary_edge_lengths()
        for tag in set(self.robin) | set(self.flux):
            idx = mesh.edges_with_tag(tag)
            self._edges[tag] = (pairs[idx], lengths[idx])

        # edge nodes and lumped weights per tag; the condition values are
        # read live from self.robin / self.flux so they may be swapped out
        self._edge_scatter = {
            tag: (pairs_l.ravel(), np.repeat(0.5 * lengths_l, 2))
            for tag, (pairs_l, lengths_l) in self._edges.items()}

    # -- assembly ----------------------------------------------------------

    def _centroid_state(self, theta: np.ndarray, phi: np.ndarray):
        theta_c = self.mesh.element_mean(theta)
        phi_c = self.mesh.element_mean(phi)
        for field_c, rng, label in ((theta_c, self.coefficients.theta_range, "theta"),
                                    (phi_c, self.coefficients.phi_range, "phi")):
            if rng is None:
                continue
            bad = np.nonzero((field_c < rng[0]) | (field_c > rng[1]))[0]
            if len(bad):
                e = int(bad[0])
                raise DomainError(
                    f"element {e}: centroid {label} {field_c[e]:g} outside "
                    f"[{rng[0]:g}, {rng[1]:g}]")
        return theta_c, phi_c

    def assemble(self, theta: np.ndarray, phi: np.ndarray, t: float,
                 suppressed_nodes: np.ndarray | None = None) -> AssembledSystem:
        """Build K, C and F at the given nodal state and time."""
        mesh = self.mesh
        n = mesh.num_nodes
        theta_c, phi_c = self._centroid_state(theta, phi)
        cf = self.coefficients.evaluate(theta_c, phi_c)

        def stiff(coef):
            return (coef[:, None] * self._S9).ravel()

        def store(coef):
            return (coef[:, None] * self._M9).ravel()

        k_rows, k_cols = self._k_rows, self._k_cols
        k_vals = np.concatenate([stiff(cf.k_tt), stiff(cf.k_tp),
                                 stiff(cf.k_pt), stiff(cf.k_pp)])
        c_rows, c_cols = self._c_rows, self._c_cols
        c_vals = np.concatenate([store(cf.c_tt), store(cf.c_pp)])

        F = np.zeros(2 * n)
        robin_rows = []
        robin_vals = []
        for tag, bc in self.robin.items():
            pairs, lengths = self._edges[tag]
            if len(pairs) == 0:
                continue
            half = 0.5 * lengths
            nodes = pairs.ravel()
            weights = np.repeat(half, 2)
            robin_rows.append(nodes)
            robin_vals.append(bc.alpha_h * weights)
            robin_rows.append(nodes + n)
            robin_vals.append(bc.beta_v * weights)
            np.add.at(F, nodes, bc.alpha_h * _at(bc.theta_amb, t) * weights)
            np.add.at(F, nodes + n, bc.beta_v * _at(bc.phi_amb, t) * weights)
        for tag, fl in self.flux.items():
            pairs, lengths = self._edges[tag]
            if len(pairs) == 0:
                continue
            half = 0.5 * lengths
            nodes = pairs.ravel()
            weights = np.repeat(half, 2)
            np.add.at(F, nodes, _at(fl.q_heat, t) * weights)
            q_m = _at(fl.q_moist, t) * weights
            if fl.suppress_moist_at_saturation and suppressed_nodes is not None:
                q_m = np.where(suppressed_nodes[nodes], 0.0, q_m)
            np.add.at(F, nodes + n, q_m)

        for src, offset in ((self.source_heat, 0), (self.source_moist, n)):
            if src is None:
                continue
            sc = src(mesh.centroids[:, 0], mesh.centroids[:, 1], t)
            load = np.broadcast_to(np.asarray(sc, dtype=float),
                                   (mesh.num_elements,)) * mesh.areas / 3.0
            np.add.at(F, mesh.elements.ravel() + offset,
                      np.repeat(load, 3))

        if robin_rows:
            rr = np.concatenate(robin_rows)
            k_rows = np.concatenate([k_rows, rr])
            k_cols = np.concatenate([k_cols, rr])
            k_vals = np.concatenate([k_vals, np.concatenate(robin_vals)])

        K = sp.coo_matrix((k_vals, (k_rows, k_cols)), shape=(2 * n, 2 * n)).tocsr()
        C = sp.coo_matrix((c_vals, (c_rows, c_cols)), shape=(2 * n, 2 * n)).tocsr()
        return AssembledSystem(K, C, F, n)

    def _step_loads(self, t: float):
        """Per-step load split: the part fixed within the step, plus the
        rain terms that get masked per iteration as nodes saturate."""
        mesh = self.mesh
        n = mesh.num_nodes
        base = np.zeros(2 * n)
        for tag, bc in self.robin.items():
            nodes, weights = self._edge_scatter[tag]
            if len(nodes) == 0:
                continue
            np.add.at(base, nodes, bc.alpha_h * _at(bc.theta_amb, t) * weights)
            np.add.at(base, nodes + n, bc.beta_v * _at(bc.phi_amb, t) * weights)
        rain = []
        for tag, fl in self.flux.items():
            nodes, weights = self._edge_scatter[tag]
            if len(nodes) == 0:
                continue
            np.add.at(base, nodes, _at(fl.q_heat, t) * weights)
            q_m = _at(fl.q_moist, t) * weights
            if fl.suppress_moist_at_saturation:
                rain.append((nodes, q_m))
            else:
                np.add.at(base, nodes + n, q_m)
        for src, offset in ((self.source_heat, 0), (self.source_moist, n)):
            if src is None:
                continue
            sc = src(mesh.centroids[:, 0], mesh.centroids[:, 1], t)
            load = np.broadcast_to(np.asarray(sc, dtype=float),
                                   (mesh.num_elements,)) * mesh.areas / 3.0
            np.add.at(base, mesh.elements.ravel() + offset,
                      np.repeat(load, 3))
        return base, rain

    def _exchange_diagonal(self):
        """Scatter indices and values of the edge-lumped exchange terms."""
        n = self.mesh.num_nodes
        diag = np.zeros(2 * n)
        for tag, bc in self.robin.items():
            nodes, weights = self._edge_scatter[tag]
            if len(nodes) == 0:
                continue
            np.add.at(diag, nodes, bc.alpha_h * weights)
            np.add.at(diag, nodes + n, bc.beta_v * weights)
        idx = np.nonzero(diag)[0]
        return idx, diag[idx]

    def _step_operator(self, theta, phi, gdt, scatter, f_base, rain,
                       mass_hist, suppressed, theta_ref=None):
        """[C + gdt K] and gdt F + C history for one Picard iterate.

        ``mass_hist`` holds the per-element unit-capacity products
        M_e h_e for the two blocks; multiplying by the storage
        coefficients and scattering gives C @ history without forming C.
        ``theta_ref`` is the step-start centroid temperature for
        coefficient models that support chord capacities.
        """
        n = self.mesh.num_nodes
        a_rows, a_cols, rob_val = scatter
        theta_c, phi_c = self._centroid_state(theta, phi)
        chord = getattr(self.coefficients, "evaluate_step", None)
        if chord is not None and theta_ref is not None:
            cf = chord(theta_c, phi_c, theta_ref)
        else:
            cf = self.coefficients.evaluate(theta_c, phi_c)
        a_tt = cf.c_tt[:, None] * self._M9 + (gdt * cf.k_tt)[:, None] * self._S9
        a_pp = cf.c_pp[:, None] * self._M9 + (gdt * cf.k_pp)[:, None] * self._S9
        vals = np.concatenate([a_tt.ravel(),
                               ((gdt * cf.k_tp)[:, None] * self._S9).ravel(),
                               ((gdt * cf.k_pt)[:, None] * self._S9).ravel(),
                               a_pp.ravel(),
                               gdt * rob_val])
        A = sp.coo_matrix((vals, (a_rows, a_cols)),
                          shape=(2 * n, 2 * n)).tocsr()
        F = f_base
        if rain:
            F = f_base.copy()
            for nodes, q_m in rain:
                np.add.at(F, nodes + n,
                          np.where(suppressed[nodes], 0.0, q_m))
        mh_t, mh_p = mass_hist
        b = gdt * F
        b[:n] += np.bincount(self._conn_flat,
                             (cf.c_tt[:, None] * mh_t).ravel(), minlength=n)
        b[n:] += np.bincount(self._conn_flat,
                             (cf.c_pp[:, None] * mh_p).ravel(), minlength=n)
        return A, b

    # -- dirichlet ---------------------------------------------------------

    def _dirichlet_at(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        n = self.mesh.num_nodes
        dofs = []
        vals = []
        for offset, groups in ((0, self.dirichlet_theta), (n, self.dirichlet_phi)):
            for nodes, value in groups:
                v = _at(value, t)
                dofs.append(nodes + offset)
                vals.append(np.broadcast_to(np.asarray(v, dtype=float),
                                            nodes.shape))
        if not dofs:
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        return np.concatenate(dofs), np.concatenate(vals)

    def _project(self, r: np.ndarray) -> np.ndarray:
        if self.phi_bounds is not None:
            n = self.mesh.num_nodes
            np.clip(r[n:], self.phi_bounds[0], self.phi_bounds[1], out=r[n:])
        return r

    # -- time stepping -----------------------------------------------------

    def consistent_rates(self, state: TransportState) -> np.ndarray:
        """Initial rdot solving C rdot = F - K r at the state's time.

        Dirichlet dofs get the numeric time derivative of their prescribed
        value. Use this to seed rdot before the first trapezoidal step.
        """
        r = state.r
        sys = self.assemble(state.theta, state.phi, state.t)
        rhs = sys.F - sys.K @ r
        dofs, _ = self._dirichlet_at(state.t)
        if len(dofs):
            dt = 1e-6
            _, v0 = self._dirichlet_at(state.t)
            _, v1 = self._dirichlet_at(state.t + dt)
            rates = (v1 - v0) / dt
            A, b = apply_dirichlet(sys.C, rhs, dofs, rates)
        else:
            A, b = sys.C, rhs
        return solve_sparse(A, b)

    def step(self, state: TransportState, dt: float, *, gamma: float = 0.5,
             tol: float = 1e-6, max_iter: int = 50,
             relax: float = 0.7) -> TransportState:
        """Advance one time step; raises StepFailureError on non-convergence."""
        if dt <= 0.0:
            raise InvalidParametersError("dt must be positive")
        if not 0.0 <= gamma <= 1.0:
            raise InvalidParametersError("gamma must lie in [0, 1]")
        n = self.mesh.num_nodes
        r_old = state.r
        rdot_old = state.rdot if state.rdot is not None else np.zeros(2 * n)
        t_new = state.t + dt
        history = r_old + dt * (1.0 - gamma) * rdot_old
        suppressed = np.zeros(n, dtype=bool)
        gdt = gamma * dt
        f_base, rain = self._step_loads(t_new)
        rob_idx, rob_val = self._exchange_diagonal()
        scatter = (np.concatenate([self._k_rows, rob_idx]),
                   np.concatenate([self._k_cols, rob_idx]), rob_val)
        conn = self.mesh.elements
        mass_hist = (np.einsum("eij,ej->ei", self._M33, history[conn]),
                     np.einsum("eij,ej->ei", self._M33, history[n:][conn]))
        dofs, vals = self._dirichlet_at(t_new)
        theta_ref = self.mesh.element_mean(state.theta)

        def builder(r):
            suppressed[:] |= r[n:] >= _SATURATED
            A, b = self._step_operator(r[:n], r[n:], gdt, scatter, f_base,
                                       rain, mass_hist, suppressed,
                                       theta_ref=theta_ref)
            if len(dofs):
                A, b = apply_dirichlet(A, b, dofs, vals)
            return A, b

        # forward Euler predictor; a good guess lets mild steps converge
        # in one or two solves
        result = nonlinear_iterate(builder, r_old + dt * rdot_old, tol=tol,
                                   max_iter=max_iter, relax=relax,
                                   blocks=[(0, n), (n, 2 * n)],
                                   project=self._project)
        r_new = result.r
        if gamma > 0.0:
            rdot_new = (r_new - r_old - dt * (1.0 - gamma) * rdot_old) / (gamma * dt)
        else:
            sys = self.assemble(r_new[:n], r_new[n:], t_new,
                                suppressed_nodes=suppressed)
            rdot_new = solve_sparse(sys.C, sys.F - sys.K @ r_new)
        return TransportState(t_new, r_new[:n].copy(), r_new[n:].copy(),
                              rdot_new, picard_iterations=result.iterations)

    def advance(self, state: TransportState, dt: float, *,
                max_halvings: int = 4, **options) -> TransportState:
        """Advance by dt, halving the step on failure up to max_halvings times."""
        try:
            return self.step(state, dt, **options)
        except StepFailureError:
            if max_halvings <= 0:
                raise
        half = self.step if max_halvings == 1 else self.advance
        kwargs = dict(options)
        if max_halvings > 1:
            kwargs["max_halvings"] = max_halvings - 1
        mid = half(state, 0.5 * dt, **kwargs)
        return half(mid, 0.5 * dt, **kwargs)
