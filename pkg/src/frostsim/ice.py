"""Ice crystallization pressure and frozen water content.

Pores freeze once their radius exceeds a temperature dependent critical
radius composed of the curvature radius of the ice-liquid interface and an
unfrozen adsorbed film on the pore wall. Crystals in frozen pores press on
the wall; averaging that pressure over the pore size distribution gives the
equivalent pore pressure that loads the solid skeleton.

Temperatures are degrees Celsius and must be strictly below zero where a
function only makes sense for frozen pores. Radii are meters.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import constitutive
from .errors import DomainError, InvalidParametersError, InvalidPsdError

# adsorbed film thickness prefactor, m K^(1/3)
_FILM_COEF = 1.97e-9


@dataclass(frozen=True)
class IceParams:
    gamma_li: float = 0.0409    # J m^-2, ice-liquid interface energy
    delta_s_m: float = 1.2e6    # J m^-3 K^-1, melting entropy density
    n: float = 0.35             # -, total porosity
    p_l: float = 0.0            # Pa, liquid pressure gauge

    def __post_init__(self):
        if self.gamma_li <= 0.0 or self.delta_s_m <= 0.0:
            raise InvalidParametersError("gamma_li and delta_s_m must be positive")
        if not 0.0 < self.n < 1.0:
            raise InvalidParametersError("porosity must lie in (0, 1)")


def default_lime_mortar_ice() -> IceParams:
    return IceParams()


class PoreSizeDistribution:
    """Cumulative pore volume table psi(r).

    psi(r) is the volume fraction of pores with radius larger than r, so
    the table starts at the total porosity and decreases to zero toward
    the largest measured radius. Interpolation is linear in log(r) and
    clamps to the end values outside the table.
    """

    def __init__(self, radii: np.ndarray, cum_porosity: np.ndarray):
        radii = np.asarray(radii, dtype=float)
        psi = np.asarray(cum_porosity, dtype=float)
        if radii.ndim != 1 or radii.shape != psi.shape or len(radii) < 2:
            raise InvalidPsdError("need matching 1-D tables with at least 2 rows")
        if np.any(radii <= 0.0):
            raise InvalidPsdError("radii must be positive")
        if np.any(np.diff(radii) <= 0.0):
            raise InvalidPsdError("radii must be strictly increasing")
        if np.any(np.diff(psi) > 0.0):
            raise InvalidPsdError("cumulative porosity must be non-increasing")
        if psi[-1] < 0.0:
            raise InvalidPsdError("cumulative porosity must be non-negative")
        if not 0.0 < psi[0] < 1.0:
            raise InvalidPsdError("total porosity must lie in (0, 1)")
        self.radii = radii
        self.cum_porosity = psi
        self._log_r = np.log(radii)
        for arr in (self.radii, self.cum_porosity, self._log_r):
            arr.setflags(write=False)

    @property
    def total_porosity(self) -> float:
        return float(self.cum_porosity[0])

    def psi(self, r):
        """Volume fraction of pores larger than r; clamped outside the table."""
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0.0):
            raise DomainError("pore radius must be positive")
        return np.interp(np.log(r), self._log_r, self.cum_porosity)

    def refined(self, factor: int) -> "PoreSizeDistribution":
        """Re-tabulated distribution with ``factor`` log-spaced points per bin."""
        if factor < 1:
            raise InvalidParametersError("refinement factor must be >= 1")
        logs = [np.linspace(self._log_r[i], self._log_r[i + 1], factor + 1)[:-1]
                for i in range(len(self.radii) - 1)]
        log_r = np.concatenate(logs + [self._log_r[-1:]])
        return PoreSizeDistribution(np.exp(log_r),
                                    np.interp(log_r, self._log_r, self.cum_porosity))


def load_psd_csv(path: str | Path) -> PoreSizeDistribution:
    """Read a ``radius_m,cum_porosity`` CSV table."""
    path = Path(path)
    radii = []
    psi = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["radius_m", "cum_porosity"]:
            raise InvalidPsdError(
                f"{path}: expected header 'radius_m,cum_porosity'")
        for rownum, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 2:
                raise InvalidPsdError(f"{path}: row {rownum} needs 2 columns")
            try:
                radii.append(float(row[0]))
                psi.append(float(row[1]))
            except ValueError:
                raise InvalidPsdError(f"{path}: row {rownum} is not numeric") from None
    return PoreSizeDistribution(np.array(radii), np.array(psi))


def _check_freezing(theta):
    theta = np.asarray(theta, dtype=float)
    if np.any(theta >= 0.0):
        raise DomainError("expected temperature below 0 degC")
    return theta


def adsorbed_layer(theta):
    """Unfrozen film thickness on the pore wall, m, for theta < 0 degC."""
    theta = _check_freezing(theta)
    return _FILM_COEF * (1.0 / np.abs(theta)) ** (1.0 / 3.0)


def interface_radius(theta, params: IceParams):
    """Curvature radius of the ice-liquid interface, m, for theta < 0 degC."""
    theta = _check_freezing(theta)
    return 2.0 * params.gamma_li / (params.delta_s_m * np.abs(theta))


def critical_radius(theta, params: IceParams):
    """Smallest frozen pore radius; +inf at or above 0 degC."""
    theta = np.asarray(theta, dtype=float)
    frozen = theta < 0.0
    out = np.full(theta.shape, np.inf)
    if np.any(frozen):
        tf = theta[frozen]
        out[frozen] = interface_radius(tf, params) + adsorbed_layer(tf)
    if out.ndim == 0:
        return float(out)
    return out


def _chi(r, r_ir, r_ar, gamma_li):
    """Crystal pressure on the wall of a single frozen pore, Pa."""
    return gamma_li * (2.0 / r_ir - 1.0 / (r - r_ar))


def wall_pressure(r, theta, params: IceParams):
    """Pressure exerted on the wall of a frozen pore of radius r, Pa.

    Defined for r >= critical radius; grows from gamma_li / r_ir at the
    critical radius to 2 gamma_li / r_ir for very large pores.
    """
    theta = _check_freezing(theta)
    r = np.asarray(r, dtype=float)
    r_ir = interface_radius(theta, params)
    r_ar = adsorbed_layer(theta)
    if np.any(r < r_ir + r_ar - 1e-12 * r_ir):
        raise DomainError("pore radius below the critical radius")
    return _chi(r, r_ir, r_ar, params.gamma_li)


def average_pore_pressure(theta, psd: PoreSizeDistribution, params: IceParams,
                          bins_per_interval: int = 8):
    """Equivalent pore pressure from crystals averaged over the PSD, Pa.

    p_p = p_l + (1/n) sum chi(r_mid) dpsi over frozen pores, integrated
    with a midpoint rule on log-spaced sub-bins of the table, the first
    bin split exactly at the critical radius. Returns p_l (gauge zero by
    default) at or above 0 degC. Accepts scalars or 1-D arrays.
    """
    theta_arr = np.atleast_1d(np.asarray(theta, dtype=float))
    out = np.full(theta_arr.shape, params.p_l)
    frozen = theta_arr < 0.0
    if np.any(frozen):
        tf = theta_arr[frozen]
        r_ir = interface_radius(tf, params)
        r_ar = adsorbed_layer(tf)
        r_cr = r_ir + r_ar

        log_lo = np.log(np.maximum(r_cr, psd.radii[0]))
        log_hi = np.log(psd.radii[-1])
        # sub-bin edges from r_cr (or the table start) to the table end
        nseg = bins_per_interval * (len(psd.radii) - 1)
        s = np.linspace(0.0, 1.0, nseg + 1)
        edges = log_lo[:, None] + (log_hi - log_lo)[:, None] * s[None, :]
        psi_e = np.interp(edges, psd._log_r, psd.cum_porosity)
        dpsi = psi_e[:, :-1] - psi_e[:, 1:]          # >= 0, psi decreasing
        r_mid = np.exp(0.5 * (edges[:, :-1] + edges[:, 1:]))
        chi = _chi(r_mid, r_ir[:, None], r_ar[:, None], params.gamma_li)
        integral = np.where(log_hi > log_lo[:, None],
                            chi * dpsi, 0.0).sum(axis=1)
        out[frozen] = params.p_l + integral / params.n
    if np.isscalar(theta) or np.ndim(theta) == 0:
        return float(out[0])
    return out


def ice_content(theta, phi, psd: PoreSizeDistribution, params: IceParams,
                transport: constitutive.TransportParams,
                fd_step: float = 0.01):
    """Frozen water content w_i and its slope dw_i/dtheta.

    The water held at humidity phi is assumed distributed over the pore
    volume, so the frozen fraction is psi(r_cr) / n. The slope is a
    centered finite difference with the given step in kelvin, clamped to
    be non-positive. Both outputs are zero at or above 0 degC.
    """
    theta_arr = np.asarray(theta, dtype=float)
    phi_arr = np.asarray(phi, dtype=float)
    w = constitutive.water_content(phi_arr, transport)

    def frozen_fraction(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        frac = np.zeros(t.shape)
        frozen = t < 0.0
        if np.any(frozen):
            r_cr = (interface_radius(t[frozen], params)
                    + adsorbed_layer(t[frozen]))
            frac[frozen] = psd.psi(np.minimum(r_cr, psd.radii[-1])) / params.n
        return frac

    shape = np.broadcast_shapes(theta_arr.shape, phi_arr.shape)
    t = np.broadcast_to(theta_arr, shape)
    w = np.broadcast_to(w, shape)
    w_i = w * frozen_fraction(t).reshape(shape)
    slope = (w * (frozen_fraction(t + fd_step) - frozen_fraction(t - fd_step))
             .reshape(shape) / (2.0 * fd_step))
    slope = np.minimum(slope, 0.0)
    if np.ndim(theta) == 0 and np.ndim(phi) == 0:
        return float(w_i.reshape(())), float(slope.reshape(()))
    return w_i, slope


@dataclass(frozen=True)
class IceModel:
    """Bundle of a pore size distribution and ice parameters.

    Provides the interface the heat capacity and the transport assembly
    expect: ``ice_content(theta, phi, transport)`` and
    ``pore_pressure(theta)``.
    """

    psd: PoreSizeDistribution
    params: IceParams

    def __post_init__(self):
        if abs(self.psd.total_porosity - self.params.n) > 1e-6:
            raise InvalidParametersError(
                f"PSD total porosity {self.psd.total_porosity:g} does not "
                f"match configured porosity {self.params.n:g}")

    def ice_content(self, theta, phi, transport: constitutive.TransportParams):
        return ice_content(theta, phi, self.psd, self.params, transport)

    def pore_pressure(self, theta):
        return average_pore_pressure(theta, self.psd, self.params)
