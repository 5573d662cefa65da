"""Simulation orchestration and output writing.

Each time step runs the one-way pipeline: advance the transport fields,
evaluate the crystallization pore pressure per element from the centroid
temperature, then solve mechanical equilibrium with the new loads. No
mechanical quantity feeds back into transport.

Configuration is a single JSON document validated against the bundled
schema; every omitted field falls back to the lime mortar reference
values, so ``run({})`` simulates the built-in winter scenario. Outputs
are a probe CSV (time series at selected nodes) and periodic legacy
ASCII VTK snapshots of all fields.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import scipy.sparse as sp

from .climate_io import ClimateSeries, load_climate
from .constitutive import TransportParams
from .errors import ConfigError, StepFailureError
from .ice import IceModel, IceParams, load_psd_csv
from .mechanics import MechanicsProblem, MechParams, MechState
from .mesh import BoundaryTag, Mesh, generate_lshape, load_mesh
from .transport_solver import (
    BoundaryFlux,
    KunzelCoefficients,
    RobinBC,
    TransportProblem,
    TransportState,
)

__all__ = [
    "DEFAULT_CONFIG", "ProbeRecord", "RunSummary", "StepFields",
    "default_probes", "load_config", "validate_config", "run",
    "write_probe_csv", "read_probe_csv", "write_field_snapshot",
]

# Reference scenario: lime mortar wall cross section, one winter month.
# Null file entries select the data files bundled with the package.
DEFAULT_CONFIG: dict = {
    "mesh": {"file": None, "outer": 1.0, "thickness": 0.4, "h": 0.03},
    "material": {
        "w_f": 160.0, "w_80": 23.0, "lambda_0": 0.45, "b_tcs": 9.0,
        "rho_s": 1670.0, "mu": 9.63, "a_abs": 0.82, "c_s": 1000.0,
        "c_l": 4187.0, "c_i": 2100.0, "h_i": 3.34e5,
        "capillary_exponent": "literal",
    },
    "ice": {
        "gamma_li": 0.0409, "delta_s_m": 1.2e6, "n": 0.35, "p_l": 0.0,
        "psd_file": None,
    },
    "mechanics": {
        "E": 1e10, "nu": 0.2, "f_t": 2.5e6, "eps_f": 2.5e-3,
        "l_intl": 1e-3, "alpha": 1.2e-5, "residual_stiffness": 1e-6,
        "body_force": [0.0, 0.0],
    },
    "climate": {"file": None},
    "interior": {"theta": 24.0, "phi": 0.6},
    "transfer": {"alpha_h": 8.0, "beta_v": 5.6e-8, "alpha_swr": 0.6},
    "initial": {"theta": 14.0, "phi": 0.5},
    "time": {"dt_s": 3600.0, "steps": 744, "gamma": 0.5},
    "numerics": {
        "picard_tol": 1e-6, "picard_max_iter": 50, "relax": 1.0,
        "max_halvings": 4, "lumped_capacity": False,
        "damage_tol": 1e-4, "damage_max_iter": 30,
    },
    "probes": None,
    "output": {
        "dir": None, "probe_file": "probes.csv", "probe_every": 1,
        "snapshot_every": 24, "write_snapshots": True,
    },
}

_PROBE_HEADER = "time_h,node,theta_C,phi,p_p_Pa,d_w,u_mag_m"


def _data_file(name: str) -> Path:
    return Path(resources.files("frostsim.data").joinpath(name))


def _schema() -> dict:
    with open(_data_file("config_schema.json"), encoding="utf-8") as fh:
        return json.load(fh)


def _merge_defaults(defaults, overrides, where="config"):
    if overrides is None:
        return copy.deepcopy(defaults)
    if isinstance(defaults, dict):
        if not isinstance(overrides, dict):
            raise ConfigError(f"{where} must be an object")
        merged = {}
        for key, base in defaults.items():
            if key in overrides:
                merged[key] = _merge_defaults(base, overrides[key],
                                              f"{where}.{key}")
            else:
                merged[key] = copy.deepcopy(base)
        return merged
    return copy.deepcopy(overrides)


def validate_config(config: dict, base_dir: str | Path | None = None) -> dict:
    """Schema-check a config fragment and fill in every default.

    Relative file paths are resolved against ``base_dir`` (the config
    file's directory when loaded from disk, the working directory
    otherwise). Returns the normalized full config.
    """
    if not isinstance(config, dict):
        raise ConfigError("config must be a JSON object")
    validator = jsonschema.Draft202012Validator(_schema())
    errors = sorted(validator.iter_errors(config), key=lambda e: list(e.path))
    if errors:
        spots = "; ".join(
            "/".join(str(p) for p in err.absolute_path) or "(top level)"
            for err in errors[:3])
        raise ConfigError(f"invalid config at {spots}: {errors[0].message}")
    cfg = _merge_defaults(DEFAULT_CONFIG, config)

    base = Path(base_dir) if base_dir is not None else Path.cwd()
    for section, key in (("mesh", "file"), ("ice", "psd_file"),
                         ("climate", "file")):
        value = cfg[section][key]
        if value is not None and not Path(value).is_absolute() \
                and value not in ("spec01", "spec02"):
            cfg[section][key] = str(base / value)
    if cfg["output"]["dir"] is not None \
            and not Path(cfg["output"]["dir"]).is_absolute():
        cfg["output"]["dir"] = str(base / cfg["output"]["dir"])

    if cfg["time"]["dt_s"] <= 0.0:
        raise ConfigError("time.dt_s must be positive")
    if cfg["time"]["steps"] < 1:
        raise ConfigError("time.steps must be at least 1")
    if not 0.0 <= cfg["time"]["gamma"] <= 1.0:
        raise ConfigError("time.gamma must lie in [0, 1]")
    for section, key in (("mesh", "file"), ("ice", "psd_file"),
                         ("climate", "file")):
        value = cfg[section][key]
        if value is not None and value not in ("spec01", "spec02") \
                and not Path(value).is_file():
            raise ConfigError(f"{section}.{key}: no such file: {value}")
    return cfg


def load_config(path: str | Path) -> dict:
    """Read, validate and normalize a JSON config file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"config {path} is not valid JSON: {err}") from err
    return validate_config(raw, base_dir=path.parent)


def _build_mesh(mesh_cfg: dict) -> Mesh:
    if mesh_cfg["file"] is not None:
        return load_mesh(mesh_cfg["file"])
    return generate_lshape(mesh_cfg["outer"], mesh_cfg["thickness"],
                           mesh_cfg["h"])


def _load_psd(ice_cfg: dict):
    name = ice_cfg["psd_file"]
    if name is None or name == "spec01":
        return load_psd_csv(_data_file("psd_spec01.csv"))
    if name == "spec02":
        return load_psd_csv(_data_file("psd_spec02.csv"))
    return load_psd_csv(name)


def _load_climate(climate_cfg: dict) -> ClimateSeries:
    name = climate_cfg["file"]
    if name is None:
        return load_climate(_data_file("climate_winter_744h.csv"))
    return load_climate(name)


def default_probes(mesh: Mesh, count: int = 5) -> np.ndarray:
    """Probe line through the coldest part of the wall.

    Targets run along the bisector from the exterior corner (the node
    closest to the domain's minimum coordinates, where two exposed
    faces meet and frost bites deepest) to the re-entrant interior
    corner (the closest node tagged INT when the mesh has one, the
    domain center otherwise). Each target snaps to its nearest node
    and duplicates collapse.
    """
    nodes = mesh.nodes
    lo = nodes.min(axis=0)
    hi = nodes.max(axis=0)
    interior = mesh.nodes_with_tag(BoundaryTag.INT)
    if len(interior):
        stop = nodes[interior[np.argmin(
            np.sum((nodes[interior] - lo) ** 2, axis=1))]]
    else:
        stop = 0.5 * (lo + hi)
    picked: list[int] = []
    for s in np.linspace(0.0, 1.0, count):
        target = lo + s * (stop - lo)
        node = int(np.argmin(np.sum((nodes - target) ** 2, axis=1)))
        if node not in picked:
            picked.append(node)
    return np.array(picked, dtype=np.int64)


def _node_averager(mesh: Mesh) -> sp.csr_matrix:
    """Area-weighted element-to-node averaging matrix (N x E)."""
    e = mesh.num_elements
    rows = mesh.elements.ravel()
    cols = np.repeat(np.arange(e), 3)
    vals = np.repeat(mesh.areas, 3)
    M = sp.coo_matrix((vals, (rows, cols)),
                      shape=(mesh.num_nodes, e)).tocsr()
    norm = np.asarray(M.sum(axis=1)).ravel()
    return sp.diags(1.0 / norm) @ M


@dataclass
class ProbeRecord:
    """All probe quantities at one output time."""

    time_h: float
    nodes: np.ndarray           # probe node ids
    theta: np.ndarray           # degC
    phi: np.ndarray             # -
    p_p: np.ndarray             # Pa, element average around the node
    d_w: np.ndarray             # -, element average around the node
    u_mag: np.ndarray           # m

    def __eq__(self, other):
        if not isinstance(other, ProbeRecord):
            return NotImplemented
        return self.time_h == other.time_h and all(
            np.array_equal(getattr(self, name), getattr(other, name))
            for name in ("nodes", "theta", "phi", "p_p", "d_w", "u_mag"))


@dataclass(frozen=True)
class StepFields:
    """Field arrays of one completed step, as written to snapshots."""

    theta: np.ndarray           # nodal, degC
    phi: np.ndarray             # nodal, -
    u: np.ndarray               # nodal, (2N,) interleaved x/y, m
    p_p: np.ndarray             # element, Pa
    d_w: np.ndarray             # element, -
    kappa: np.ndarray           # element, -


@dataclass
class RunSummary:
    """Final states plus the per-step histories a run accumulated."""

    config: dict
    mesh: Mesh
    transport: TransportState
    mechanics: MechState
    probe_nodes: np.ndarray
    records: list[ProbeRecord]
    damage_history: np.ndarray      # (steps + 1, E), row 0 pristine
    kappa_history: np.ndarray       # (steps + 1, E)
    pore_pressure_history: np.ndarray   # (steps + 1, E), Pa
    picard_iterations: np.ndarray   # (steps,)
    outputs: list[Path] = field(default_factory=list)


def run(config: dict | str | Path | None = None,
        out_dir: str | Path | None = None) -> RunSummary:
    """Run a configured simulation; see module docstring for the pipeline.

    ``config`` may be a path to a JSON file, a (partial) config dict, or
    None for the built-in reference scenario. ``out_dir`` overrides the
    configured output directory; with neither set, nothing is written
    and the results live only on the returned summary.
    """
    if config is None:
        cfg = validate_config({})
    elif isinstance(config, (str, Path)):
        cfg = load_config(config)
    else:
        cfg = validate_config(config)
    if out_dir is not None:
        cfg["output"]["dir"] = str(out_dir)

    mesh = _build_mesh(cfg["mesh"])
    transport_params = TransportParams(**cfg["material"])
    ice_cfg = cfg["ice"]
    ice = IceModel(_load_psd(ice_cfg),
                   IceParams(gamma_li=ice_cfg["gamma_li"],
                             delta_s_m=ice_cfg["delta_s_m"],
                             n=ice_cfg["n"], p_l=ice_cfg["p_l"]))
    mech_cfg = cfg["mechanics"]
    mech_params = MechParams(E=mech_cfg["E"], nu=mech_cfg["nu"],
                             f_t=mech_cfg["f_t"], eps_f=mech_cfg["eps_f"],
                             l_intl=mech_cfg["l_intl"],
                             alpha=mech_cfg["alpha"], n=ice_cfg["n"],
                             residual_stiffness=mech_cfg["residual_stiffness"],
                             body_force=tuple(mech_cfg["body_force"]))
    climate = _load_climate(cfg["climate"])

    probes = cfg["probes"]
    if probes is None:
        probe_nodes = default_probes(mesh)
    else:
        probe_nodes = np.asarray(probes, dtype=np.int64)
        if probe_nodes.ndim != 1 or len(probe_nodes) == 0:
            raise ConfigError("probes must be a non-empty list of node ids")
        if probe_nodes.min() < 0 or probe_nodes.max() >= mesh.num_nodes:
            raise ConfigError(
                f"probe ids must lie in [0, {mesh.num_nodes})")

    transfer = cfg["transfer"]
    interior = cfg["interior"]
    robin = {
        BoundaryTag.EXT: RobinBC(
            transfer["alpha_h"], transfer["beta_v"],
            theta_amb=lambda t: climate.sample(t).theta,
            phi_amb=lambda t: climate.sample(t).phi),
        BoundaryTag.INT: RobinBC(
            transfer["alpha_h"], transfer["beta_v"],
            theta_amb=interior["theta"], phi_amb=interior["phi"]),
    }
    alpha_swr = transfer["alpha_swr"]
    flux = {
        BoundaryTag.EXT: BoundaryFlux(
            q_heat=lambda t: alpha_swr * climate.sample(t).swr,
            q_moist=lambda t: climate.sample(t).rain,
            suppress_moist_at_saturation=True),
    }
    numerics = cfg["numerics"]
    problem = TransportProblem(
        mesh, KunzelCoefficients(transport_params, ice_model=ice),
        robin=robin, flux=flux,
        lumped_capacity=numerics["lumped_capacity"])

    initial = cfg["initial"]
    state = TransportState.uniform(mesh, initial["theta"], initial["phi"])
    state.rdot = problem.consistent_rates(state)
    theta_ref = float(initial["theta"])
    mechanics = MechanicsProblem(mesh, mech_params)
    mstate = MechState.zero(mesh)

    timecfg = cfg["time"]
    dt = float(timecfg["dt_s"])
    steps = int(timecfg["steps"])
    gamma = float(timecfg["gamma"])
    outcfg = cfg["output"]
    out = Path(outcfg["dir"]) if outcfg["dir"] is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    e = mesh.num_elements
    damage_history = np.zeros((steps + 1, e))
    kappa_history = np.zeros((steps + 1, e))
    pressure_history = np.zeros((steps + 1, e))
    picard = np.zeros(steps, dtype=np.int64)
    averager = _node_averager(mesh)
    probe_rows = averager[probe_nodes]
    records: list[ProbeRecord] = []
    outputs: list[Path] = []

    step_options = dict(gamma=gamma, tol=numerics["picard_tol"],
                        max_iter=numerics["picard_max_iter"],
                        relax=numerics["relax"])
    for k in range(1, steps + 1):
        try:
            state = problem.advance(state, dt,
                                    max_halvings=numerics["max_halvings"],
                                    **step_options)
        except StepFailureError as err:
            raise StepFailureError(
                f"transport failed at step {k} (t = {state.t / 3600.0:g} h "
                f"+ {dt:g} s) after retries: {err}",
                residual_norm=err.residual_norm,
                iterations=err.iterations) from err
        p_p = ice.pore_pressure(mesh.element_mean(state.theta))
        mstate = mechanics.solve(theta=state.theta, theta_ref=theta_ref,
                                 p_p=p_p, prev=mstate,
                                 tol=numerics["damage_tol"],
                                 max_iter=numerics["damage_max_iter"])
        damage_history[k] = mstate.d_w
        kappa_history[k] = mstate.kappa
        pressure_history[k] = p_p
        picard[k - 1] = state.picard_iterations

        if k % outcfg["probe_every"] == 0 or k == steps:
            ux = mstate.u[2 * probe_nodes]
            uy = mstate.u[2 * probe_nodes + 1]
            records.append(ProbeRecord(
                time_h=state.t / 3600.0,
                nodes=probe_nodes.copy(),
                theta=state.theta[probe_nodes].copy(),
                phi=state.phi[probe_nodes].copy(),
                p_p=probe_rows @ p_p,
                d_w=probe_rows @ mstate.d_w,
                u_mag=np.hypot(ux, uy)))
        if out is not None and outcfg["write_snapshots"] \
                and (k % outcfg["snapshot_every"] == 0 or k == steps):
            fields = StepFields(state.theta, state.phi, mstate.u,
                                p_p, mstate.d_w, mstate.kappa)
            path = out / f"snapshot_{k:05d}.vtk"
            write_field_snapshot(mesh, fields, path,
                                 title=f"fields at t = {state.t / 3600.0:g} h")
            outputs.append(path)

    if out is not None:
        probe_path = out / outcfg["probe_file"]
        write_probe_csv(records, probe_path)
        outputs.append(probe_path)
    return RunSummary(cfg, mesh, state, mstate, probe_nodes, records,
                      damage_history, kappa_history, pressure_history,
                      picard, outputs)


def write_probe_csv(records: list[ProbeRecord], path: str | Path) -> None:
    """Write probe records time-major, node-minor under a fixed header."""
    lines = [_PROBE_HEADER]
    for rec in records:
        for i, node in enumerate(rec.nodes):
            lines.append(",".join([
                repr(float(rec.time_h)), str(int(node)),
                repr(float(rec.theta[i])), repr(float(rec.phi[i])),
                repr(float(rec.p_p[i])), repr(float(rec.d_w[i])),
                repr(float(rec.u_mag[i])),
            ]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_probe_csv(path: str | Path) -> list[ProbeRecord]:
    """Read a probe CSV back into records grouped by time."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != _PROBE_HEADER:
        raise ConfigError(f"not a probe CSV: {path}")
    records: list[ProbeRecord] = []
    buf: dict[float, list[list[float]]] = {}
    order: list[float] = []
    for ln in lines[1:]:
        parts = ln.split(",")
        t = float(parts[0])
        if t not in buf:
            buf[t] = []
            order.append(t)
        buf[t].append([float(parts[1])] + [float(p) for p in parts[2:]])
    for t in order:
        rows = np.array(buf[t])
        records.append(ProbeRecord(
            time_h=t, nodes=rows[:, 0].astype(np.int64), theta=rows[:, 1],
            phi=rows[:, 2], p_p=rows[:, 3], d_w=rows[:, 4], u_mag=rows[:, 5]))
    return records


def _vtk_scalars(name: str, values: np.ndarray) -> list[str]:
    lines = [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
    lines.extend(repr(float(v)) for v in values)
    return lines


def write_field_snapshot(mesh: Mesh, fields: StepFields, path: str | Path,
                         title: str = "frostsim fields") -> None:
    """Write one legacy ASCII VTK unstructured grid snapshot."""
    n = mesh.num_nodes
    e = mesh.num_elements
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {n} double",
    ]
    for x, y in mesh.nodes:
        lines.append(f"{float(x)!r} {float(y)!r} 0.0")
    lines.append(f"CELLS {e} {4 * e}")
    for a, b, c in mesh.elements:
        lines.append(f"3 {a} {b} {c}")
    lines.append(f"CELL_TYPES {e}")
    lines.extend(["5"] * e)
    lines.append(f"POINT_DATA {n}")
    lines.extend(_vtk_scalars("theta_C", fields.theta))
    lines.extend(_vtk_scalars("phi", fields.phi))
    lines.append("VECTORS displacement_m double")
    for i in range(n):
        lines.append(f"{float(fields.u[2 * i])!r} "
                     f"{float(fields.u[2 * i + 1])!r} 0.0")
    lines.append(f"CELL_DATA {e}")
    lines.extend(_vtk_scalars("p_p_Pa", fields.p_p))
    lines.extend(_vtk_scalars("d_w", fields.d_w))
    lines.extend(_vtk_scalars("kappa", fields.kappa))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
