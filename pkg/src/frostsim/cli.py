"""Command line entry points.

Exit codes: 0 success, 2 configuration problem, 3 solver failure,
4 output I/O failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import constitutive, ice
from .driver import load_config, run, _load_psd
from .errors import (
    ClimateFormatError,
    ConfigError,
    DomainError,
    FrostsimError,
    InvalidGeometryError,
    InvalidParametersError,
    InvalidPsdError,
    MeshFormatError,
    SingularSystemError,
    StepFailureError,
)
from .ice import IceModel, IceParams
from .mechanics import MechParams, biot_coefficient
from .mesh import generate_lshape, write_mesh

_CONFIG_ERRORS = (ConfigError, InvalidParametersError, InvalidPsdError,
                  MeshFormatError, ClimateFormatError, InvalidGeometryError)
_SOLVER_ERRORS = (StepFailureError, SingularSystemError, DomainError)


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="frostsim",
        description="Coupled heat and moisture transport with ice "
                    "crystallization damage in porous mortar walls.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a configured simulation")
    p_run.add_argument("--config", required=True, help="JSON config file")
    p_run.add_argument("--out", default=None,
                       help="output directory (overrides config)")

    p_mesh = sub.add_parser("make-mesh",
                            help="generate an L-shaped wall corner mesh")
    p_mesh.add_argument("--outer", type=float, required=True,
                        help="outer edge length, m")
    p_mesh.add_argument("--thickness", type=float, required=True,
                        help="wall thickness, m")
    p_mesh.add_argument("--h", type=float, required=True,
                        help="target element size, m")
    p_mesh.add_argument("--out", required=True, help="mesh file to write")

    p_curves = sub.add_parser(
        "material-curves",
        help="tabulate the material functions of a config as CSV")
    p_curves.add_argument("--config", required=True, help="JSON config file")
    p_curves.add_argument("--out", required=True, help="output directory")

    p_check = sub.add_parser("check-config",
                             help="validate a config and print derived "
                                  "quantities")
    p_check.add_argument("config", help="JSON config file")
    return parser


def _cmd_run(args) -> int:
    out = args.out
    if out is None:
        cfg = load_config(args.config)
        out = cfg["output"]["dir"] or "frostsim_out"
    summary = run(args.config, out_dir=out)
    d_max = float(summary.mechanics.d_w.max()) if summary.mesh.num_elements \
        else 0.0
    print(f"completed {summary.config['time']['steps']} steps, "
          f"max damage {d_max:.4f}")
    for path in summary.outputs:
        print(f"wrote {path}")
    return 0


def _cmd_make_mesh(args) -> int:
    mesh = generate_lshape(args.outer, args.thickness, args.h)
    write_mesh(mesh, args.out)
    print(f"wrote {args.out}: {mesh.num_nodes} nodes, "
          f"{mesh.num_elements} elements")
    return 0


def _cmd_material_curves(args) -> int:
    cfg = load_config(args.config)
    params = constitutive.TransportParams(**cfg["material"])
    ice_cfg = cfg["ice"]
    model = IceModel(_load_psd(ice_cfg),
                     IceParams(gamma_li=ice_cfg["gamma_li"],
                               delta_s_m=ice_cfg["delta_s_m"],
                               n=ice_cfg["n"], p_l=ice_cfg["p_l"]))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    phi = np.linspace(0.0, 1.0, 201)
    w = constitutive.water_content(phi, params)
    rows = ["phi,w_kg_m3,dw_dphi_kg_m3,D_phi_m2_s,lambda_W_mK"]
    d_phi = constitutive.moisture_diffusivity(phi, params)
    lam = constitutive.thermal_conductivity(w, params)
    cap = constitutive.moisture_capacity(phi, params)
    for i in range(len(phi)):
        vals = (phi[i], w[i], cap[i], d_phi[i], lam[i])
        rows.append(",".join(repr(float(v)) for v in vals))
    (out / "moisture.csv").write_text("\n".join(rows) + "\n",
                                      encoding="utf-8")

    theta = np.linspace(-30.0, 40.0, 201)
    p_sat = constitutive.saturation_pressure(theta)
    dp = constitutive.saturation_pressure_derivative(theta)
    dv = constitutive.vapor_permeability(theta, params)
    hv = constitutive.latent_heat_vapor(theta)
    rows = ["theta_C,p_sat_Pa,dp_sat_dtheta_Pa_K,delta_v_kg_m_s_Pa,h_v_J_kg"]
    for i in range(len(theta)):
        vals = (theta[i], p_sat[i], dp[i], dv[i], hv[i])
        rows.append(",".join(repr(float(v)) for v in vals))
    (out / "thermal.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")

    theta_f = np.linspace(-30.0, -0.1, 200)
    r_cr = ice.critical_radius(theta_f, model.params)
    p_p = model.pore_pressure(theta_f)
    w_i, _ = model.ice_content(theta_f, np.ones_like(theta_f), params)
    rows = ["theta_C,r_cr_m,p_p_Pa,w_i_sat_kg_m3"]
    for i in range(len(theta_f)):
        vals = (theta_f[i], r_cr[i], p_p[i], w_i[i])
        rows.append(",".join(repr(float(v)) for v in vals))
    (out / "ice.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")

    for name in ("moisture.csv", "thermal.csv", "ice.csv"):
        print(f"wrote {out / name}")
    return 0


def _cmd_check_config(args) -> int:
    cfg = load_config(args.config)
    params = constitutive.TransportParams(**cfg["material"])
    mech = cfg["mechanics"]
    MechParams(E=mech["E"], nu=mech["nu"], f_t=mech["f_t"],
               eps_f=mech["eps_f"], l_intl=mech["l_intl"],
               alpha=mech["alpha"], n=cfg["ice"]["n"],
               residual_stiffness=mech["residual_stiffness"],
               body_force=tuple(mech["body_force"]))
    IceModel(_load_psd(cfg["ice"]),
             IceParams(gamma_li=cfg["ice"]["gamma_li"],
                       delta_s_m=cfg["ice"]["delta_s_m"],
                       n=cfg["ice"]["n"], p_l=cfg["ice"]["p_l"]))
    print("config ok")
    print(f"b_phi  = {params.b_phi:.10g}")
    print(f"eps_0  = {mech['f_t'] / mech['E']:.10g}")
    print(f"b      = {biot_coefficient(cfg['ice']['n']):.10g}")
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handler = {
        "run": _cmd_run,
        "make-mesh": _cmd_make_mesh,
        "material-curves": _cmd_material_curves,
        "check-config": _cmd_check_config,
    }[args.command]
    try:
        return handler(args)
    except _CONFIG_ERRORS as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except _SOLVER_ERRORS as err:
        print(f"solver failure: {err}", file=sys.stderr)
        return 3
    except OSError as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return 4
    except FrostsimError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
