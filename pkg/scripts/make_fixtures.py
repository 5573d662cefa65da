"""Regenerate the data files bundled with the package.

Writes the two pore size distributions and the synthetic winter climate
into src/frostsim/data/. The distributions are lognormal in pore radius,
normalized so the cumulative curve hits the total porosity exactly at
the smallest tabulated radius and zero at the largest:

    spec01: median 3e-7 m, sigma(ln r) = 1.0, porosity 0.35
    spec02: median 3e-8 m, sigma(ln r) = 1.2, porosity 0.13

spec02 is the finer, less porous variant used by the sensitivity
comparison. Run from the repository root:

    python scripts/make_fixtures.py
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
from scipy.stats import norm

ROOT = Path(__file__).resolve().parent.parent
DATA = ROOT / "src" / "frostsim" / "data"
sys.path.insert(0, str(ROOT / "src"))

from frostsim.climate_io import synthetic_winter_series, write_climate_csv


def lognormal_psd(median_m: float, sigma: float, porosity: float,
                  r_min: float = 1e-9, r_max: float = 1e-4,
                  points: int = 61) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative pore volume psi(r) of a lognormal size density.

    psi(r) is the volume fraction of pores with radius above r, so it
    decreases from the total porosity to zero across the tabulated range.
    """
    radii = np.geomspace(r_min, r_max, points)
    survival = norm.sf(np.log(radii / median_m) / sigma)
    psi = porosity * (survival - survival[-1]) / (survival[0] - survival[-1])
    return radii, psi


def write_psd(path: Path, radii: np.ndarray, psi: np.ndarray) -> None:
    lines = ["radius_m,cum_porosity"]
    lines.extend(f"{float(r)!r},{float(p)!r}"
                 for r, p in zip(radii, psi))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {path}")


def main() -> None:
    DATA.mkdir(parents=True, exist_ok=True)
    for name, median, sigma, porosity in (
            ("psd_spec01.csv", 3e-7, 1.0, 0.35),
            ("psd_spec02.csv", 3e-8, 1.2, 0.13)):
        radii, psi = lognormal_psd(median, sigma, porosity)
        write_psd(DATA / name, radii, psi)
    series = synthetic_winter_series(744)
    write_climate_csv(series, DATA / "climate_winter_744h.csv")
    print(f"wrote {DATA / 'climate_winter_744h.csv'}")


if __name__ == "__main__":
    main()
