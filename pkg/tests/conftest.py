import numpy as np
import pytest

from frostsim.constitutive import TransportParams
from frostsim.ice import IceModel, IceParams, PoreSizeDistribution
from frostsim.mesh import Mesh, generate_lshape


@pytest.fixture(scope="session")
def unit_triangle() -> Mesh:
    # right triangle (0,0)-(1,0)-(0,1), all edges tagged EXT
    return Mesh(
        nodes=[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        elements=[[0, 1, 2]],
        boundary_edges=[[0, 0, 0], [0, 1, 0], [0, 2, 0]],
    )


@pytest.fixture(scope="session")
def lshape_coarse() -> Mesh:
    return generate_lshape(1.0, 0.4, 0.1)


@pytest.fixture(scope="session")
def mortar() -> TransportParams:
    return TransportParams()


@pytest.fixture(scope="session")
def ice_params() -> IceParams:
    return IceParams()


@pytest.fixture(scope="session")
def three_knot_psd() -> PoreSizeDistribution:
    # hand-checkable distribution: porosity 0.35 spread over two decades
    return PoreSizeDistribution(
        radii=np.array([1e-8, 1e-7, 1e-6]),
        cum_porosity=np.array([0.35, 0.1, 0.0]),
    )


@pytest.fixture(scope="session")
def spec01_model(ice_params) -> IceModel:
    from frostsim.driver import _load_psd
    return IceModel(_load_psd({"psd_file": "spec01"}), ice_params)
