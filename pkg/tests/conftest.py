import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mmshape.config import default_mesh_path  # noqa: E402
from mmshape.fem import Discretization  # noqa: E402
from mmshape.mesh import load_gmsh  # noqa: E402


@pytest.fixture(scope="session")
def coarse_mesh():
    return load_gmsh(default_mesh_path())


@pytest.fixture(scope="session")
def coarse_disc(coarse_mesh):
    return Discretization(coarse_mesh)
