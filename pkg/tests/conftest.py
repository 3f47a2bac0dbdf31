import pytest

from latticetrap.geometry import build_hex_lattice_layout, paper_lattice_spec


@pytest.fixture(scope="session")
def paper_layout():
    return build_hex_lattice_layout(paper_lattice_spec())
