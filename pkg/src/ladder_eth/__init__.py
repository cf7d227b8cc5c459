"""ETH, equilibration and level statistics of asymmetric XXZ spin ladders."""

__version__ = "0.1.0"

from .model import (LadderParams, SectorBasis, SparseOperator, build_hamiltonian,  # noqa: E402
                    build_observable_D, build_sector_basis, default_two_sz)
from .spectral import EthStats, Spectrum, diagonal_elements, diagonalize, eth_stats_exact  # noqa: E402

__all__ = [
    "__version__",
    "LadderParams", "SectorBasis", "SparseOperator", "build_hamiltonian", "build_observable_D",
    "build_sector_basis", "default_two_sz",
    "EthStats", "Spectrum", "diagonal_elements", "diagonalize", "eth_stats_exact",
]
