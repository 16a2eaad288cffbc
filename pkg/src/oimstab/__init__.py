"""Training oscillator Ising machine couplings so that chosen binary patterns
are the only stable equilibria."""

__version__ = "0.1.0"

from oimstab.model import (  # noqa: E402
    CouplingMatrix,
    MachineParams,
    build_a,
    build_d,
    canonicalize,
    hamiltonian,
    oim_energy,
    phases_to_spins,
    spins_to_phases,
)
from oimstab.sampler import GibbsConfig  # noqa: E402
from oimstab.trainer import TrainConfig, train  # noqa: E402
