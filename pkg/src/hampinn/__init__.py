"""Two-qubit Hamiltonian tomography with an inverse physics-informed network."""

from .pauli import BASIS, LABELS, PauliIndex, Preset, commutator_expansion, generator
from .sim import TrajectoryDataset, evolve_exact, generate_dataset, sample_couplings
from .trainer import FitResult, TrainConfig, fit, mae

__version__ = "0.1.0"
