"""Exact two-qubit dynamics and synthetic tomography data.

Units: hbar = 1, couplings are angular frequencies.  The default final time
is ``T = 1`` so the sampling half-width is ``omega_0 = 2 pi / T = 2 pi``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .pauli import BASIS, N_OBS, Preset, generator, pauli_string

DEFAULT_T = 1.0
#: couplings with |J| below this fraction of omega_0 are redrawn by the sweeps
MIN_ABS_FRACTION = 0.05


def omega0(T: float = DEFAULT_T) -> float:
    if not T > 0:
        raise ValueError(f"final time must be positive, got {T}")
    return 2.0 * np.pi / T


def validate_couplings(J, preset=None) -> np.ndarray:
    """Return ``J`` as a float 4x4 array, checking the coupling invariants."""
    J = np.array(J, dtype=float)
    if J.shape != (4, 4):
        raise ValueError(f"coupling matrix must be 4x4, got shape {J.shape}")
    if not np.all(np.isfinite(J)):
        raise ValueError("coupling matrix has non-finite entries")
    if J[0, 0] != 0.0:
        raise ValueError("J[0,0] must be zero")
    if preset is not None:
        preset = Preset.parse(preset)
        stray = (J != 0) & ~preset.mask()
        if stray.any():
            k, l = map(int, np.argwhere(stray)[0])
            raise ValueError(
                f"J[{k},{l}]={J[k, l]} is nonzero but inactive for preset {preset.name}"
            )
    return J


def hamiltonian_matrix(J) -> np.ndarray:
    """``H = -1/2 sum_{k,l} J_{k,l} sigma_k (x) sigma_l``."""
    J = validate_couplings(J)
    H = np.zeros((4, 4), dtype=complex)
    for k in range(4):
        for l in range(4):
            if J[k, l] != 0.0:
                H += J[k, l] * pauli_string((k, l))
    return -0.5 * H


def _check_density(rho, atol=1e-10) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise ValueError(f"density matrix must be 4x4, got {rho.shape}")
    if not np.allclose(rho, rho.conj().T, atol=atol, rtol=0):
        raise ValueError("density matrix is not Hermitian")
    return rho


def expectation(rho, idx) -> float:
    """``Tr[rho sigma_k (x) sigma_l]`` for a Hermitian ``rho``."""
    rho = _check_density(rho)
    value = np.trace(rho @ pauli_string(idx))
    if abs(value.imag) > 1e-12:
        raise ValueError(f"expectation has imaginary part {value.imag:.3e}")
    return float(value.real)


def observable_vector(rho) -> np.ndarray:
    """All 15 expectation values in basis order."""
    rho = _check_density(rho)
    return np.array([expectation(rho, p) for p in BASIS])


def density_from_vector(v) -> np.ndarray:
    """Inverse of :func:`observable_vector`: ``rho = (I + sum v_m P_m) / 4``."""
    v = np.asarray(v, dtype=float)
    rho = np.eye(4, dtype=complex)
    for value, p in zip(v, BASIS):
        rho = rho + value * pauli_string(p)
    return rho / 4.0


def pure_state(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).reshape(4)
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def default_initial_state() -> np.ndarray:
    """Product state ``|+> (x) (|0> + e^{i pi/4}|1>)/sqrt 2``."""
    a = np.array([1.0, 1.0]) / np.sqrt(2.0)
    b = np.array([1.0, np.exp(1j * np.pi / 4)]) / np.sqrt(2.0)
    return pure_state(np.kron(a, b))


def random_pure_state(rng) -> np.ndarray:
    psi = rng.normal(size=4) + 1j * rng.normal(size=4)
    return pure_state(psi)


def _check_times(times) -> np.ndarray:
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if times.ndim != 1:
        raise ValueError("times must be one-dimensional")
    if not np.all(np.isfinite(times)):
        raise ValueError("times must be finite")
    return times


def propagator(J, t: float) -> np.ndarray:
    """``exp(A(J) t)`` for the 15x15 observable generator.

    ``A`` is real antisymmetric, so ``iA`` is Hermitian and the exponential
    is taken through its eigendecomposition.
    """
    return evolve_propagators(J, [t])[0]


def evolve_propagators(J, times) -> np.ndarray:
    A = generator(validate_couplings(J))
    times = _check_times(times)
    lam, V = np.linalg.eigh(1j * A)
    phases = np.exp(-1j * np.outer(times, lam))
    U = np.einsum("ij,tj,kj->tik", V, phases, V.conj())
    return U.real


def evolve_exact(J, v0, times) -> np.ndarray:
    """Observable trajectory ``v(t) = exp(A(J) t) v0``, shape (len(times), 15)."""
    v0 = np.asarray(v0, dtype=float)
    if v0.shape != (N_OBS,):
        raise ValueError(f"initial vector must have length {N_OBS}")
    return evolve_propagators(J, times) @ v0


def evolve_density(J, rho0, times) -> np.ndarray:
    """Schrodinger-picture evolution ``U rho0 U^dagger``, ``U = exp(-iHt)``."""
    rho0 = _check_density(rho0)
    E, W = np.linalg.eigh(hamiltonian_matrix(J))
    out = []
    for t in _check_times(times):
        U = (W * np.exp(-1j * E * t)) @ W.conj().T
        out.append(U @ rho0 @ U.conj().T)
    return np.array(out)


def sample_couplings(seed, T: float = DEFAULT_T, preset=Preset.GENERAL,
                     min_abs_fraction: float = 0.0) -> np.ndarray:
    """Draw active couplings uniformly from ``[-omega_0, omega_0]``.

    Entries with ``|J| < min_abs_fraction * omega_0`` are redrawn, which keeps
    the relative-error metric finite.
    """
    preset = Preset.parse(preset)
    w0 = omega0(T)
    if not 0.0 <= min_abs_fraction < 1.0:
        raise ValueError("min_abs_fraction must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    J = np.zeros((4, 4))
    for p in preset.active:
        x = rng.uniform(-w0, w0)
        while abs(x) < min_abs_fraction * w0:
            x = rng.uniform(-w0, w0)
        J[p.k, p.l] = x
    return J


def perturb_couplings(J0, sigma: float, seed, T: float = DEFAULT_T, preset=None) -> np.ndarray:
    """``J0 + E`` with ``E ~ Normal(0, (sigma * omega_0)^2)`` on active entries.

    Without a preset, the active entries are the nonzero entries of ``J0``.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    J0 = validate_couplings(J0, preset)
    mask = Preset.parse(preset).mask() if preset is not None else (J0 != 0)
    mask[0, 0] = False
    if sigma == 0:
        return J0.copy()
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma * omega0(T), size=(4, 4))
    return J0 + np.where(mask, noise, 0.0)


@dataclass
class TrajectoryDataset:
    """Observable time series at the collocation times."""

    times: np.ndarray
    values: np.ndarray
    source: str = "synthetic"
    t_final: Optional[float] = None
    sigma: Optional[float] = None
    true_couplings: Optional[np.ndarray] = None
    preset: Optional[Preset] = None
    seed: Optional[int] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.ndim != 1 or len(self.times) < 2:
            raise ValueError("a dataset needs at least 2 collocation times")
        if not np.all(np.diff(self.times) > 0):
            raise ValueError("collocation times must be strictly increasing")
        if self.values.shape != (len(self.times), N_OBS):
            raise ValueError(f"values must have shape ({len(self.times)}, {N_OBS}), "
                             f"got {self.values.shape}")
        if self.t_final is None:
            self.t_final = float(self.times[-1])
        if self.preset is not None:
            self.preset = Preset.parse(self.preset)
        if self.true_couplings is not None:
            self.true_couplings = validate_couplings(self.true_couplings, self.preset)

    def __len__(self):
        return len(self.times)


def collocation_times(N: int, T: float = DEFAULT_T) -> np.ndarray:
    if N < 2:
        raise ValueError(f"need N >= 2 collocation points, got {N}")
    return np.linspace(0.0, T, N)


def generate_dataset(J, rho0=None, N: int = 5, T: float = DEFAULT_T, *,
                     true_couplings=None, sigma: Optional[float] = None,
                     preset=None, seed=None) -> TrajectoryDataset:
    """Exact observables at ``N`` uniform times on ``[0, T]``.

    ``true_couplings`` defaults to ``J``; the noise protocol passes the
    unperturbed couplings here while simulating with the perturbed ones.
    """
    times = collocation_times(N, T)
    J = validate_couplings(J)
    rho0 = default_initial_state() if rho0 is None else rho0
    v0 = observable_vector(rho0)
    values = evolve_exact(J, v0, times)
    truth = J if true_couplings is None else true_couplings
    return TrajectoryDataset(times, values, source="synthetic", t_final=T,
                             sigma=sigma, true_couplings=truth, preset=preset, seed=seed)
