"""Two-qubit Pauli-string algebra.

Pauli strings ``P_(k,l) = sigma_k (x) sigma_l`` with ``sigma_0 = I``.  The
15 traceless strings form the observable basis, ordered lexicographically in
``(k, l)``::

    IX IY IZ XI XX XY XZ YI YX YY YZ ZI ZX ZY ZZ

All structure constants are computed once from explicit 4x4 matrix
commutators, so there is no hand-written multiplication table to get wrong.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from itertools import product

import numpy as np

LETTERS = "IXYZ"

_PAULI_2x2 = (
    np.array([[1, 0], [0, 1]], dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


@dataclass(frozen=True, order=True)
class PauliIndex:
    """Index pair ``(k, l)`` naming the string ``sigma_k (x) sigma_l``."""

    k: int
    l: int

    def __post_init__(self):
        for name, value in (("k", self.k), ("l", self.l)):
            if not isinstance(value, (int, np.integer)) or not 0 <= value <= 3:
                raise ValueError(f"Pauli index {name}={value!r} not in {{0,1,2,3}}")

    @property
    def label(self) -> str:
        return LETTERS[self.k] + LETTERS[self.l]

    @property
    def is_identity(self) -> bool:
        return self.k == 0 and self.l == 0

    @classmethod
    def from_label(cls, label: str) -> "PauliIndex":
        if len(label) != 2 or any(ch not in LETTERS for ch in label):
            raise ValueError(f"bad Pauli label {label!r}")
        return cls(LETTERS.index(label[0]), LETTERS.index(label[1]))


def _as_index(idx) -> PauliIndex:
    if isinstance(idx, PauliIndex):
        return idx
    if isinstance(idx, str):
        return PauliIndex.from_label(idx)
    k, l = idx
    return PauliIndex(int(k), int(l))


#: The 15 observables in canonical order.
BASIS: tuple[PauliIndex, ...] = tuple(
    PauliIndex(k, l) for k, l in product(range(4), repeat=2) if (k, l) != (0, 0)
)
LABELS: tuple[str, ...] = tuple(p.label for p in BASIS)
N_OBS = len(BASIS)


def basis_position(idx) -> int:
    """Row/column of ``idx`` in vectors and generator matrices."""
    idx = _as_index(idx)
    if idx.is_identity:
        raise ValueError("the identity string is not part of the observable basis")
    return 4 * idx.k + idx.l - 1


class Preset(str, enum.Enum):
    """Which couplings are free parameters."""

    HZ = "z"
    HXYZ = "xyz"
    GENERAL = "general"

    @classmethod
    def parse(cls, value) -> "Preset":
        if isinstance(value, Preset):
            return value
        key = str(value).strip().lower()
        aliases = {"hz": cls.HZ, "z": cls.HZ, "hxyz": cls.HXYZ, "xyz": cls.HXYZ,
                   "general": cls.GENERAL, "full": cls.GENERAL}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown preset {value!r}") from None

    @property
    def active(self) -> tuple[PauliIndex, ...]:
        """Couplings ``J_(k,l)`` that are nonzero for this preset."""
        if self is Preset.HZ:
            return (PauliIndex(0, 3), PauliIndex(3, 0), PauliIndex(3, 3))
        if self is Preset.HXYZ:
            return (PauliIndex(1, 1), PauliIndex(2, 2), PauliIndex(3, 3))
        return BASIS

    def mask(self) -> np.ndarray:
        m = np.zeros((4, 4), dtype=bool)
        for p in self.active:
            m[p.k, p.l] = True
        return m


def pauli_matrix(k: int) -> np.ndarray:
    """Single-qubit Pauli matrix; ``k=0`` is the identity."""
    if not isinstance(k, (int, np.integer)) or not 0 <= k <= 3:
        raise ValueError(f"Pauli index {k!r} not in {{0,1,2,3}}")
    return _PAULI_2x2[k].copy()


def pauli_string(idx) -> np.ndarray:
    """4x4 matrix of ``sigma_k (x) sigma_l``."""
    idx = _as_index(idx)
    return np.kron(_PAULI_2x2[idx.k], _PAULI_2x2[idx.l])


@lru_cache(maxsize=None)
def _strings() -> np.ndarray:
    out = np.stack([pauli_string(PauliIndex(k, l)) for k, l in product(range(4), repeat=2)])
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def structure_constants() -> np.ndarray:
    """Real tensor ``f[a, b, c]`` with ``i[P_a, P_b] = sum_c f[a,b,c] P_c``.

    Indices run over all 16 strings, flat index ``4*k + l``.  Uses
    ``Tr(P_c P_d) = 4 delta_cd``.
    """
    P = _strings()
    prod_ab = np.einsum("aij,bjk->abik", P, P)
    comm = 1j * (prod_ab - prod_ab.transpose(1, 0, 2, 3))
    coeff = np.einsum("abij,cji->abc", comm, P) / 4.0
    if np.max(np.abs(coeff.imag)) > 1e-12:
        raise RuntimeError("structure constants are not real")
    f = np.ascontiguousarray(coeff.real)
    f.setflags(write=False)
    return f


def commutator_expansion(a, b) -> list[tuple[PauliIndex, float]]:
    """Expand ``i[P_a, P_b]`` in Pauli strings.

    Returns ``(target, coefficient)`` pairs with real coefficients; the list
    is empty when the two strings commute.
    """
    a, b = _as_index(a), _as_index(b)
    row = structure_constants()[4 * a.k + a.l, 4 * b.k + b.l]
    return [
        (PauliIndex(c // 4, c % 4), float(row[c]))
        for c in range(16)
        if row[c] != 0.0
    ]


@lru_cache(maxsize=None)
def generator_basis() -> np.ndarray:
    """Stack ``G[p]`` (16, 15, 15) such that ``A(J) = sum_p J_p G[p]``.

    Flat coupling index ``p = 4*k + l``; ``G[0]`` (identity) is zero.
    """
    f = structure_constants()
    # dv_m/dt = i<[H, P_m]> with H = -1/2 sum_b J_b P_b
    G = -0.5 * f[:, 1:, 1:]
    G = np.ascontiguousarray(G)
    G.setflags(write=False)
    return G


def _check_couplings(J) -> np.ndarray:
    J = np.asarray(J, dtype=float)
    if J.shape != (4, 4):
        raise ValueError(f"coupling matrix must be 4x4, got {J.shape}")
    if J[0, 0] != 0.0:
        raise ValueError("J[0,0] must be zero (it only shifts the energy reference)")
    return J


def generator(J) -> np.ndarray:
    """Generator ``A(J)`` of the observable dynamics ``dv/dt = A v``.

    ``A`` is real, antisymmetric and linear in ``J``.
    """
    J = _check_couplings(J)
    return np.tensordot(J.reshape(16), generator_basis(), axes=1)


def _components(adjacency: np.ndarray) -> list[tuple[int, ...]]:
    n = adjacency.shape[0]
    seen = [False] * n
    groups = []
    for start in range(n):
        if seen[start]:
            continue
        stack, group = [start], []
        seen[start] = True
        while stack:
            i = stack.pop()
            group.append(i)
            for j in np.flatnonzero(adjacency[i]):
                if not seen[j]:
                    seen[j] = True
                    stack.append(j)
        groups.append(tuple(sorted(group)))
    return groups


def coupled_blocks(J) -> list[tuple[str, ...]]:
    """Groups of observables whose equations of motion are coupled under ``J``."""
    A = generator(J)
    adjacency = (A != 0) | (A.T != 0)
    return [tuple(LABELS[i] for i in g) for g in _components(adjacency)]


def decoupled_blocks(preset) -> list[tuple[str, ...]]:
    """Independent observable groups for a preset with generic active couplings.

    Blocks are sorted by size (largest first), then by label.
    """
    preset = Preset.parse(preset)
    J = np.zeros((4, 4))
    # distinct irrational values avoid accidental cancellations
    for n, p in enumerate(preset.active):
        J[p.k, p.l] = np.sqrt(2.0 + n)
    blocks = coupled_blocks(J)
    return sorted(blocks, key=lambda g: (-len(g), g))
