"""Physical model of coupled local phonon modes in a linear ion chain.

Each ion contributes one radial local mode, a harmonic oscillator at the
secular frequency.  The Coulomb interaction between ions at distance d
exchanges vibrational quanta between modes at the hopping rate

    kappa = e^2 / (4 pi eps0 d^3 m omega0)

which falls off with the cube of the distance.  This module builds those
rates, the truncated multimode Fock space, and the operators consumed by
the propagator: ladder operators, the hopping Hamiltonian (with or without
the number-conserving approximation) and the quadratic trap-modulation
drive.  Hamiltonians are returned in energy units (J) as sparse CSR
matrices; Hermiticity is exact by construction, not up to roundoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
import scipy.sparse as sp

# CODATA 2018
ELEMENTARY_CHARGE = 1.602176634e-19     # C
VACUUM_PERMITTIVITY = 8.8541878128e-12  # F/m
ATOMIC_MASS_UNIT = 1.66053906660e-27    # kg
HBAR = 1.054571817e-34                  # J s

#: Matrices act on a :class:`FockSpace`; sparse and dense are both accepted.
OperatorMatrix = Union[np.ndarray, sp.spmatrix]


@dataclass(frozen=True)
class PhysicalConstants:
    """Fundamental constants entering the rate formulas."""

    elementary_charge: float = ELEMENTARY_CHARGE
    vacuum_permittivity: float = VACUUM_PERMITTIVITY
    atomic_mass_unit: float = ATOMIC_MASS_UNIT
    hbar: float = HBAR

    def __post_init__(self) -> None:
        for name in ("elementary_charge", "vacuum_permittivity",
                     "atomic_mass_unit", "hbar"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


CONSTANTS = PhysicalConstants()

DEFAULT_ION_MASS = 40.0 * ATOMIC_MASS_UNIT          # 40Ca+
DEFAULT_SECULAR_FREQUENCY = 2.0 * math.pi * 2.2e6   # rad/s


@dataclass(frozen=True)
class IonChainConfig:
    """Geometry and single-ion parameters of the chain.

    ``positions`` are equilibrium coordinates along the trap axis in meters,
    strictly increasing.  ``truncation_distance`` limits which mode pairs
    are considered coupled: pairs with index distance ``|j - k|`` above it
    get a zero hopping rate (``None`` keeps every pair).
    """

    mode_count: int
    positions: tuple[float, ...]
    ion_mass: float = DEFAULT_ION_MASS
    secular_frequency: float = DEFAULT_SECULAR_FREQUENCY
    truncation_distance: int | None = None

    def __post_init__(self) -> None:
        if self.mode_count < 1:
            raise ValueError("mode_count must be >= 1")
        if len(self.positions) != self.mode_count:
            raise ValueError("positions length must equal mode_count")
        if any(b - a <= 0 for a, b in zip(self.positions, self.positions[1:])):
            raise ValueError("positions must be strictly increasing")
        if self.ion_mass <= 0 or self.secular_frequency <= 0:
            raise ValueError("ion_mass and secular_frequency must be positive")
        if self.truncation_distance is not None and self.truncation_distance < 1:
            raise ValueError("truncation_distance must be >= 1 or None")

    @classmethod
    def equidistant(cls, mode_count: int, spacing: float,
                    ion_mass: float = DEFAULT_ION_MASS,
                    secular_frequency: float = DEFAULT_SECULAR_FREQUENCY,
                    truncation_distance: int | None = None) -> "IonChainConfig":
        """Chain with uniform spacing, the layout used by every built-in scenario."""
        if spacing <= 0:
            raise ValueError("spacing must be positive")
        return cls(mode_count=mode_count,
                   positions=tuple(j * spacing for j in range(mode_count)),
                   ion_mass=ion_mass,
                   secular_frequency=secular_frequency,
                   truncation_distance=truncation_distance)

    def distance(self, j: int, k: int) -> float:
        return abs(self.positions[j] - self.positions[k])


def coupling_rate(spacing: float, ion_mass: float, secular_frequency: float,
                  constants: PhysicalConstants = CONSTANTS) -> float:
    """Phonon hopping rate (rad/s) between two modes a distance ``spacing`` apart."""
    if spacing <= 0 or ion_mass <= 0 or secular_frequency <= 0:
        raise ValueError("coupling_rate arguments must be positive")
    e = constants.elementary_charge
    return e * e / (4.0 * math.pi * constants.vacuum_permittivity
                    * spacing ** 3 * ion_mass * secular_frequency)


@dataclass(frozen=True)
class CouplingMatrix:
    """Symmetric matrix of pairwise hopping rates (rad/s), zero diagonal."""

    kappa: np.ndarray

    def __post_init__(self) -> None:
        k = np.asarray(self.kappa, dtype=float)
        if k.ndim != 2 or k.shape[0] != k.shape[1]:
            raise ValueError("kappa must be square")
        if not np.array_equal(k, k.T) or np.any(np.diag(k) != 0.0):
            raise ValueError("kappa must be symmetric with zero diagonal")
        object.__setattr__(self, "kappa", k)

    @property
    def mode_count(self) -> int:
        return self.kappa.shape[0]

    def rate(self, j: int, k: int) -> float:
        return float(self.kappa[j, k])


def build_coupling_matrix(config: IonChainConfig,
                          constants: PhysicalConstants = CONSTANTS) -> CouplingMatrix:
    """Hopping rates for every mode pair, honoring the truncation distance."""
    m = config.mode_count
    kappa = np.zeros((m, m))
    eta = config.truncation_distance
    for j in range(m):
        for k in range(j):
            if eta is not None and j - k > eta:
                continue
            rate = coupling_rate(config.distance(j, k), config.ion_mass,
                                 config.secular_frequency, constants)
            kappa[j, k] = kappa[k, j] = rate
    return CouplingMatrix(kappa)


def compute_bare_frequencies(config: IonChainConfig,
                             constants: PhysicalConstants = CONSTANTS) -> np.ndarray:
    """Per-mode oscillation frequencies before the common-frequency compensation.

    Mode j sits in the static Coulomb curvature of all other ions, so its
    bare frequency is sqrt(omega0^2 + sum_k e^2 / (4 pi eps0 d_jk^3 m)).
    Interior ions of an equidistant chain come out highest.  The simulator
    itself works at the common compensated frequency; this is a diagnostic
    and a waveform-design input.
    """
    e = constants.elementary_charge
    pref = e * e / (4.0 * math.pi * constants.vacuum_permittivity * config.ion_mass)
    out = np.empty(config.mode_count)
    for j in range(config.mode_count):
        shift = sum(pref / config.distance(j, k) ** 3
                    for k in range(config.mode_count) if k != j)
        out[j] = math.sqrt(config.secular_frequency ** 2 + shift)
    return out


@dataclass(frozen=True)
class FockSpace:
    """Truncated occupation-number basis for ``mode_count`` modes.

    Basis states are labeled by occupation tuples written high mode first,
    (n_{M-1}, ..., n_1, n_0), matching the ket notation used in outputs.
    The dense index is sum_j n_j (n_max + 1)^j, i.e. mode 0 is the least
    significant digit.  ``index`` and ``occupations`` are exact inverses on
    the full range.
    """

    mode_count: int
    per_mode_cutoff: int

    def __post_init__(self) -> None:
        if self.mode_count < 1:
            raise ValueError("mode_count must be >= 1")
        if self.per_mode_cutoff < 1:
            raise ValueError("per_mode_cutoff must be >= 1")

    @property
    def dimension(self) -> int:
        return (self.per_mode_cutoff + 1) ** self.mode_count

    def index(self, occupations: Sequence[int]) -> int:
        """Dense index of the basis state with the given (n_{M-1},...,n_0)."""
        if len(occupations) != self.mode_count:
            raise ValueError("occupation tuple has wrong length")
        base = self.per_mode_cutoff + 1
        idx = 0
        for j, n in enumerate(reversed(occupations)):
            if not 0 <= n <= self.per_mode_cutoff:
                raise ValueError(f"occupation {n} outside [0, {self.per_mode_cutoff}]")
            idx += n * base ** j
        return idx

    def occupations(self, index: int) -> tuple[int, ...]:
        """Occupation tuple (n_{M-1},...,n_0) of a dense index."""
        if not 0 <= index < self.dimension:
            raise IndexError("basis index out of range")
        base = self.per_mode_cutoff + 1
        out = []
        for _ in range(self.mode_count):
            out.append(index % base)
            index //= base
        return tuple(reversed(out))

    def label(self, index: int) -> str:
        """Compact text label, digits high mode first ('210' for n2=2,n1=1,n0=0)."""
        occ = self.occupations(index)
        if self.per_mode_cutoff <= 9:
            return "".join(str(n) for n in occ)
        return "-".join(str(n) for n in occ)

    def labels(self) -> list[str]:
        return [self.label(i) for i in range(self.dimension)]

    def mode_occupations(self, mode: int) -> np.ndarray:
        """Occupation of one mode for every basis index, as an int array."""
        if not 0 <= mode < self.mode_count:
            raise ValueError("mode out of range")
        base = self.per_mode_cutoff + 1
        idx = np.arange(self.dimension)
        return (idx // base ** mode) % base

    def boundary_mask(self) -> np.ndarray:
        """True where any mode sits at the cutoff; population here means truncation error."""
        mask = np.zeros(self.dimension, dtype=bool)
        for j in range(self.mode_count):
            mask |= self.mode_occupations(j) == self.per_mode_cutoff
        return mask


@dataclass
class PhononState:
    """Complex amplitude vector over a :class:`FockSpace` basis."""

    space: FockSpace
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        amp = np.asarray(self.amplitudes, dtype=complex)
        if amp.shape != (self.space.dimension,):
            raise ValueError("amplitude vector has wrong length")
        self.amplitudes = amp

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


def basis_state(space: FockSpace, occupations: Sequence[int]) -> PhononState:
    """Unit-amplitude Fock state |n_{M-1},...,n_0>."""
    amp = np.zeros(space.dimension, dtype=complex)
    amp[space.index(occupations)] = 1.0
    return PhononState(space, amp)


def ladder_operator(space: FockSpace, mode: int, kind: str = "lower") -> sp.csr_matrix:
    """Annihilation (or creation) operator on one mode, identity elsewhere.

    Amplitudes that would leave the cutoff are dropped, so raising from the
    topmost level gives the zero vector.
    """
    if not 0 <= mode < space.mode_count:
        raise ValueError("mode out of range")
    if kind not in ("lower", "raise"):
        raise ValueError("kind must be 'lower' or 'raise'")
    n = space.per_mode_cutoff
    single = sp.diags(np.sqrt(np.arange(1.0, n + 1)), 1, format="csr")
    eye = sp.identity(n + 1, format="csr")
    # mode 0 is the least significant kron factor
    op = single if mode == space.mode_count - 1 else eye
    for j in range(space.mode_count - 2, -1, -1):
        op = sp.kron(op, single if j == mode else eye, format="csr")
    if kind == "raise":
        op = op.conj().T.tocsr()
    return op.astype(complex)


def hopping_hamiltonian(space: FockSpace, couplings: CouplingMatrix,
                        form: str = "rwa",
                        constants: PhysicalConstants = CONSTANTS) -> sp.csr_matrix:
    """Coulomb-mediated hopping between modes, in energy units (J).

    ``rwa`` keeps only the number-conserving exchange terms
    (hbar kappa_jk / 2)(a_j^dag a_k + a_j a_k^dag); ``full`` keeps the
    complete position-position product (hbar kappa_jk / 2)(a_j^dag + a_j)
    (a_k^dag + a_k), which also creates and destroys pairs.
    """
    if form not in ("rwa", "full"):
        raise ValueError("form must be 'rwa' or 'full'")
    if couplings.mode_count != space.mode_count:
        raise ValueError("couplings and space disagree on mode count")
    dim = space.dimension
    h = sp.csr_matrix((dim, dim), dtype=complex)
    lowering = [ladder_operator(space, j, "lower") for j in range(space.mode_count)]
    for j in range(space.mode_count):
        for k in range(j):
            rate = couplings.rate(j, k)
            if rate == 0.0:
                continue
            aj, ak = lowering[j], lowering[k]
            if form == "rwa":
                cross = aj.conj().T @ ak
                term = cross + cross.conj().T
            else:
                term = (aj.conj().T + aj) @ (ak.conj().T + ak)
            h = h + (0.5 * constants.hbar * rate) * term
    return h.tocsr()


def modulation_hamiltonian(space: FockSpace, mode: int, omega_sq_excess: float,
                           secular_frequency: float,
                           constants: PhysicalConstants = CONSTANTS) -> sp.csr_matrix:
    """Quadratic trap-modulation drive on one mode, in energy units (J).

    For a frequency excursion Omega^2 = omega(t)^2 - omega0^2 the drive is
    (hbar Omega^2 / 4 omega0) (a^dag + a)^2.
    """
    if secular_frequency <= 0:
        raise ValueError("secular_frequency must be positive")
    a = ladder_operator(space, mode, "lower")
    x = a.conj().T + a
    pref = constants.hbar * omega_sq_excess / (4.0 * secular_frequency)
    return (pref * (x @ x)).tocsr()
