"""Unperturbed Hamiltonians, Wigner perturbations, localized states and observables.

Two reference models are provided:

* ``nnn``: a particle on the ring ``Z/NZ`` with next-nearest-neighbor hopping,
  ``(H0 psi)(x) = 2 psi(x) - psi(x-2) - psi(x+2)``.  It conserves sublattice
  parity.
* ``free-fermion``: spinless fermions on a ring of ``L`` sites with hopping
  ``L^-1/2 sum_j (c_j^+ c_{j+1} + h.c.)``, assembled on the full Fock space in
  the occupation basis.  It conserves particle number.

Matrices are plain dense numpy arrays.  Hamiltonians of the real models are
real symmetric; Wigner matrices of the complex class are complex.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .spectra import Eigensystem, check_hermitian

MAGIC = b"PTLB0001"
SYMMETRY_CLASSES = ("complex-hermitian", "real-symmetric")
ENTRY_LAWS = ("gaussian", "rademacher", "uniform")
MAX_FERMION_SITES = 12


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class WignerSpec:
    dim: int
    symmetry_class: str = "complex-hermitian"
    entry_law: str = "gaussian"
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("Wigner dimension must be positive")
        if self.symmetry_class not in SYMMETRY_CLASSES:
            raise ValueError(f"unknown symmetry class {self.symmetry_class!r}")
        if self.entry_law not in ENTRY_LAWS:
            raise ValueError(f"unknown entry law {self.entry_law!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    def with_seed(self, seed: int) -> "WignerSpec":
        return WignerSpec(self.dim, self.symmetry_class, self.entry_law, int(seed))


@dataclass(frozen=True)
class EnergyWindow:
    """Energy window ``I_Delta = [E0 - Delta, E0 + Delta]`` with admissibility data."""

    E0: float
    Delta: float
    kappa0: float
    c0: float = 0.1

    def __post_init__(self):
        if not self.Delta > 0:
            raise ValueError("window half-width Delta must be positive")
        if not self.Delta < self.kappa0 / 6:
            raise ValueError(f"need Delta < kappa0/6, got Delta={self.Delta}, kappa0={self.kappa0}")
        if not self.c0 > 0:
            raise ValueError("admissibility floor c0 must be positive")

    @property
    def bounds(self) -> tuple[float, float]:
        return self.E0 - self.Delta, self.E0 + self.Delta

    def contains(self, x, scale: float = 1.0):
        """Mask of energies in ``[E0 - scale*Delta, E0 + scale*Delta]``."""
        return np.abs(np.asarray(x, dtype=float) - self.E0) <= scale * self.Delta


@dataclass(frozen=True)
class QuantumState:
    """Density matrix ``P = sum_i w_i |v_i><v_i|`` localized in an energy window."""

    weights: np.ndarray
    vectors: np.ndarray
    window: EnergyWindow

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        v = np.asarray(self.vectors)
        if v.ndim != 2 or v.shape[1] != w.size or w.size == 0:
            raise ValueError("need one vector column per weight")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be a probability vector")
        if np.max(np.abs(v.conj().T @ v - np.eye(w.size))) > 1e-10:
            raise ValueError("state vectors must be orthonormal")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "vectors", v)

    @property
    def rank(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    def matrix(self) -> np.ndarray:
        return (self.vectors * self.weights) @ self.vectors.conj().T


@dataclass(frozen=True)
class Model:
    """Unperturbed Hamiltonian together with its conserved diagonal label."""

    kind: str
    H0: np.ndarray
    size: int
    sectors: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.H0.shape[0]


# ---------------------------------------------------------------------------
# Hamiltonians


def build_nnn_hamiltonian(N: int) -> np.ndarray:
    """Next-nearest-neighbor Laplacian on the ring ``Z/NZ``."""
    if N < 4 or N % 2:
        raise ValueError(f"NNN model needs even N >= 4, got {N}")
    H = 2.0 * np.eye(N)
    x = np.arange(N)
    np.add.at(H, (x, (x + 2) % N), -1.0)
    np.add.at(H, (x, (x - 2) % N), -1.0)
    return H


def nnn_spectrum(N: int) -> np.ndarray:
    """Closed-form sorted spectrum ``2(1 - cos(4 pi j / N))`` of the NNN model."""
    if N < 4 or N % 2:
        raise ValueError(f"NNN model needs even N >= 4, got {N}")
    return np.sort(2.0 * (1.0 - np.cos(4.0 * np.pi * np.arange(N) / N)))


def nnn_density(x):
    """Limiting density of states ``1 / (pi sqrt(x (4 - x)))`` on ``(0, 4)``."""
    x = np.asarray(x, dtype=float)
    inside = (x > 0) & (x < 4)
    out = np.zeros_like(x)
    out[inside] = 1.0 / (np.pi * np.sqrt(x[inside] * (4.0 - x[inside])))
    return out


def sublattice_parity(N: int) -> np.ndarray:
    return np.arange(N) % 2


def _popcount(states: np.ndarray) -> np.ndarray:
    counts = np.zeros_like(states)
    s = states.copy()
    while np.any(s):
        counts += s & 1
        s >>= 1
    return counts


def particle_number(L: int) -> np.ndarray:
    """Particle number of every occupation basis state (bit j = site j)."""
    return _popcount(np.arange(2**L, dtype=np.int64))


def build_free_fermion_hamiltonian(L: int) -> np.ndarray:
    """Periodic free-fermion hopping Hamiltonian on the ``2^L`` Fock space."""
    if L % 2 or not 4 <= L <= MAX_FERMION_SITES:
        raise ValueError(f"free fermions need even 4 <= L <= {MAX_FERMION_SITES}, got {L}")
    dim = 2**L
    states = np.arange(dim, dtype=np.int64)
    H = np.zeros((dim, dim))
    amp = L**-0.5
    for j in range(L):
        k = (j + 1) % L
        for dst, src in ((j, k), (k, j)):
            # c_dst^+ c_src acting on occupation states
            mask = ((states >> src) & 1 == 1) & ((states >> dst) & 1 == 0)
            s = states[mask]
            sign = (-1) ** _popcount(s & ((1 << src) - 1))
            s1 = s ^ (1 << src)
            sign = sign * (-1) ** _popcount(s1 & ((1 << dst) - 1))
            H[s1 ^ (1 << dst), s] += amp * sign
    return H


def free_fermion_single_particle(L: int) -> np.ndarray:
    return 2.0 * L**-0.5 * np.cos(2.0 * np.pi * np.arange(1, L + 1) / L)


def nnn_model(N: int) -> Model:
    return Model("nnn", build_nnn_hamiltonian(N), N, sublattice_parity(N))


def free_fermion_model(L: int) -> Model:
    return Model("free-fermion", build_free_fermion_hamiltonian(L), L, particle_number(L))


def custom_model(path) -> Model:
    H = check_hermitian(load_matrix(path), name="custom Hamiltonian")
    return Model("custom", H, H.shape[0], None)


# ---------------------------------------------------------------------------
# Wigner matrices and seeds


def derive_seed(master_seed: int, index: int) -> int:
    """Per-realization 64-bit seed from a master seed and a realization counter.

    Uses ``SeedSequence(master_seed, spawn_key=(index,))`` so streams depend
    only on ``(master_seed, index)``, not on the order they are drawn.
    """
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def _unit_entries(rng: np.random.Generator, law: str, shape) -> np.ndarray:
    """Real i.i.d. entries with mean zero and unit variance."""
    if law == "gaussian":
        return rng.standard_normal(shape)
    if law == "rademacher":
        return 2.0 * rng.integers(0, 2, size=shape) - 1.0
    return rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), size=shape)


def sample_wigner(spec: WignerSpec) -> np.ndarray:
    """Draw a Wigner matrix with ``E|w_ij|^2 = 1/N``.

    Complex class: off-diagonal entries ``(x + i y) / sqrt(2N)`` with
    ``E w_ij^2 = 0``, real diagonal entries with variance ``1/N``.  Real class:
    all entries real with variance ``1/N``.
    """
    n = spec.dim
    rng = _generator(spec.seed)
    if spec.symmetry_class == "complex-hermitian":
        off = (_unit_entries(rng, spec.entry_law, (n, n)) + 1j * _unit_entries(rng, spec.entry_law, (n, n))) / np.sqrt(2.0)
    else:
        off = _unit_entries(rng, spec.entry_law, (n, n))
    diag = _unit_entries(rng, spec.entry_law, n)
    W = np.triu(off, 1)
    W = W + W.conj().T
    W[np.diag_indices(n)] = diag
    return W / np.sqrt(n)


def assemble_deformed(H0: np.ndarray, lam: float, W: np.ndarray) -> np.ndarray:
    if H0.shape != W.shape:
        raise ValueError(f"dimension mismatch: H0 {H0.shape} vs W {W.shape}")
    if lam == 0:
        return H0.copy()
    return H0 + lam * W


# ---------------------------------------------------------------------------
# projectors, states, observables


def _window_indices(eig: Eigensystem, window: EnergyWindow) -> np.ndarray:
    idx = np.flatnonzero(window.contains(eig.values))
    if idx.size == 0:
        lo, hi = window.bounds
        raise ValueError(f"energy window [{lo}, {hi}] contains no eigenvalues")
    return idx


def spectral_projector(eig: Eigensystem, window: EnergyWindow) -> np.ndarray:
    U = eig.require_vectors()
    V = U[:, _window_indices(eig, window)]
    return V @ V.conj().T


def _fix_phase(v: np.ndarray) -> np.ndarray:
    k = np.argmax(np.abs(v))
    return v * (abs(v[k]) / v[k])


def _sector_representative(eig: Eigensystem, index: int, sector_mask: np.ndarray) -> np.ndarray:
    """Normalized projection of the eigenspace of ``mu_index`` onto a sector."""
    U = eig.require_vectors()
    mu = eig.values
    block = np.flatnonzero(np.abs(mu - mu[index]) <= 1e-9 * max(1.0, abs(mu[index])))
    Q = U[:, block] * sector_mask[:, None]
    left, sing, _ = np.linalg.svd(Q, full_matrices=False)
    if sing[0] < 1e-8:
        raise ValueError(f"eigenspace of mu_{index} has no component in the requested sector")
    return _fix_phase(left[:, 0])


def build_localized_state(
    eig: Eigensystem,
    window: EnergyWindow,
    kind: str,
    *,
    index: int | None = None,
    width: float | None = None,
    sector: np.ndarray | None = None,
) -> QuantumState:
    """Density matrix supported on the range of ``1_{I_Delta}(H0)``.

    Parameters
    ----------
    kind : {"eigenprojector", "uniform-mixture", "gaussian-weighted"}
    index : int
        Eigenvalue index for ``eigenprojector``; must lie in the window.
    width : float
        Standard deviation of the Gaussian energy profile for
        ``gaussian-weighted``.
    sector : (N,) bool array, optional
        Basis-state mask of a conserved sector.  For ``eigenprojector`` the
        degenerate eigenspace is projected onto it and renormalized; for the
        mixtures only eigenvectors lying in the sector are used.
    """
    U = eig.require_vectors()
    idx = _window_indices(eig, window)
    mask = None if sector is None else np.asarray(sector, dtype=bool)

    if kind == "eigenprojector":
        if index is None:
            raise ValueError("eigenprojector state needs an eigenvalue index")
        if index not in set(idx.tolist()):
            raise ValueError(f"eigenvalue index {index} (mu={eig.values[index]:.6g}) is outside the window")
        v = U[:, index] if mask is None else _sector_representative(eig, index, mask)
        return QuantumState(np.array([1.0]), v[:, None].copy(), window)

    if mask is not None:
        in_sector = np.sum(np.abs(U[mask][:, idx]) ** 2, axis=0) > 1 - 1e-8
        idx = idx[in_sector]
        if idx.size == 0:
            raise ValueError("no in-window eigenvector lies in the requested sector")
    if kind == "uniform-mixture":
        w = np.full(idx.size, 1.0 / idx.size)
    elif kind == "gaussian-weighted":
        if width is None or not width > 0:
            raise ValueError("gaussian-weighted state needs a positive width")
        w = np.exp(-0.5 * ((eig.values[idx] - window.E0) / width) ** 2)
        w /= w.sum()
    else:
        raise ValueError(f"unknown state kind {kind!r}")
    return QuantumState(w, U[:, idx].copy(), window)


def localization_defect(eig: Eigensystem, state: QuantumState) -> float:
    """Frobenius norm of ``P - Pi P Pi`` for the window projector ``Pi``."""
    Pi = spectral_projector(eig, state.window)
    P = state.matrix()
    return float(np.linalg.norm(P - Pi @ P @ Pi))


def build_observable(
    model: Model,
    eig: Eigensystem | None,
    kind: str,
    *,
    f: Callable | None = None,
    seed: int | None = None,
    n: int | None = None,
) -> np.ndarray:
    """Bounded Hermitian observable.

    Kinds: ``odd-sublattice`` (NNN only), ``energy-function`` (``f(H0)``,
    needs eigenvectors), ``random-hermitian`` (a seeded complex Wigner matrix
    scaled by 1/2, so its norm is about 1), ``sector-complement`` (identity on
    Fock states whose particle number differs from ``n``; free fermions only).
    """
    N = model.dim
    if kind == "odd-sublattice":
        if model.kind != "nnn":
            raise ValueError("odd-sublattice observable needs the NNN lattice model")
        return np.diag((np.arange(N) % 2).astype(float))
    if kind == "energy-function":
        if f is None or eig is None:
            raise ValueError("energy-function observable needs f and an eigensystem of H0")
        U = eig.require_vectors()
        vals = np.asarray(f(eig.values), dtype=float) * np.ones(N)
        return (U * vals) @ U.conj().T
    if kind == "random-hermitian":
        if seed is None:
            raise ValueError("random-hermitian observable needs a seed")
        return 0.5 * sample_wigner(WignerSpec(N, "complex-hermitian", "gaussian", int(seed)))
    if kind == "sector-complement":
        if model.kind != "free-fermion" or n is None:
            raise ValueError("sector-complement observable needs the free-fermion model and a particle number")
        return np.diag((model.sectors != n).astype(float))
    raise ValueError(f"unknown observable kind {kind!r}")


# ---------------------------------------------------------------------------
# binary matrix files


def save_matrix(path, M) -> None:
    """Write ``M`` as column-major complex128 after the ``PTLB0001`` header."""
    M = np.asarray(M, dtype="<c16")
    if M.ndim != 2:
        raise ValueError("only 2D matrices can be saved")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<QQ", *M.shape))
        fh.write(M.tobytes(order="F"))


def load_matrix(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path}: bad magic header {raw[:8]!r}")
    rows, cols = struct.unpack("<QQ", raw[8:24])
    body = raw[24:]
    if len(body) != 16 * rows * cols:
        raise ValueError(f"{path}: payload has {len(body)} bytes, expected {16 * rows * cols}")
    M = np.frombuffer(body, dtype="<c16").reshape((rows, cols), order="F").copy()
    if not np.any(M.imag):
        M = M.real.copy()
    return M
