"""Exact Heisenberg evolution and Wigner-ensemble Monte Carlo.

Evolution uses one eigendecomposition per Hamiltonian followed by phase
resummation; there is no time stepping.  A rank-r state is evolved through
its r vectors, ``psi_i(t) = V e^{-iEt} V^+ v_i``.
"""
from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .models import WignerSpec, assemble_deformed, derive_seed, sample_wigner
from .spectra import Eigensystem, eigendecompose

IMAG_TOL = 1e-8


@dataclass(frozen=True)
class TimeGrid:
    times: np.ndarray
    lam: float

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or np.any(t < 0) or np.any(np.diff(t) <= 0):
            raise ValueError("times must be a strictly ascending nonnegative 1D array")
        object.__setattr__(self, "times", t)

    @property
    def kinetic(self) -> np.ndarray:
        """Kinetic times ``T = lam^2 t``."""
        return self.lam**2 * self.times

    @classmethod
    def from_kinetic(cls, T, lam: float, include_zero: bool = False) -> "TimeGrid":
        if not lam > 0:
            raise ValueError("kinetic grid needs lambda > 0")
        T = np.asarray(T, dtype=float)
        if include_zero:
            T = np.concatenate([[0.0], T])
        return cls(T / lam**2, lam)

    @classmethod
    def default(cls, lam: float, T_min: float = 0.01, T_max: float = 8.0, points: int = 80) -> "TimeGrid":
        """``t = 0`` plus ``points`` geometric kinetic times in ``[T_min, T_max]``."""
        return cls.from_kinetic(np.geomspace(T_min, T_max, points), lam, include_zero=True)


@dataclass(frozen=True)
class EvolutionSeries:
    grid: TimeGrid
    values: np.ndarray
    realization_seed: int | None = None


@dataclass(frozen=True)
class EnsembleResult:
    grid: TimeGrid
    mean: np.ndarray
    std: np.ndarray
    series: np.ndarray
    seeds: tuple

    @property
    def n(self) -> int:
        return self.series.shape[0]

    def to_csv(self, path) -> None:
        write_series_csv(path, self.grid, self.mean, self.std, self.n)


def write_series_csv(path, grid: TimeGrid, mean, std, n: int) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "T", "mean", "std", "n"])
        for t, T, m, s in zip(grid.times, grid.kinetic, mean, std):
            w.writerow([repr(float(t)), repr(float(T)), repr(float(m)), repr(float(s)), n])


def _is_diagonal(A: np.ndarray) -> bool:
    return A.ndim == 1 or np.count_nonzero(A - np.diag(np.diag(A))) == 0


def heisenberg_series(eig: Eigensystem, P, A, grid: TimeGrid) -> EvolutionSeries:
    """``Tr[e^{-itH} P e^{itH} A]`` on every grid time.

    Parameters
    ----------
    eig : Eigensystem
        Eigensystem of the generator ``H``.
    P : QuantumState
    A : (N, N) or (N,) array
        Observable; a 1D array is read as a diagonal.
    """
    V = eig.require_vectors()
    A = np.asarray(A)
    diag = np.diag(A) if A.ndim == 2 and _is_diagonal(A) else (A if A.ndim == 1 else None)
    coeff = V.conj().T @ P.vectors
    phases = np.exp(-1j * np.outer(eig.values, grid.times))
    total = np.zeros(grid.times.size, dtype=complex)
    for i, w in enumerate(P.weights):
        if w == 0:
            continue
        psi = V @ (phases * coeff[:, i:i + 1])
        Apsi = diag[:, None] * psi if diag is not None else A @ psi
        total += w * np.einsum("it,it->t", psi.conj(), Apsi)
    resid = np.max(np.abs(total.imag)) if total.size else 0.0
    if resid > IMAG_TOL:
        raise RuntimeError(f"expectation has imaginary residue {resid:.2e}; check Hermiticity of inputs")
    return EvolutionSeries(grid, total.real.copy())


def worker_count(default: int = 1) -> int:
    """Thread count from ``PTLB_THREADS`` (at least 1)."""
    raw = os.environ.get("PTLB_THREADS")
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"PTLB_THREADS must be an integer, got {raw!r}") from None


def realization_seeds(master_seed: int, n: int) -> list[int]:
    return [derive_seed(master_seed, i) for i in range(n)]


def perturbed_series(H0, P, A, lam: float, spec: WignerSpec, grid: TimeGrid, sectors=None) -> EvolutionSeries:
    """Evolution under one realization ``H0 + lam W`` with ``W`` drawn from ``spec``."""
    try:
        H = assemble_deformed(H0, lam, sample_wigner(spec)) if lam != 0 else H0
        eig = eigendecompose(H, sectors=sectors if lam == 0 else None)
    except RuntimeError as exc:
        raise RuntimeError(f"realization with seed {spec.seed} failed: {exc}") from exc
    series = heisenberg_series(eig, P, A, grid)
    return EvolutionSeries(grid, series.values, spec.seed)


def monte_carlo_perturbed(
    H0,
    P,
    A,
    lam: float,
    wigner: WignerSpec,
    n_realizations: int,
    grid: TimeGrid,
    workers: int | None = None,
) -> EnsembleResult:
    """Ensemble statistics of ``<A>_{P_lam(t)}`` over Wigner realizations.

    Realization ``i`` uses the seed ``derive_seed(wigner.seed, i)``, so the
    template's seed acts as the master seed.  Results are assembled by
    realization index, independent of completion order.
    """
    if n_realizations < 1:
        raise ValueError("need at least one realization")
    if wigner.dim != H0.shape[0]:
        raise ValueError("Wigner dimension does not match H0")
    seeds = realization_seeds(wigner.seed, n_realizations)
    workers = worker_count() if workers is None else max(1, workers)

    def run(seed):
        return perturbed_series(H0, P, A, lam, wigner.with_seed(seed), grid).values

    if workers == 1:
        rows = [run(s) for s in seeds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run, seeds))
    series = np.vstack(rows)
    return EnsembleResult(grid, series.mean(axis=0), series.std(axis=0), series, tuple(seeds))


def plateau_value(grid: TimeGrid, values, T_range: tuple[float, float]) -> float:
    """Median of ``values`` over grid points with kinetic time in ``T_range``."""
    T = grid.kinetic
    sel = (T >= T_range[0]) & (T <= T_range[1])
    if not np.any(sel):
        raise ValueError(f"no grid points with T in {T_range}")
    return float(np.median(np.asarray(values)[sel]))
