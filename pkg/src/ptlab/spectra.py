"""Dense Hermitian diagonalization, density-of-states estimates and overlaps.

All spectral quantities are expressed in the eigenbasis of the unperturbed
Hamiltonian ``H0 = sum_j mu_j |u_j><u_j|``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

HERMITIAN_ATOL = 1e-12


@dataclass(frozen=True)
class Eigensystem:
    """Ascending eigenvalues and (optionally) orthonormal eigenvector columns.

    ``vectors`` may be ``None`` for a spectrum-only eigensystem, e.g. one built
    from a closed-form spectrum; operations that need eigenvectors reject it.
    """

    values: np.ndarray
    vectors: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError("eigenvalues must be a 1D array")
        if np.any(np.diff(values) < 0):
            raise ValueError("eigenvalues must be sorted ascending")
        object.__setattr__(self, "values", values)
        if self.vectors is not None and self.vectors.shape != (values.size, values.size):
            raise ValueError("eigenvector matrix must be N x N")

    @property
    def dim(self) -> int:
        return self.values.size

    @classmethod
    def from_values(cls, values) -> "Eigensystem":
        return cls(np.sort(np.asarray(values, dtype=float)))

    def require_vectors(self) -> np.ndarray:
        if self.vectors is None:
            raise ValueError("this operation needs eigenvectors; got a spectrum-only Eigensystem")
        return self.vectors


@dataclass(frozen=True)
class DosEstimate:
    rho0_at_E0: float
    eta_probe: float
    admissible: bool
    c_observed: float
    lipschitz_observed: float
    diagnostic: str = ""

    def to_json_dict(self) -> dict:
        return {
            "rho0": self.rho0_at_E0,
            "eta": self.eta_probe,
            "admissible": self.admissible,
            "c_observed": self.c_observed,
            "lipschitz_observed": self.lipschitz_observed,
        }


@dataclass(frozen=True)
class OverlapProfile:
    """Diagonal overlaps ``a_j = <u_j, A u_j>`` and ``p_k = <u_k, P u_k>``."""

    a: np.ndarray
    p: np.ndarray
    mu: np.ndarray

    @property
    def support(self) -> np.ndarray:
        """Indices k with nonzero state weight."""
        return np.flatnonzero(self.p)


def eigenvalues_of(eig) -> np.ndarray:
    """Eigenvalue vector of an Eigensystem or of a plain array of eigenvalues."""
    if isinstance(eig, Eigensystem):
        return eig.values
    return np.sort(np.asarray(eig, dtype=float))


def check_hermitian(H, atol: float = HERMITIAN_ATOL, name: str = "matrix") -> np.ndarray:
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"{name} must be square, got shape {H.shape}")
    dev = np.max(np.abs(H - H.conj().T)) if H.size else 0.0
    if dev > atol:
        raise ValueError(f"{name} is not Hermitian: max |H - H^dagger| = {dev:.3e}")
    return H


def fingerprint(H: np.ndarray) -> str:
    return f"shape={H.shape} dtype={H.dtype} sha256={hashlib.sha256(np.ascontiguousarray(H).tobytes()).hexdigest()[:16]}"


def _eigh(H: np.ndarray):
    try:
        return np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"eigensolver did not converge for {fingerprint(H)}") from exc


def eigendecompose(H, sectors=None, check: bool = True) -> Eigensystem:
    """Diagonalize a Hermitian matrix.

    Parameters
    ----------
    H : (N, N) array
        Hermitian matrix.
    sectors : (N,) array of labels, optional
        Values of a conserved quantity that is diagonal in the computational
        basis (sublattice parity, particle number).  When given, ``H`` is
        diagonalized block by block so that every returned eigenvector lies in
        a single sector.  ``H`` must not couple different sectors.
    check : bool
        Verify unitarity and the residual ``||HU - U diag(mu)||_F / ||H||_F``.
    """
    H = check_hermitian(H)
    n = H.shape[0]
    if sectors is None:
        values, vectors = _eigh(H)
    else:
        labels = np.asarray(sectors)
        if labels.shape != (n,):
            raise ValueError("sector labels must have one entry per basis state")
        leak = np.abs(H[labels[:, None] != labels[None, :]])
        if leak.size and leak.max() > HERMITIAN_ATOL:
            raise ValueError("H couples different sectors; cannot block-diagonalize")
        values = np.empty(n)
        vectors = np.zeros((n, n), dtype=np.result_type(H.dtype, float))
        col = 0
        for lab in np.unique(labels):
            idx = np.flatnonzero(labels == lab)
            w, v = _eigh(H[np.ix_(idx, idx)])
            values[col:col + idx.size] = w
            vectors[idx, col:col + idx.size] = v
            col += idx.size
        order = np.argsort(values, kind="stable")
        values, vectors = values[order], vectors[:, order]

    if check and n:
        gram = vectors.conj().T @ vectors
        if np.max(np.abs(gram - np.eye(n))) > 1e-10:
            raise RuntimeError(f"eigenvectors not orthonormal for {fingerprint(H)}")
        norm = np.linalg.norm(H)
        if norm > 0:
            resid = np.linalg.norm(H @ vectors - vectors * values) / norm
            if resid > 1e-10:
                raise RuntimeError(f"eigen-residual {resid:.2e} too large for {fingerprint(H)}")
    return Eigensystem(values, vectors)


def empirical_stieltjes(eig, z):
    """Normalized trace of the resolvent, ``N^-1 sum_j (mu_j - z)^-1``.

    Accepts a scalar or an array of spectral parameters.
    """
    mu = eigenvalues_of(eig)
    z_arr = np.asarray(z, dtype=complex)
    if np.any(z_arr.imag == 0):
        raise ValueError("spectral parameter must have nonzero imaginary part")
    out = np.mean(1.0 / (mu[:, None] - z_arr.reshape(1, -1)), axis=0).reshape(z_arr.shape)
    return complex(out) if out.ndim == 0 else out


def smoothed_density(eig, x, eta: float):
    """``Im m(x + i eta) / pi`` of the empirical spectral measure."""
    return np.asarray(empirical_stieltjes(eig, np.asarray(x, dtype=float) + 1j * eta)).imag / np.pi


def default_eta_grid(n: int, points: int = 8) -> np.ndarray:
    """Geometric grid from ``20 / n`` (about 20 mean level spacings on a unit band) up to 0.2.

    For ``n < 200`` the upper end is raised to ``2 * 20 / n`` so that the grid
    stays ascending.
    """
    lo = 20.0 / n
    return np.geomspace(lo, max(0.2, 2 * lo), points)


def dos_estimate(eig, window, eta_grid=None, plateau_tol: float = 0.02) -> DosEstimate:
    """Estimate the density of states at ``window.E0`` and test admissibility.

    The density is ``Im m(E0 + i eta) / pi`` at the smallest grid ``eta`` whose
    value agrees with the next grid point to within ``plateau_tol``
    (relative).  The admissibility surrogate checks the lower bound ``c0`` on
    the smoothed density over ``[E0 - kappa0, E0 + kappa0]`` and bounds a
    finite-difference C^{1,1} norm (spacing ``kappa0 / 8``) by ``1 / c0``.
    """
    mu = eigenvalues_of(eig)
    etas = default_eta_grid(mu.size) if eta_grid is None else np.sort(np.asarray(eta_grid, dtype=float))
    if np.any(etas <= 0):
        raise ValueError("eta values must be positive")
    E0, kappa, c0 = window.E0, window.kappa0, window.c0
    vals = np.array([smoothed_density(mu, E0, eta) for eta in etas])

    plateau = None
    for i in range(etas.size - 1):
        ref = vals[i + 1]
        if ref > 0 and abs(vals[i] - ref) < plateau_tol * ref:
            plateau = i
            break

    in_hull = mu[0] <= E0 <= mu[-1]
    eta_used = etas[plateau] if plateau is not None else etas[-1]
    h = kappa / 8.0
    ys = E0 + h * np.arange(-8, 9)
    rho = smoothed_density(mu, ys, eta_used)
    d1 = (rho[2:] - rho[:-2]) / (2 * h)
    d2 = (rho[2:] - 2 * rho[1:-1] + rho[:-2]) / h**2
    c_obs = float(rho.min())
    c11 = float(np.max(np.abs(rho)) + np.max(np.abs(d1)) + np.max(np.abs(d2)))

    reasons = []
    if plateau is None:
        reasons.append(f"no eta-plateau within {plateau_tol:.0%} on eta grid [{etas[0]:.3g}, {etas[-1]:.3g}]")
    if not in_hull:
        reasons.append(f"E0={E0} outside spectrum hull [{mu[0]:.4g}, {mu[-1]:.4g}]")
    if not c_obs > c0:
        reasons.append(f"density lower bound {c_obs:.4g} <= c0={c0}")
    if not c11 <= 1.0 / c0:
        reasons.append(f"C^(1,1) proxy {c11:.4g} > 1/c0={1.0 / c0:.4g}")
    admissible = not reasons
    rho0 = float(vals[plateau]) if plateau is not None else float("nan")
    return DosEstimate(rho0, float(eta_used), admissible, c_obs, c11, "; ".join(reasons))


def overlaps(eig: Eigensystem, A, P, window=None) -> OverlapProfile:
    """Eigenbasis overlap profile of an observable and a state.

    ``A`` may be a full matrix or a 1D array holding a diagonal observable.
    ``P`` is a QuantumState (weights and orthonormal vectors).  If ``window``
    is given, state weight outside it (at most 1e-10) is zeroed so that ``p``
    is supported on in-window indices only.
    """
    U = eig.require_vectors()
    n = eig.dim
    A = np.asarray(A)
    if A.ndim == 1:
        if A.shape != (n,):
            raise ValueError("diagonal observable has wrong length")
        a = np.einsum("ij,i,ij->j", U.conj(), A, U).real
    else:
        if A.shape != (n, n):
            raise ValueError(f"observable shape {A.shape} does not match N={n}")
        a = np.einsum("ij,ij->j", U.conj(), A @ U).real
    vecs = np.asarray(P.vectors)
    if vecs.shape[0] != n:
        raise ValueError("state dimension does not match eigensystem")
    amp = U.conj().T @ vecs
    p = (np.abs(amp) ** 2) @ np.asarray(P.weights, dtype=float)

    if window is not None:
        outside = ~window.contains(eig.values)
        if p[outside].sum() > 1e-10:
            raise ValueError("state has weight outside its energy window")
        p[outside] = 0.0
    p[np.abs(p) < 1e-15] = 0.0
    if p.min() < -1e-12 or abs(p.sum() - 1.0) > 1e-10:
        raise ValueError("state overlaps are not a probability vector")
    return OverlapProfile(a, p, eig.values.copy())
