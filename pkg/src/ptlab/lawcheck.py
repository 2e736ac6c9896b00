"""Empirical checks of the single- and two-resolvent global laws.

Exact resolvents ``G(z) = (H_lam - z)^-1`` are applied as diagonal shifts in
the ``H_lam`` eigenbasis, so one diagonalization per seed serves every
spectral parameter.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .mde import _rotate, _two_resolvent_from_parts, solve_mde
from .models import WignerSpec, assemble_deformed, sample_wigner
from .spectra import Eigensystem, eigendecompose

MIN_IM = 1e-3
FIXED_K_DELTA = 0.1


@dataclass(frozen=True)
class ResidualSample:
    kind: str
    N: int
    seed: int
    z1: complex
    z2: complex
    residual: float


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    ci_low: float
    ci_high: float
    intercept: float
    Ns: tuple
    medians: tuple


def _h0_matrix(eig0: Eigensystem, H0):
    if H0 is not None:
        return np.asarray(H0)
    U = eig0.require_vectors()
    return (U * eig0.values) @ U.conj().T


def _check_z(*zs):
    for z in zs:
        if abs(complex(z).imag) < MIN_IM:
            raise ValueError(f"spectral parameter {z} too close to the real axis for a stable shifted solve")


def _perturbed_eig(H0, lam, spec):
    if lam == 0:
        return eigendecompose(H0)
    return eigendecompose(assemble_deformed(H0, lam, sample_wigner(spec)))


def _in_basis(V, B):
    B = np.asarray(B)
    return V.conj().T @ (B @ V) if B.ndim == 2 else V.conj().T @ (B[:, None] * V)


def residual_sweep(
    eig0: Eigensystem,
    lam: float,
    pairs,
    singles,
    B,
    x,
    y,
    seeds,
    wigner: WignerSpec | None = None,
    H0=None,
    epsilon: float | None = None,
):
    """Residual samples for several probe points from one diagonalization per seed.

    Parameters
    ----------
    pairs : sequence of (z1, z2)
        Two-resolvent probes ``<x, G(z1) B G(z2) y>``.
    singles : sequence of z
        Single-resolvent probes ``<G(z) B>``.
    epsilon : float, optional
        If given, also run ``spectrum_inclusion_check`` per seed.

    Returns
    -------
    samples : list of ResidualSample
    inclusion : list of (seed, passed, excursion)
    """
    pairs = [(complex(a), complex(b)) for a, b in pairs]
    singles = [complex(z) for z in singles]
    _check_z(*[z for p in pairs for z in p], *singles)
    H0 = _h0_matrix(eig0, H0)
    N = H0.shape[0]
    template = wigner or WignerSpec(N)
    Bt0, xt0, yt0 = _rotate(eig0, B, x, y)
    sol = {z: solve_mde(eig0, z, lam).diagonal() for z in {z for p in pairs for z in p} | set(singles)}
    det_pair = [_two_resolvent_from_parts(sol[a], sol[b], lam, Bt0, xt0, yt0, a, b).value_xy for a, b in pairs]
    det_single = [np.mean(sol[z] * np.diag(Bt0)) for z in singles]

    samples, inclusion = [], []
    for seed in seeds:
        try:
            eig = _perturbed_eig(H0, lam, template.with_seed(seed))
        except RuntimeError as exc:
            raise RuntimeError(f"seed {seed}: {exc}") from exc
        V = eig.require_vectors()
        Bt = _in_basis(V, B)
        xt, yt = V.conj().T @ np.asarray(x), V.conj().T @ np.asarray(y)
        for (a, b), det in zip(pairs, det_pair):
            exact = np.vdot(xt, (Bt @ (yt / (eig.values - b))) / (eig.values - a))
            samples.append(ResidualSample("two-resolvent", N, int(seed), a, b, float(abs(exact - det))))
        for z, det in zip(singles, det_single):
            exact = np.mean(np.diag(Bt) / (eig.values - z))
            samples.append(ResidualSample("single-resolvent", N, int(seed), z, z, float(abs(exact - det))))
        if epsilon is not None:
            ok, exc_ = spectrum_inclusion_check(eig, eig0, lam, epsilon)
            inclusion.append((int(seed), ok, exc_))
    return samples, inclusion


def two_resolvent_residuals(eig0: Eigensystem, lam: float, z1, z2, B, x, y, seeds, wigner: WignerSpec | None = None, H0=None) -> list[ResidualSample]:
    """``|<x, G(z1) B G(z2) y> - deterministic form|`` for each seed."""
    return residual_sweep(eig0, lam, [(z1, z2)], [], B, x, y, seeds, wigner, H0)[0]


def single_resolvent_residuals(eig0: Eigensystem, lam: float, z, B, seeds, wigner: WignerSpec | None = None, H0=None) -> list[ResidualSample]:
    """``|<(G(z) - M(z)) B>|`` for each seed."""
    n = eig0.dim
    e = np.zeros(n)
    e[0] = 1.0
    return residual_sweep(eig0, lam, [], [z], B, e, e, seeds, wigner, H0)[0]


def _group_medians(samples):
    groups: dict[int, list[float]] = {}
    for s in samples:
        groups.setdefault(s.N, []).append(s.residual)
    return {n: np.asarray(v) for n, v in sorted(groups.items())}


def scaling_exponent_fit(samples, n_boot: int = 2000, seed: int = 0, level: float = 0.95) -> ScalingFit:
    """Least-squares slope of ``log median(residual)`` against ``log N``.

    The confidence interval comes from a percentile bootstrap that resamples
    seeds within each ``N`` group.
    """
    groups = _group_medians(samples)
    if len(groups) < 3:
        raise ValueError(f"scaling fit needs at least 3 distinct N, got {len(groups)}")
    if min(v.size for v in groups.values()) < 20:
        raise ValueError("scaling fit needs at least 20 seeds per N")
    Ns = np.array(list(groups), dtype=float)
    med = np.array([np.median(v) for v in groups.values()])
    if np.any(med <= 0):
        raise ValueError("median residual is zero; slope undefined")
    logN = np.log(Ns)
    slope, intercept = np.polyfit(logN, np.log(med), 1)

    rng = np.random.default_rng(seed)
    boots = np.empty(n_boot)
    for b in range(n_boot):
        bm = [np.median(rng.choice(v, v.size)) for v in groups.values()]
        boots[b] = np.polyfit(logN, np.log(bm), 1)[0]
    q = (1 - level) / 2
    lo, hi = np.quantile(boots, [q, 1 - q])
    return ScalingFit(float(slope), float(lo), float(hi), float(intercept), tuple(int(n) for n in Ns), tuple(float(m) for m in med))


def fixed_k_surrogate(samples, delta: float = FIXED_K_DELTA, quantile: float = 0.9) -> dict:
    """90th-percentile residual against ``K N^(-1/2 + delta)``, ``K`` fitted at the smallest N."""
    groups = _group_medians(samples)
    Ns = list(groups)
    q = {n: float(np.quantile(v, quantile)) for n, v in groups.items()}
    K = q[Ns[0]] * Ns[0] ** (0.5 - delta)
    rows = {n: {"q90": q[n], "bound": K * n ** (-0.5 + delta), "pass": q[n] <= K * n ** (-0.5 + delta)} for n in Ns}
    return {"K": K, "delta": delta, "per_N": rows, "pass": all(r["pass"] for r in rows.values())}


def spectrum_inclusion_check(eig_lambda, eig0, lam: float, epsilon: float) -> tuple[bool, float]:
    """Check ``dist(E, sigma(H0)) <= (2 + epsilon) lam`` for all eigenvalues ``E``.

    Returns the verdict and the maximal distance divided by ``lam`` (the raw
    distance when ``lam = 0``).
    """
    E = np.asarray(getattr(eig_lambda, "values", eig_lambda), dtype=float)
    mu = np.sort(np.asarray(getattr(eig0, "values", eig0), dtype=float))
    dist = np.min(np.abs(E[:, None] - mu[None, [0, -1]]), axis=1)
    if mu.size > 1:
        pos = np.clip(np.searchsorted(mu, E), 1, mu.size - 1)
        dist = np.minimum(np.abs(E - mu[pos - 1]), np.abs(E - mu[pos]))
    dmax = float(dist.max()) if dist.size else 0.0
    excursion = dmax / lam if lam > 0 else dmax
    return dmax <= (2 + epsilon) * lam + 1e-12, excursion


def write_samples_csv(path, samples) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "N", "seed", "rez1", "imz1", "rez2", "imz2", "residual"])
        for s in samples:
            w.writerow([s.kind, s.N, s.seed, repr(s.z1.real), repr(s.z1.imag), repr(s.z2.real), repr(s.z2.imag), repr(s.residual)])


def summary(samples, fit: ScalingFit | None, surrogate: dict | None, degenerate: bool = False) -> dict:
    groups = _group_medians(samples)
    out = {
        "medians": {str(n): float(np.median(v)) for n, v in groups.items()},
        "degenerate": degenerate,
    }
    if fit is not None:
        out["slope"] = fit.slope
        out["slope_ci"] = [fit.ci_low, fit.ci_high]
        out["intercept"] = fit.intercept
    if surrogate is not None:
        out["fixed_k"] = {
            "K": surrogate["K"],
            "delta": surrogate["delta"],
            "pass": surrogate["pass"],
            "per_N": {str(n): r for n, r in surrogate["per_N"].items()},
        }
    return out


def write_summary_json(path, data: dict) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
