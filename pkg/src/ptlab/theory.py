"""Closed-form deterministic predictions for the perturbed dynamics.

Notation: ``alpha = pi rho0(E0)``, ``c = 2 alpha lam^2`` (the relaxation rate
of ``|g_lam(t)|^2``) and ``phi_eta(u) = eta / (u^2 + eta^2)``.  For an overlap
profile ``(a_j, p_k, mu_j)`` every prediction is a double sum over ``j`` and
``k in supp(p)`` of a scalar kernel evaluated at ``mu_j - mu_k``:

* normalization      ``r        = sum p_k pi phi_c``
* kernel state       ``<A>_t    = r^-1 sum a_j p_k Phi_t``
* terminal state     ``<A>_inf  = sum a_j p_k phi_c / sum p_k phi_c``
* remainder          ``R(t)     = r^-1 sum a_j p_k frakR_t``

with ``Phi_t = (1 - e^{-ct}) pi phi_c + frakR_t``.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import optimize

from .spectra import Eigensystem, OverlapProfile, overlaps


@dataclass(frozen=True)
class RateConstants:
    rho0_E0: float
    alpha: float
    lam: float

    @property
    def rate(self) -> float:
        """Decay rate ``2 alpha lam^2`` of ``|g_lam(t)|^2``."""
        return 2.0 * self.alpha * self.lam**2

    @property
    def eta(self) -> float:
        """Smoothing height ``alpha lam^2`` of the microcanonical state."""
        return self.alpha * self.lam**2


def rate_constants(rho0_E0: float, lam: float) -> RateConstants:
    if not rho0_E0 > 0 or not lam > 0:
        raise ValueError(f"need rho0 > 0 and lambda > 0, got rho0={rho0_E0}, lambda={lam}")
    return RateConstants(float(rho0_E0), float(np.pi * rho0_E0), float(lam))


def _nonneg_time(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("time must be nonnegative")
    return t


def g_factor(rc: RateConstants, t):
    """``g_lam(t) = exp(-alpha lam^2 t)``."""
    return np.exp(-rc.eta * _nonneg_time(t))


def lorentzian_phi(eta: float, u):
    return eta / (np.asarray(u, dtype=float) ** 2 + eta**2)


def _sinc(x):
    """``sin(x)/x`` with a Taylor branch for ``|x| < 1e-4``."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-4
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 - x * x / 6.0, np.sin(safe) / safe)


def _one_minus_cos(x):
    return 2.0 * np.sin(0.5 * np.asarray(x, dtype=float)) ** 2


def kernel_K(rc: RateConstants, t, u):
    c = rc.rate
    t = _nonneg_time(t)
    u = np.asarray(u, dtype=float)
    return lorentzian_phi(c, u) / np.pi * (c * t * _sinc(t * u) - np.cos(t * u) + np.exp(-c * t))


def kernel_K_hat(rc: RateConstants, t, p):
    """Fourier transform of ``kernel_K`` in the ``(2 pi)^-1/2 int f e^{-ipx}`` convention."""
    c = rc.rate
    t = _nonneg_time(t)
    p = np.abs(np.asarray(p, dtype=float))
    return np.where(p <= t, -np.expm1(-c * (t - np.minimum(p, t))) / np.sqrt(2 * np.pi), 0.0)


def remainder_frakR(rc: RateConstants, t, u):
    c = rc.rate
    t = _nonneg_time(t)
    u = np.asarray(u, dtype=float)
    return np.pi * np.exp(-c * t) * lorentzian_phi(c, u) * (_one_minus_cos(t * u) - c * t * _sinc(t * u))


def big_phi(rc: RateConstants, t, u):
    c = rc.rate
    t = _nonneg_time(t)
    return -np.expm1(-c * t) * np.pi * lorentzian_phi(c, u) + remainder_frakR(rc, t, u)


@lru_cache(maxsize=1)
def frakR_bound_constant() -> float:
    """``max_s (s^2 + 1)(1 - cos s) / s^2`` over ``[-1e3, 1e3]``."""

    def h(s):
        s = np.asarray(s, dtype=float)
        return (s * s + 1.0) * _one_minus_cos(s) / (s * s)

    grid = np.linspace(1e-3, 1e3, 2_000_001)  # h is even and tends to 1/2 at 0
    i = int(np.argmax(h(grid)))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = optimize.minimize_scalar(lambda s: -float(h(s)), bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    return float(max(-res.fun, h(grid[i])))


def frakR_pointwise_bound(rc: RateConstants, t: float, u):
    """Envelope ``c t e^{-ct} pi (C phi_{1/t}(u) + phi_c(u))`` dominating ``|frakR_t(u)|``."""
    c = rc.rate
    if t <= 0:
        return np.zeros_like(np.asarray(u, dtype=float))
    return np.pi * c * t * np.exp(-c * t) * (frakR_bound_constant() * lorentzian_phi(1.0 / t, u) + lorentzian_phi(c, u))


# ---------------------------------------------------------------------------
# summed predictions


def _pair_differences(profile: OverlapProfile):
    k = profile.support
    D = profile.mu[:, None] - profile.mu[None, k]
    return D, profile.a, profile.p[k]


def normalization_r(profile: OverlapProfile, rc: RateConstants) -> float:
    D, _, p = _pair_differences(profile)
    return float(np.pi * np.sum(lorentzian_phi(rc.rate, D) @ p))


def expect_tilde_P(profile: OverlapProfile, rc: RateConstants) -> float:
    D, a, p = _pair_differences(profile)
    L = lorentzian_phi(rc.rate, D) * p
    return float(np.sum(a @ L) / np.sum(L))


def _time_sum(profile, rc, t, kernel):
    D, a, p = _pair_differences(profile)
    ap = a[:, None] * p[None, :]
    t_arr = _nonneg_time(t)
    out = np.array([np.sum(ap * kernel(rc, ti, D)) for ti in t_arr.ravel()]).reshape(t_arr.shape)
    return out / normalization_r(profile, rc)


def expect_tilde_P_t(profile: OverlapProfile, rc: RateConstants, t):
    """Kernel-state expectation ``r^-1 sum a_j p_k Phi_t(mu_j - mu_k)``."""
    out = _time_sum(profile, rc, t, big_phi)
    return float(out) if out.ndim == 0 else out


def remainder_R_total(profile: OverlapProfile, rc: RateConstants, t):
    out = _time_sum(profile, rc, t, remainder_frakR)
    return float(out) if out.ndim == 0 else out


def remainder_young_bound(profile: OverlapProfile, rc: RateConstants, t: float) -> float:
    """``||a||_inf r^-1 sum_{j,k} p_k |frakR_t(mu_j - mu_k)|``."""
    D, a, p = _pair_differences(profile)
    return float(np.max(np.abs(a)) * np.sum(np.abs(remainder_frakR(rc, t, D)) @ p) / normalization_r(profile, rc))


def microcanonical_expectation(eig0: Eigensystem, A, rc: RateConstants, E0: float, a=None) -> float:
    """Expectation in ``Im M0(E0 + i alpha lam^2)`` normalized to unit trace.

    ``a`` may be passed as precomputed diagonal overlaps to skip the basis
    rotation of ``A``.
    """
    mu = eig0.values
    if not mu[0] <= E0 <= mu[-1]:
        raise ValueError(f"E0={E0} outside spectrum hull [{mu[0]}, {mu[-1]}]")
    if a is None:
        U = eig0.require_vectors()
        A = np.asarray(A)
        a = np.einsum("ij,i,ij->j", U.conj(), A, U).real if A.ndim == 1 else np.einsum("ij,ij->j", U.conj(), A @ U).real
    w = lorentzian_phi(rc.eta, E0 - mu)
    return float(np.dot(a, w) / np.sum(w))


def relaxation_rhs(tilde_P: float, unperturbed, rc: RateConstants, grid):
    """``<A>_inf + |g(t)|^2 (<A>_{P0(t)} - <A>_inf)`` on ``grid``.

    ``unperturbed`` is either an EvolutionSeries on the same grid or a
    constant (a prethermal value).
    """
    g2 = g_factor(rc, grid.times) ** 2
    if np.isscalar(unperturbed):
        base = np.full(grid.times.size, float(unperturbed))
    else:
        if unperturbed.grid.times.shape != grid.times.shape or np.any(unperturbed.grid.times != grid.times):
            raise ValueError("unperturbed series is on a different time grid")
        base = np.asarray(unperturbed.values, dtype=float)
    return tilde_P + g2 * (base - tilde_P)


@dataclass(frozen=True)
class LorDiagnostic:
    A_frak: float
    max_dev: float
    l2_dev: float


def lor_diagnostic(profile: OverlapProfile, window) -> LorDiagnostic:
    """Local overlap regularity of ``a`` over ``I_{2 Delta}``.

    ``l2_dev`` is the root-mean-square deviation ``(n^-1 sum |a_j - A|^2)^1/2``.
    """
    inside = window.contains(profile.mu, scale=2.0)
    if inside.sum() < 2:
        raise ValueError("LOR diagnostic needs at least two eigenvalues in I_2Delta")
    a = profile.a[inside]
    mean = float(a.mean())
    dev = np.abs(a - mean)
    return LorDiagnostic(mean, float(dev.max()), float(np.sqrt(np.mean(dev**2))))


def pretherm_gap(A0_pre: float, A0_tilde: float) -> float:
    if not (np.isfinite(A0_pre) and np.isfinite(A0_tilde)):
        raise ValueError("prethermal gap needs finite inputs")
    return float(abs(A0_pre - A0_tilde))


# ---------------------------------------------------------------------------
# bundle


@dataclass(frozen=True)
class PredictionBundle:
    grid: object
    g2: np.ndarray
    tilde_P_t: np.ndarray
    tilde_P: float
    remainder: np.ndarray
    mc: float
    relax_rhs: np.ndarray
    rc: RateConstants
    r: float
    rho0_source: str = "analytic"
    extra: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "T", "g2", "tildePt", "tildeP", "remainder", "mc", "relax_rhs"])
            for i, t in enumerate(self.grid.times):
                w.writerow([repr(float(v)) for v in (t, self.grid.kinetic[i], self.g2[i], self.tilde_P_t[i], self.tilde_P, self.remainder[i], self.mc, self.relax_rhs[i])])

    def sidecar(self) -> dict:
        return {
            "alpha": self.rc.alpha,
            "lambda": self.rc.lam,
            "rho0": self.rc.rho0_E0,
            "rho0_source": self.rho0_source,
            "r": self.r,
            **self.extra,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.sidecar(), fh, indent=2, sort_keys=True)


def predict(eig0: Eigensystem, A, state, rc: RateConstants, grid, unperturbed, E0: float, rho0_source: str = "analytic", profile=None) -> PredictionBundle:
    """Evaluate all deterministic predictions on a time grid."""
    profile = overlaps(eig0, A, state, state.window) if profile is None else profile
    tP = expect_tilde_P(profile, rc)
    return PredictionBundle(
        grid=grid,
        g2=g_factor(rc, grid.times) ** 2,
        tilde_P_t=np.atleast_1d(expect_tilde_P_t(profile, rc, grid.times)),
        tilde_P=tP,
        remainder=np.atleast_1d(remainder_R_total(profile, rc, grid.times)),
        mc=microcanonical_expectation(eig0, A, rc, E0, a=profile.a),
        relax_rhs=relaxation_rhs(tP, unperturbed, rc, grid),
        rc=rc,
        r=normalization_r(profile, rc),
        rho0_source=rho0_source,
    )
