"""Scalar reduction of the deformed Matrix Dyson Equation.

For ``H_lam = H0 + lam W`` the MDE ``-M^-1 = z - H0 + lam^2 <M>`` is solved by
``M = (H0 - z - lam^2 m)^-1`` where the scalar ``m = <M>`` obeys

    m = <(H0 - z - lam^2 m)^-1> = N^-1 sum_j (mu_j - z - lam^2 m)^-1.

``M`` is therefore diagonal in the H0 eigenbasis and never formed densely.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectra import Eigensystem, eigenvalues_of

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 10_000
STALL_LIMIT = 50
BOUNDARY_ETA = 1e-4


class MdeConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class MdeSolution:
    z: complex
    lam: float
    m: complex
    residual: float
    iterations: int
    mu: np.ndarray

    def diagonal(self) -> np.ndarray:
        """Eigenbasis diagonal of ``M_lam(z)``."""
        return 1.0 / (self.mu - self.z - self.lam**2 * self.m)

    def trace_abs2(self) -> float:
        return float(np.mean(np.abs(self.diagonal()) ** 2))

    def trace_abs(self) -> float:
        return float(np.mean(np.abs(self.diagonal())))


def _check_invariants(sol: MdeSolution) -> None:
    z, lam, m = sol.z, sol.lam, sol.m
    if np.sign(m.imag) != np.sign(z.imag):
        raise RuntimeError(f"MDE solution violates sign(Im m) = sign(Im z) at z={z}: m={m}")
    if lam > 0:
        slack = 1.0 + 1e-9
        if abs(m) * lam > slack:
            raise RuntimeError(f"|m|={abs(m):.6g} exceeds 1/lambda at z={z}")
        if sol.trace_abs2() * lam**2 > slack:
            raise RuntimeError(f"<|M|^2> exceeds lambda^-2 at z={z}")
        if sol.trace_abs() * lam > slack:
            raise RuntimeError(f"<|M|> exceeds 1/lambda at z={z}")


def solve_mde(eig0, z: complex, lam: float, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> MdeSolution:
    """Solve the scalar MDE at one spectral parameter.

    Damped fixed-point iteration ``m <- (1 - beta) m + beta F(m)``; ``beta``
    starts at 1, is halved whenever a trial step increases the residual and
    is doubled back (up to 1) after each step that cuts it.  Step control
    measures the residual in the hyperbolic metric of the half-plane,
    ``|F(m) - m| / sqrt(Im m Im F(m))``, in which the undamped map is a
    contraction; the Euclidean residual ``|F(m) - m|`` can rise for several
    steps near the real axis and is used only for the stopping test.  An
    iteration that fails to cut the residual by 10% counts as stalled; after
    50 stalled iterations the solver switches to a complex secant method on
    ``F(m) - m`` (falling back to a damped step whenever a secant step would
    leave the half-plane of ``z`` or increase the residual).

    Raises
    ------
    ValueError
        For real ``z``, negative ``lam`` or nonpositive ``tol``.
    MdeConvergenceError
        If ``max_iter`` is exceeded; carries the last residual.
    """
    z = complex(z)
    if z.imag == 0:
        raise ValueError("MDE needs Im z != 0")
    if lam < 0 or tol <= 0:
        raise ValueError("need lambda >= 0 and tol > 0")
    mu = eigenvalues_of(eig0)
    lam2 = lam * lam

    def F(m):
        return np.mean(1.0 / (mu - z - lam2 * m))

    def hyp(m, fm):
        return abs(fm - m) / max(np.sqrt(abs(m.imag * fm.imag)), np.finfo(float).tiny)

    if lam == 0:
        sol = MdeSolution(z, 0.0, complex(F(0.0)), 0.0, 1, mu)
        _check_invariants(sol)
        return sol

    sgn = np.sign(z.imag)
    m = complex(F(0.0))
    fm = F(m)
    res, d = abs(fm - m), hyp(m, fm)
    beta = 1.0
    stalled = 0
    prev = None  # (m, g) for the secant method
    it = 0
    while res > tol:
        if it >= max_iter:
            raise MdeConvergenceError(f"MDE did not converge in {max_iter} iterations at z={z}, lambda={lam}: residual {res:.3e}", res)
        it += 1
        g = fm - m
        cand = None
        if stalled >= STALL_LIMIT and prev is not None and g != prev[1]:
            trial = m - g * (m - prev[0]) / (g - prev[1])
            if np.sign(trial.imag) == sgn:
                f_trial = F(trial)
                d_trial = hyp(trial, f_trial)
                if d_trial < d:
                    cand = (trial, f_trial, d_trial)
        if cand is None:
            trial = (1 - beta) * m + beta * fm
            f_trial = F(trial)
            d_trial = hyp(trial, f_trial)
            if d_trial > d and beta > 1e-6:
                beta *= 0.5
                stalled += 1
                continue
            cand = (trial, f_trial, d_trial)
        prev = (m, g)
        if cand[2] > 0.9 * d:
            stalled += 1
        elif cand[2] < d:
            beta = min(1.0, 2.0 * beta)
        m, fm, d = cand
        res = abs(fm - m)
    sol = MdeSolution(z, float(lam), complex(m), float(res), it, mu)
    _check_invariants(sol)
    return sol


def boundary_value(eig0, x: float, lam: float, eta_target: float = 0.0, **kw) -> complex:
    """Proxy for ``m_lam(x + i0+)``.

    For ``eta_target >= 1e-4`` the MDE is solved at ``x + i eta_target``.
    Otherwise it is solved at ``eta = 1e-4`` and ``2e-4`` and linearly
    extrapolated to ``eta_target``.
    """
    if eta_target >= BOUNDARY_ETA:
        return solve_mde(eig0, x + 1j * eta_target, lam, **kw).m
    m1 = solve_mde(eig0, x + 1j * BOUNDARY_ETA, lam, **kw).m
    m2 = solve_mde(eig0, x + 2j * BOUNDARY_ETA, lam, **kw).m
    return m1 + (m1 - m2) * (BOUNDARY_ETA - eta_target) / BOUNDARY_ETA


def stieltjes_representation_check(eig0, lam: float, z: complex, eta: float = 0.01, spacing: float | None = None, pad: float = 2.0) -> float:
    """Discrepancy between ``m_lam(z)`` and its Stieltjes integral.

    The integral ``pi^-1 int Im m_lam(x + i eta) / (x + i eta - z) dx`` over
    the spectrum hull padded by ``pad`` (trapezoid rule) equals ``m_lam(z)``
    for ``Im z > eta`` up to quadrature and truncation error, since
    ``x -> m_lam(x + i eta)`` is the Stieltjes transform of the measure
    smoothed at scale ``eta``.
    """
    z = complex(z)
    if z.imag < 0.5:
        raise ValueError("representation check needs Im z >= 0.5")
    spacing = eta / 2 if spacing is None else spacing
    if spacing > eta / 2 or spacing <= 0:
        raise ValueError(f"grid spacing {spacing} too coarse for eta={eta} (need <= eta/2)")
    mu = eigenvalues_of(eig0)
    lo, hi = mu[0] - pad, mu[-1] + pad
    n = int(np.ceil((hi - lo) / spacing)) + 1
    xs = np.linspace(lo, hi, n)
    im = np.array([solve_mde(mu, x + 1j * eta, lam).m.imag for x in xs])
    integral = np.trapezoid(im / (xs + 1j * eta - z), xs) / np.pi
    return float(abs(solve_mde(mu, z, lam).m - integral))


def _rotate(eig0: Eigensystem, B, x, y):
    U = eig0.require_vectors()
    B = np.asarray(B)
    Bt = U.conj().T @ (B @ U) if B.ndim == 2 else U.conj().T @ (B[:, None] * U)
    return Bt, U.conj().T @ np.asarray(x), U.conj().T @ np.asarray(y)


@dataclass(frozen=True)
class DetTwoResolvent:
    z1: complex
    z2: complex
    value_xy: complex
    trace_form: complex
    margin: float


MIN_MARGIN = 1e-6


def det_two_resolvent(eig0: Eigensystem, z1, z2, lam: float, B, x, y, c: float | None = None) -> DetTwoResolvent:
    """Deterministic approximation of ``<x, G1 B G2 y>`` and ``<G1 B G2>``.

    ``M1 B M2 + lam^2 M1 M2 <M1 B M2> / (1 - lam^2 <M1 M2>)`` with
    ``Mi = M_lam(zi)``, evaluated after a single rotation of ``B, x, y`` into
    the H0 eigenbasis.
    """
    c = min(abs(complex(z1).imag), abs(complex(z2).imag)) if c is None else c
    if not c > 0 or min(abs(complex(z1).imag), abs(complex(z2).imag)) < c:
        raise ValueError("need min(|Im z1|, |Im z2|) >= c > 0")
    for name, v in (("x", x), ("y", y)):
        if abs(np.linalg.norm(v) - 1.0) > 1e-10:
            raise ValueError(f"{name} must be a unit vector")
    d1 = solve_mde(eig0, z1, lam).diagonal()
    d2 = solve_mde(eig0, z2, lam).diagonal()
    Bt, xt, yt = _rotate(eig0, B, x, y)
    return _two_resolvent_from_parts(d1, d2, lam, Bt, xt, yt, complex(z1), complex(z2))


def _two_resolvent_from_parts(d1, d2, lam, Bt, xt, yt, z1=0j, z2=0j) -> DetTwoResolvent:
    n = d1.size
    denom = 1.0 - lam**2 * np.mean(d1 * d2)
    margin = float(abs(denom))
    if margin < MIN_MARGIN:
        raise ValueError(f"two-body stability factor |1 - lam^2 <M1 M2>| = {margin:.2e} below {MIN_MARGIN}")
    tr_mbm = np.sum(d1 * np.diag(Bt) * d2) / n
    value = np.vdot(xt, d1 * (Bt @ (d2 * yt))) + lam**2 * np.vdot(xt, d1 * d2 * yt) * tr_mbm / denom
    return DetTwoResolvent(z1, z2, complex(value), complex(tr_mbm / denom), margin)


def det_two_resolvent_form(eig0: Eigensystem, z1, z2, lam: float, B, x, y, c: float | None = None) -> complex:
    """Isotropic deterministic two-resolvent value ``<x, (...) y>``."""
    return det_two_resolvent(eig0, z1, z2, lam, B, x, y, c).value_xy
