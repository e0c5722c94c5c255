"""Frictional-contact NCP: K ni lambda perp sigma + Gamma(sigma) in K*.

sigma = G lambda + g is the contact-space velocity, Gamma the De Saxce
correction (0, 0, mu |sigma_T|). Solved exactly (to tolerance) with a
projected Gauss-Seidel sweep over contacts; no relaxation of the cone
constraint or of the maximum dissipation principle.

Units are whatever the caller puts into (G, g); the simulator uses impulses
and velocities.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class Mode(enum.Enum):
    BREAKING = "breaking"
    STICKING = "sticking"
    SLIDING = "sliding"


@dataclass(frozen=True)
class ContactProblem:
    """Delassus matrix G (3n x 3n, PSD), free velocity g (3n), friction
    coefficients mu (n). Rows per contact: (t1, t2, normal)."""

    G: np.ndarray
    g: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        n = len(self.mu)
        if self.G.shape != (3 * n, 3 * n) or self.g.shape != (3 * n,):
            raise ValueError("inconsistent contact problem dimensions")
        if np.any(np.asarray(self.mu) < 0.0):
            raise ValueError("friction coefficients must be >= 0")

    @property
    def n(self) -> int:
        return len(self.mu)


@dataclass(frozen=True)
class ModeThresholds:
    """Classification thresholds. eps_lambda defaults to a problem-scaled
    value ~ 1e-9 * |g|_inf / |G|_inf (an impulse scale)."""

    eps_lambda: float | None = None
    eps_slide: float = 1e-8
    eps_cone: float = 1e-7

    def lambda_threshold(self, problem: ContactProblem) -> float:
        if self.eps_lambda is not None:
            return self.eps_lambda
        g_scale = max(float(np.abs(problem.g).max(initial=0.0)), 1e-6)
        G_scale = max(float(np.abs(problem.G).max(initial=0.0)), 1e-6)
        return 1e-9 * g_scale / G_scale


@dataclass
class ContactSolution:
    lam: np.ndarray
    sigma: np.ndarray
    modes: list
    ambiguous: np.ndarray
    iterations: int
    residual: float
    converged: bool


def cone_project(lam: np.ndarray, mu: float) -> np.ndarray:
    """Euclidean projection onto the friction cone |lam_T| <= mu lam_N."""
    s = float(np.hypot(lam[0], lam[1]))
    if s <= mu * lam[2]:
        return lam.copy()
    if mu * s <= -lam[2]:
        return np.zeros(3)
    proj_n = (mu * s + lam[2]) / (1.0 + mu * mu)
    out = np.empty(3)
    if s > 0.0:
        out[:2] = mu * proj_n * lam[:2] / s
    else:
        out[:2] = 0.0
    out[2] = proj_n
    return out


def dual_cone_project(y: np.ndarray, mu: float) -> np.ndarray:
    """Projection onto the dual cone K_mu^* (= K_{1/mu}; halfspace y_N >= 0
    at mu = 0)."""
    if mu == 0.0:
        out = y.copy()
        out[2] = max(out[2], 0.0)
        return out
    return cone_project(y, 1.0 / mu)


def de_saxce_correction(sigma: np.ndarray, mu) -> np.ndarray:
    """Gamma(sigma): (0, 0, mu |sigma_T|) per contact; accepts stacked
    (3n,) input with mu of shape (n,)."""
    sig = sigma.reshape(-1, 3)
    out = np.zeros_like(sig)
    out[:, 2] = np.asarray(mu) * np.hypot(sig[:, 0], sig[:, 1])
    return out.reshape(sigma.shape)


def _corrected(sigma3, mu):
    y = sigma3.copy()
    y[2] += mu * np.hypot(sigma3[0], sigma3[1])
    return y


def ncp_residual(problem: ContactProblem, lam: np.ndarray, sigma=None) -> float:
    """Worst per-contact violation of cone feasibility, dual feasibility,
    complementarity and slip alignment, normalized by max(1, |g|_inf).

    The alignment term |lam_T |sigma_T| + mu lam_N sigma_T| is first order
    in the angle between the friction impulse and the slip direction;
    the complementarity gap alone is only second order in it, which would
    let a warm-started solve stop with a stale friction direction."""
    if problem.n == 0:
        return 0.0
    if sigma is None:
        sigma = problem.G @ lam + problem.g
    worst = 0.0
    for c in range(problem.n):
        mu = float(problem.mu[c])
        lc = lam[3 * c : 3 * c + 3]
        sc = sigma[3 * c : 3 * c + 3]
        y = _corrected(sc, mu)
        r = np.linalg.norm(lc - cone_project(lc, mu))
        r = max(r, np.linalg.norm(y - dual_cone_project(y, mu)))
        r = max(r, abs(float(lc @ y)))
        s_t = float(np.hypot(sc[0], sc[1]))
        r = max(r, float(np.linalg.norm(lc[:2] * s_t + mu * lc[2] * sc[:2])))
        worst = max(worst, r)
    return worst / max(1.0, float(np.abs(problem.g).max()))


def solve_ncp(problem: ContactProblem, tol: float = 1e-10, max_iters: int = 10000,
              warm_start=None, thresholds: ModeThresholds = ModeThresholds()) -> ContactSolution:
    """Projected Gauss-Seidel with the De Saxce correction.

    Per contact: lam_c <- project_K(lam_c - (sigma_c + Gamma(sigma_c)) / s_c)
    with s_c the spectral norm of the diagonal block. Deterministic sweep
    order = contact order; warm starts shift the iterate only, never the
    fixed point."""
    n = problem.n
    if n == 0:
        return ContactSolution(np.zeros(0), np.zeros(0), [], np.zeros(0, bool), 0, 0.0, True)
    G, g = problem.G, problem.g
    lam = np.zeros(3 * n)
    if warm_start is not None and warm_start.shape == lam.shape:
        for c in range(n):
            lam[3 * c : 3 * c + 3] = cone_project(warm_start[3 * c : 3 * c + 3], float(problem.mu[c]))
    scales = np.empty(n)
    for c in range(n):
        blk = G[3 * c : 3 * c + 3, 3 * c : 3 * c + 3]
        s = float(np.linalg.norm(blk, 2))
        scales[c] = s if s > 1e-14 else 1.0
    sigma = G @ lam + g
    residual = ncp_residual(problem, lam, sigma)
    converged = residual <= tol
    sweeps = 0
    while not converged and sweeps < max_iters:
        sweeps += 1
        for c in range(n):
            i = 3 * c
            mu = float(problem.mu[c])
            y = _corrected(sigma[i : i + 3], mu)
            new = cone_project(lam[i : i + 3] - y / scales[c], mu)
            dlam = new - lam[i : i + 3]
            if dlam[0] != 0.0 or dlam[1] != 0.0 or dlam[2] != 0.0:
                sigma += G[:, i : i + 3] @ dlam
                lam[i : i + 3] = new
        if sweeps % 128 == 0:
            sigma = G @ lam + g  # refresh incremental updates
        residual = ncp_residual(problem, lam, sigma)
        converged = residual <= tol
    sigma = G @ lam + g
    residual = ncp_residual(problem, lam, sigma)
    modes, ambiguous = classify_modes(problem, lam, sigma, thresholds)
    return ContactSolution(lam, sigma, modes, ambiguous, sweeps, residual, converged)


def classify_modes(problem: ContactProblem, lam: np.ndarray, sigma=None,
                   thresholds: ModeThresholds = ModeThresholds()):
    """Per-contact mode: Breaking (|lam| ~ 0), Sliding (on the cone
    boundary with tangential slip) or Sticking. Contacts with tangential
    slip but an interior impulse are flagged ambiguous (solver did not
    converge to a consistent mode)."""
    if sigma is None:
        sigma = problem.G @ lam + problem.g
    eps_lam = thresholds.lambda_threshold(problem)
    modes = []
    ambiguous = np.zeros(problem.n, dtype=bool)
    for c in range(problem.n):
        lc = lam[3 * c : 3 * c + 3]
        sc = sigma[3 * c : 3 * c + 3]
        mu = float(problem.mu[c])
        if np.linalg.norm(lc) <= eps_lam:
            modes.append(Mode.BREAKING)
            continue
        slip = np.hypot(sc[0], sc[1]) > thresholds.eps_slide
        if mu > 0.0 and slip:
            if np.hypot(lc[0], lc[1]) >= (1.0 - thresholds.eps_cone) * mu * lc[2]:
                modes.append(Mode.SLIDING)
                continue
            ambiguous[c] = True
        modes.append(Mode.STICKING)
    return modes, ambiguous
