"""Analytic step derivatives by implicit differentiation of the contact NCP.

Differentiating the solved contact modes gives, per contact:
  breaking: dlambda = 0 (one-sided at the mode boundary);
  sticking: the 3x3 rows of G dlambda = -(dG lambda + dg);
  sliding:  a 2D tangent-plane system in the basis R = [lambda/|lambda|,
            e_z x u], with the weighting P = blockdiag((1/alpha)(I - u u^T), 1),
            alpha = |sigma_T| / (mu lambda_N), and Q = diag(0, 1).
Active contacts couple through the Delassus matrix into one reduced linear
system A X = -B rhs with A = B G C + diag(Q); B stacks identity rows
(sticking) and R^T P rows (sliding), C the matching columns. Frictionless
(mu = 0) active contacts reduce to their normal row alone.

The right-hand side rhs = dG lambda + dg is the derivative of the contact
velocity at frozen impulse; it collects the smooth-dynamics partials, the
kinematic variation of the contact Jacobian at a fixed frame, the
contact-frame variation (from the collision derivatives), and the
stabilization terms.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import qr, solve_triangular

from . import collision as co
from .contact import ContactProblem, ContactSolution, Mode
from .dynamics import (
    applied_wrench_q_derivative,
    compute_dynamics,
    id_state_derivatives,
)
from .model import (
    KinematicModel,
    body_jacobian_world,
    compute_kinematics,
    integrate_jacobians,
    jv_q_derivatives,
)
from .spatial import adjoint, adjoint_inverse, motion_cross, p_operator


class SingularSlidingMode(ValueError):
    pass


@dataclass(frozen=True)
class SlidingBasis:
    """Tangent-plane basis at a sliding impulse: columns of R are the
    impulse ray and the in-plane direction orthogonal to the slip."""

    R: np.ndarray      # (3, 2)
    P: np.ndarray      # (3, 3)
    alpha: float
    slip_dir: np.ndarray  # (2,) unit tangential slip direction u


_Q_SLIDING = np.diag([0.0, 1.0])


def sliding_basis(lam_c: np.ndarray, sigma_c: np.ndarray, mu: float) -> SlidingBasis:
    s_t = float(np.hypot(sigma_c[0], sigma_c[1]))
    lam_norm = float(np.linalg.norm(lam_c))
    if mu <= 0.0 or s_t < 1e-14 or mu * lam_c[2] < 1e-14:
        raise SingularSlidingMode("sliding basis undefined: no slip or apex impulse")
    u = sigma_c[:2] / s_t
    alpha = s_t / (mu * float(lam_c[2]))
    R = np.zeros((3, 2))
    R[:, 0] = lam_c / lam_norm
    R[0, 1] = -u[1]
    R[1, 1] = u[0]
    P = np.zeros((3, 3))
    P[:2, :2] = (np.eye(2) - np.outer(u, u)) / alpha
    P[2, 2] = 1.0
    return SlidingBasis(R=R, P=P, alpha=alpha, slip_dir=u)


@dataclass
class ReducedSystem:
    """Mode-reduced implicit system on the active contacts."""

    A: np.ndarray
    entries: list          # (contact index, mode, offset, width, basis|None)
    n_contacts: int
    size: int

    def reduce(self, rhs: np.ndarray) -> np.ndarray:
        """Apply B: select sticking rows, project sliding rows by R^T P,
        frictionless rows by e_z."""
        rhs = np.atleast_2d(rhs.T).T if rhs.ndim == 1 else rhs
        out = np.zeros((self.size, rhs.shape[1]))
        for c, mode, off, width, basis in self.entries:
            block = rhs[3 * c : 3 * c + 3]
            if basis is not None:
                out[off : off + width] = basis.R.T @ (basis.P @ block)
            elif width == 3:
                out[off : off + 3] = block
            else:
                out[off] = block[2]
        return out

    def expand(self, X: np.ndarray) -> np.ndarray:
        """Apply C: scatter reduced unknowns back to stacked impulses."""
        out = np.zeros((3 * self.n_contacts, X.shape[1]))
        for c, mode, off, width, basis in self.entries:
            if basis is not None:
                out[3 * c : 3 * c + 3] = basis.R @ X[off : off + width]
            elif width == 3:
                out[3 * c : 3 * c + 3] = X[off : off + 3]
            else:
                out[3 * c + 2] = X[off]
        return out


def assemble_reduced_system(problem: ContactProblem, solution: ContactSolution) -> ReducedSystem:
    """Build A = B G C + diag(0 | Q) over the non-breaking contacts."""
    entries = []
    off = 0
    for c, mode in enumerate(solution.modes):
        if mode is Mode.BREAKING:
            continue
        mu = float(problem.mu[c])
        if mode is Mode.SLIDING:
            basis = sliding_basis(
                solution.lam[3 * c : 3 * c + 3], solution.sigma[3 * c : 3 * c + 3], mu
            )
            entries.append((c, mode, off, 2, basis))
            off += 2
        elif mu == 0.0:
            entries.append((c, mode, off, 1, None))
            off += 1
        else:
            entries.append((c, mode, off, 3, None))
            off += 3
    size = off
    A = np.zeros((size, size))
    for ci, mi, oi, wi, bi in entries:
        for cj, mj, oj, wj, bj in entries:
            Gij = problem.G[3 * ci : 3 * ci + 3, 3 * cj : 3 * cj + 3]
            if bj is not None:
                Gij = Gij @ bj.R
            elif wj == 1:
                Gij = Gij[:, 2:3]
            if bi is not None:
                Gij = bi.R.T @ (bi.P @ Gij)
            elif wi == 1:
                Gij = Gij[2:3, :]
            A[oi : oi + wi, oj : oj + wj] = Gij
        if bi is not None:
            A[oi : oi + wi, oi : oi + wi] += _Q_SLIDING
    return ReducedSystem(A=A, entries=entries, n_contacts=problem.n, size=size)


def solve_reduced(rs: ReducedSystem, rhs: np.ndarray):
    """Solve A X = -B rhs; QR with a least-squares fallback when the active
    set is redundant (returns the flag). The expanded impulse derivative is
    unique in J_c^T dlambda even when dlambda itself is not."""
    reduced = rs.reduce(rhs)
    if rs.size == 0:
        return np.zeros((3 * rs.n_contacts, reduced.shape[1])), False
    Q, R = qr(rs.A)
    diag = np.abs(np.diag(R))
    deficient = bool(diag.min() <= 1e-12 * max(diag.max(), 1e-300))
    if not deficient:
        X = solve_triangular(R, Q.T @ (-reduced))
    else:
        X = np.linalg.lstsq(rs.A, -reduced, rcond=None)[0]
    return rs.expand(X), deficient


@dataclass
class _ContactDiff:
    """Per-contact kinematic pack used by the correction terms."""

    Jc6: np.ndarray       # (6, nv) relative twist Jacobian in the frame
    dM: np.ndarray        # (6, nv) frame local twist per tangent: dm1 J1 + dm2 J2
    dphi_dq: np.ndarray   # (nv,)
    boundary: bool


def _contact_packs(model, kin, contacts, margin):
    packs = []
    by_pair = {}
    for frame in contacts:
        by_pair.setdefault(frame.pair, []).append(frame)
    cd_cache = {}
    for pair, frames in by_pair.items():
        g1, g2 = model.geometries[pair[0]], model.geometries[pair[1]]
        M1 = kin.geom_placements[pair[0]]
        M2 = kin.geom_placements[pair[1]]
        recs = co._contact_records(g1.shape, g2.shape, M1, M2, margin, derivatives=True)
        for frame in frames:
            rec = co._match_record(recs, frame)
            cd_cache[(pair, frame.feature)] = (co._cd_from_record(rec, frame), rec.dphi)
    for frame in contacts:
        M1 = kin.geom_placements[frame.pair[0]]
        M2 = kin.geom_placements[frame.pair[1]]
        Mc = frame.placement
        Jw1 = body_jacobian_world(model, kin, frame.body1)
        Jw2 = body_jacobian_world(model, kin, frame.body2)
        J1 = adjoint_inverse(M1) @ Jw1
        J2 = adjoint_inverse(M2) @ Jw2
        cd, dphi_row = cd_cache[(frame.pair, frame.feature)]
        packs.append(
            _ContactDiff(
                Jc6=adjoint_inverse(Mc) @ (Jw1 - Jw2),
                dM=cd.d_m1 @ J1 + cd.d_m2 @ J2,
                dphi_dq=dphi_row[:6] @ J1 + dphi_row[6:] @ J2,
                boundary=cd.boundary,
            )
        )
    return packs


def collision_correction_jv(pack: _ContactDiff, v: np.ndarray) -> np.ndarray:
    """Frame-variation part of d(J_c v)/dq at fixed v (3 x nv): the relative
    twist seen from a frame moving with local twist dM dq."""
    return (motion_cross(pack.Jc6 @ v) @ pack.dM)[3:]


def collision_correction_jtl(pack: _ContactDiff, lam_c: np.ndarray) -> np.ndarray:
    """Frame-variation part of d(J_c^T lambda)/dq at fixed lambda (nv x nv).

    Adjoint of collision_correction_jv: <d(J_c^T lam) dq, v> =
    <lam, d(J_c v) dq> holds exactly."""
    y = np.concatenate([np.zeros(3), lam_c])
    return -pack.Jc6.T @ (p_operator(y) @ pack.dM)


@dataclass
class StepJacobian:
    """Analytic derivatives of one step. Config-block derivatives are
    expressed in the tangent at the new configuration; q-derivatives are
    w.r.t. the tangent of the input configuration (through integrate)."""

    dv: dict = field(default_factory=dict)
    dq: dict = field(default_factory=dict)
    dlam: dict = field(default_factory=dict)
    rank_deficient: bool = False
    boundary: bool = False
    ambiguous: bool = False


_THETAS = ("q", "v", "tau")


def step_jacobian(model: KinematicModel, state, tau, params, result, theta="all") -> StepJacobian:
    """Derivatives of (v+, q+, lambda*) w.r.t. theta in {q, v, tau, mu}.

    `result` must come from simulator.step at (state, tau, params).
    Breaking contacts contribute zero derivative rows; at the activation
    boundary this is the one-sided derivative from the inactive side."""
    thetas = _THETAS if theta == "all" else (theta,)
    want_mu = any((t == "mu") or (isinstance(t, tuple) and t[0] == "mu") for t in thetas)
    smooth = [t for t in thetas if t in _THETAS]
    if want_mu and theta != "all":
        smooth = []

    q, v = state.q, state.v
    dt = params.dt
    nv = model.nv
    v_plus = result.state.v
    contacts = result.contacts
    n = len(contacts)

    kin = compute_kinematics(model, q)
    dyn = compute_dynamics(model, kin, v)
    a_star = (v_plus - v) / dt
    dID_q, dID_v = id_state_derivatives(model, kin, dyn.inertias_world, v, a_star)

    out = StepJacobian()
    dvp = {}
    if n:
        lam = result.solution.lam
        packs = _contact_packs(model, kin, contacts, params.contact_margin)
        out.boundary = any(p.boundary for p in packs)
        out.ambiguous = bool(result.solution.ambiguous.any())
        J_c = result.J_c
        # Frozen-impulse generalized-force variation: fixed world wrench per
        # contact plus the frame-variation corrections.
        wrenches = np.zeros((model.nb, 6))
        JTL = np.zeros((nv, nv))
        for i, (frame, pack) in enumerate(zip(contacts, packs)):
            lam_c = lam[3 * i : 3 * i + 3]
            phi_w = adjoint_inverse(frame.placement).T @ np.concatenate([np.zeros(3), lam_c])
            if frame.body1 >= 0:
                wrenches[frame.body1] += phi_w
            if frame.body2 >= 0:
                wrenches[frame.body2] -= phi_w
            JTL += collision_correction_jtl(pack, lam_c)
        dJtlam = applied_wrench_q_derivative(model, kin, wrenches) + JTL

    if "q" in smooth:
        dvp["q"] = -dt * dyn.solve(dID_q) + (dyn.solve(dJtlam) if n else 0.0)
    if "v" in smooth:
        dvp["v"] = np.eye(nv) - dt * dyn.solve(dID_v)
    if "tau" in smooth:
        dvp["tau"] = dt * dyn.solve(np.eye(nv))

    if n == 0:
        for t in smooth:
            out.dv[t] = dvp[t]
            out.dlam[t] = np.zeros((0, nv))
        if want_mu:
            ncols = 1 if isinstance(theta, tuple) else len(model.pairs)
            out.dv["mu"] = np.zeros((nv, ncols))
            out.dlam["mu"] = np.zeros((0, ncols))
    else:
        rs = assemble_reduced_system(result.problem, result.solution)
        rhs = {}
        if smooth:
            dJv_plus, _ = jv_q_derivatives(model, kin, v_plus)
            kd = params.baumgarte_kd
            if kd != 0.0:
                dJv_now, _ = jv_q_derivatives(model, kin, v)
            for t in smooth:
                rhs[t] = J_c @ dvp[t]
            # Kinematic + frame variation of J_c v+ and the stabilization
            # terms, all theta = q only (tau has none, v only the K_d term).
            for i, (frame, pack) in enumerate(zip(contacts, packs)):
                Xc_inv = adjoint_inverse(frame.placement)
                b1, b2 = frame.body1, frame.body2
                if "q" in smooth:
                    dJvd = (dJv_plus[b1] if b1 >= 0 else 0.0) - (dJv_plus[b2] if b2 >= 0 else 0.0)
                    rows = (Xc_inv @ dJvd)[3:] + collision_correction_jv(pack, v_plus)
                    phi = frame.signed_distance
                    gain = (1.0 - params.baumgarte_kp * (1.0 if phi < 0.0 else 0.0)) / dt
                    rows[2] += gain * pack.dphi_dq
                    if kd != 0.0:
                        dJvd0 = (dJv_now[b1] if b1 >= 0 else 0.0) - (dJv_now[b2] if b2 >= 0 else 0.0)
                        rows -= kd * ((Xc_inv @ dJvd0)[3:] + collision_correction_jv(pack, v))
                    rhs["q"][3 * i : 3 * i + 3] += rows
                if "v" in smooth and kd != 0.0:
                    rhs["v"][3 * i : 3 * i + 3] -= kd * pack.Jc6[3:]
        for t in smooth:
            dlam_t, deficient = solve_reduced(rs, rhs[t])
            out.rank_deficient |= deficient
            out.dlam[t] = dlam_t
            out.dv[t] = dvp[t] + dyn.solve(J_c.T @ dlam_t)
        if want_mu:
            pair_index = {(p.geom_a, p.geom_b): k for k, p in enumerate(model.pairs)}
            wanted = [t[1] for t in ([theta] if isinstance(theta, tuple) else [])]
            npairs = len(model.pairs)
            cols = wanted if wanted else list(range(npairs))
            p_dir = np.zeros((3 * n, len(cols)))
            for i, frame in enumerate(contacts):
                if result.solution.modes[i] is not Mode.SLIDING:
                    continue
                k = pair_index[frame.pair]
                if k not in cols:
                    continue
                col = cols.index(k)
                mu = frame.friction
                lam_n = result.solution.lam[3 * i + 2]
                sig = result.solution.sigma[3 * i : 3 * i + 3]
                u = sig[:2] / np.hypot(sig[0], sig[1])
                p_dir[3 * i : 3 * i + 2, col] = -lam_n / (1.0 + mu * mu) * u
                p_dir[3 * i + 2, col] = -lam_n / (1.0 + mu * mu) * mu
            dlam_mu, deficient = solve_reduced(rs, result.problem.G @ p_dir)
            dlam_mu = dlam_mu + p_dir
            out.rank_deficient |= deficient
            out.dlam["mu"] = dlam_mu
            out.dv["mu"] = dyn.solve(J_c.T @ dlam_mu)

    Dq, Dd = integrate_jacobians(model, q, dt * v_plus)
    for t, dv_t in out.dv.items():
        out.dq[t] = dt * (Dd @ dv_t)
        if t == "q":
            out.dq[t] = Dq + out.dq[t]
    return out


def rhs_contact_velocity(model, state, tau, params, result, theta="q") -> np.ndarray:
    """dG lambda* + dg for one smooth theta block: the frozen-impulse
    derivative of the contact velocity sigma (3n x n_theta)."""
    if theta not in _THETAS:
        raise ValueError("theta must be one of 'q', 'v', 'tau'")
    q, v = state.q, state.v
    dt = params.dt
    contacts = result.contacts
    n = len(contacts)
    if n == 0:
        return np.zeros((0, model.nv))
    kin = compute_kinematics(model, q)
    dyn = compute_dynamics(model, kin, v)
    v_plus = result.state.v
    a_star = (v_plus - v) / dt
    lam = result.solution.lam
    packs = _contact_packs(model, kin, contacts, params.contact_margin)
    J_c = result.J_c
    if theta == "tau":
        return J_c @ (dt * dyn.solve(np.eye(model.nv)))
    if theta == "v":
        dID_v = id_state_derivatives(model, kin, dyn.inertias_world, v, a_star)[1]
        rhs = J_c @ (np.eye(model.nv) - dt * dyn.solve(dID_v))
        if params.baumgarte_kd != 0.0:
            for i, pack in enumerate(packs):
                rhs[3 * i : 3 * i + 3] -= params.baumgarte_kd * pack.Jc6[3:]
        return rhs
    dID_q = id_state_derivatives(model, kin, dyn.inertias_world, v, a_star)[0]
    wrenches = np.zeros((model.nb, 6))
    JTL = np.zeros((model.nv, model.nv))
    for i, (frame, pack) in enumerate(zip(contacts, packs)):
        lam_c = lam[3 * i : 3 * i + 3]
        phi_w = adjoint_inverse(frame.placement).T @ np.concatenate([np.zeros(3), lam_c])
        if frame.body1 >= 0:
            wrenches[frame.body1] += phi_w
        if frame.body2 >= 0:
            wrenches[frame.body2] -= phi_w
        JTL += collision_correction_jtl(pack, lam_c)
    dvp_q = -dt * dyn.solve(dID_q) + dyn.solve(applied_wrench_q_derivative(model, kin, wrenches) + JTL)
    rhs = J_c @ dvp_q
    dJv_plus, _ = jv_q_derivatives(model, kin, v_plus)
    kd = params.baumgarte_kd
    if kd != 0.0:
        dJv_now, _ = jv_q_derivatives(model, kin, v)
    for i, (frame, pack) in enumerate(zip(contacts, packs)):
        Xc_inv = adjoint_inverse(frame.placement)
        b1, b2 = frame.body1, frame.body2
        dJvd = (dJv_plus[b1] if b1 >= 0 else 0.0) - (dJv_plus[b2] if b2 >= 0 else 0.0)
        rows = (Xc_inv @ dJvd)[3:] + collision_correction_jv(pack, v_plus)
        gain = (1.0 - params.baumgarte_kp * (1.0 if frame.signed_distance < 0.0 else 0.0)) / dt
        rows[2] += gain * pack.dphi_dq
        if kd != 0.0:
            dJvd0 = (dJv_now[b1] if b1 >= 0 else 0.0) - (dJv_now[b2] if b2 >= 0 else 0.0)
            rows -= kd * ((Xc_inv @ dJvd0)[3:] + collision_correction_jv(pack, v))
        rhs[3 * i : 3 * i + 3] += rows
    return rhs
