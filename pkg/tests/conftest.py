"""Shared model builders and jacobian-comparison helpers.

All finite differencing in the suite goes through diffcontact.fd, the same
oracle the CLI fdcheck subcommand uses.
"""
import numpy as np
import pytest

from diffcontact.collision import Box, Halfspace, Sphere
from diffcontact.model import (
    BodyInertia,
    FrictionPair,
    Geometry,
    JointSpec,
    KinematicModel,
)
from diffcontact.simulator import SimParams, SimState
from diffcontact.spatial import Placement


def free_placement():
    return Placement.identity()


def translation(t):
    return Placement(np.eye(3), np.asarray(t, dtype=float))


def cube_model(mu=1.0, half=0.1, mass=1.0):
    """Free box above a ground halfspace."""
    inertia = np.diag([mass * (2 * half) ** 2 / 6.0] * 3)
    joints = [JointSpec("free", -1, Placement.identity(), None)]
    inertias = [BodyInertia(mass, np.zeros(3), inertia)]
    geoms = [
        Geometry(0, Box(np.array([half, half, half])), Placement.identity()),
        Geometry(-1, Halfspace(np.array([0.0, 0.0, 1.0]), 0.0), Placement.identity()),
    ]
    return KinematicModel(joints, inertias, geoms, [FrictionPair(0, 1, mu)])


def sphere_model(mu=0.5, radius=0.1, mass=1.0):
    inertia = np.diag([0.4 * mass * radius**2] * 3)
    joints = [JointSpec("free", -1, Placement.identity(), None)]
    inertias = [BodyInertia(mass, np.zeros(3), inertia)]
    geoms = [
        Geometry(0, Sphere(radius), Placement.identity()),
        Geometry(-1, Halfspace(np.array([0.0, 0.0, 1.0]), 0.0), Placement.identity()),
    ]
    return KinematicModel(joints, inertias, geoms, [FrictionPair(0, 1, mu)])


def chain_model(n_links=3, mu=0.8, foot_links=None, base_height=0.09998):
    """Fixed-base revolute-y chain along x with spheres at selected link
    tips touching the ground."""
    joints, inertias = [], []
    for i in range(n_links):
        placement = translation([0, 0, base_height]) if i == 0 else translation([0.3, 0, 0])
        joints.append(JointSpec("revolute", i - 1, placement, np.array([0.0, 1.0, 0.0])))
        inertias.append(BodyInertia(0.5, np.array([0.15, 0.0, 0.0]),
                                    np.diag([0.001, 0.004, 0.004])))
    if foot_links is None:
        foot_links = [n_links - 1]
    geoms = [Geometry(b, Sphere(0.1), translation([0.3, 0, 0])) for b in foot_links]
    geoms.append(Geometry(-1, Halfspace(np.array([0.0, 0.0, 1.0]), 0.0),
                          Placement.identity()))
    pairs = [FrictionPair(k, len(geoms) - 1, mu) for k in range(len(foot_links))]
    return KinematicModel(joints, inertias, geoms, pairs)


def fixed_chain_no_contact(n_links=2):
    """Fully actuated revolute chain with no collision geometry."""
    joints, inertias = [], []
    for i in range(n_links):
        placement = Placement.identity() if i == 0 else translation([0.4, 0, 0])
        joints.append(JointSpec("revolute", i - 1, placement, np.array([0.0, 1.0, 0.0])))
        inertias.append(BodyInertia(1.2, np.array([0.2, 0.0, 0.0]),
                                    np.diag([0.002, 0.01, 0.01])))
    return KinematicModel(joints, inertias, [], [])


def cube_state(model, z=0.09998, v=None):
    q = model.neutral_configuration()
    q[2] = z
    vel = np.zeros(model.nv) if v is None else np.asarray(v, dtype=float)
    return SimState(q, vel)


def tight_params(**overrides):
    """Params tight enough that FD noise (~ncp_tol/eps) stays well under
    the comparison tolerances."""
    kw = dict(ncp_tol=1e-13, ncp_max_iters=20000)
    kw.update(overrides)
    return SimParams(**kw)


def jacobian_errors(jac, fd, thetas, include_lam=True):
    """Per-block max relative error, denominator max(1, |FD|_inf)."""
    errs = {}
    for blk in ("dv", "dq", "dlam"):
        if blk == "dlam" and not include_lam:
            continue
        amat, fmat = getattr(jac, blk), getattr(fd, blk)
        for t in thetas:
            if t not in amat or amat[t].size == 0:
                continue
            denom = max(1.0, float(np.abs(fmat[t]).max()))
            errs[f"{blk}/{t}"] = float(np.abs(amat[t] - fmat[t]).max()) / denom
    return errs


def worst_error(jac, fd, thetas, include_lam=True):
    errs = jacobian_errors(jac, fd, thetas, include_lam)
    return max(errs.values()) if errs else 0.0


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
