"""Exact Lagrange-Euler dynamics for planar serial revolute arms.

Provides the analytic inertia matrix, Christoffel-symbol Coriolis terms,
gravity split into per-axis components, Coulomb/viscous friction, the planar
end-effector Jacobian, and inverse/forward dynamics.  All torques are also
available as a per-term breakdown so each term family can serve as a
training target on its own.

Angle convention: joint angles are relative; q = 0 lays every link along the
+x axis of the base frame.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class LinkParams:
    """One rigid link of a planar revolute chain."""

    mass: float                 # kg
    length: float               # m, pivot to next pivot
    com_distance: float         # m, pivot to center of mass
    inertia_com: float          # kg m^2 about the COM, out-of-plane axis
    fric_dynamic: float = 0.0   # N m s/rad, viscous coefficient
    fric_static: float = 0.0    # N m, Coulomb magnitude

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if self.length <= 0:
            raise ValueError("length must be positive")
        if not 0 <= self.com_distance <= self.length:
            raise ValueError("com_distance must lie within [0, length]")
        if self.inertia_com < 0:
            raise ValueError("inertia_com must be non-negative")
        if self.fric_dynamic < 0 or self.fric_static < 0:
            raise ValueError("friction coefficients must be non-negative")


@dataclass(frozen=True)
class RobotModel:
    """Planar serial revolute arm: ordered links plus gravity orientation.

    base_tilt rotates the gravity vector in the working plane; tilt 0 means
    gravity points along -y of the base frame.
    """

    links: tuple
    gravity_mag: float = 9.81
    base_tilt: float = 0.0

    def __post_init__(self):
        if len(self.links) < 1:
            raise ValueError("model needs at least one link")
        object.__setattr__(self, "links", tuple(self.links))

    @property
    def n(self):
        return len(self.links)

    @property
    def gravity_vec(self):
        gx = self.gravity_mag * np.sin(self.base_tilt)
        gy = -self.gravity_mag * np.cos(self.base_tilt)
        return np.array([gx, gy])


@dataclass(frozen=True)
class JointState:
    """Joint positions, velocities, and accelerations."""

    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        qd = np.asarray(self.qd, dtype=float)
        qdd = np.asarray(self.qdd, dtype=float)
        if not (q.shape == qd.shape == qdd.shape) or q.ndim != 1:
            raise ValueError("q, qd, qdd must be 1-d vectors of equal length")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qd", qd)
        object.__setattr__(self, "qdd", qdd)


@dataclass(frozen=True)
class ExternalWrench:
    """Planar force/torque applied at the end-effector, base frame."""

    fx: float = 0.0
    fy: float = 0.0
    mz: float = 0.0

    def as_vector(self):
        return np.array([self.fx, self.fy, self.mz])


@dataclass
class TorqueBreakdown:
    """Per-term torque contributions for every joint.

    Row sums of all fields reproduce the total inverse-dynamics torque.
    """

    inertial: np.ndarray      # (n, n): d_km * qdd_m
    coriolis: np.ndarray      # (n, n, n): Gamma_kij * qd_i * qd_j
    gravity: np.ndarray       # (n, 2): (G_k1*gx, G_k2*gy)
    fric_dyn: np.ndarray      # (n,)
    fric_stat: np.ndarray     # (n,)
    external: np.ndarray      # (n, 3): J^T column * wrench component
    total: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.total is None:
            self.total = (self.inertial.sum(axis=1)
                          + self.coriolis.sum(axis=(1, 2))
                          + self.gravity.sum(axis=1)
                          + self.fric_dyn + self.fric_stat
                          + self.external.sum(axis=1))


def _segments(model, q):
    """Chain geometry helpers for a configuration q.

    Returns (theta, pivots, coms, seg) where seg[k] lists the vectors whose
    cumulative sum gives the COM of link k; entry j of seg[k] rotates with
    absolute angle theta[j].
    """
    theta = np.cumsum(q)
    e = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    n = model.n
    pivots = np.zeros((n + 1, 2))
    for k in range(n):
        pivots[k + 1] = pivots[k] + model.links[k].length * e[k]
    coms = np.array([pivots[k] + model.links[k].com_distance * e[k]
                     for k in range(n)])
    seg = []
    for k in range(n):
        vecs = [model.links[j].length * e[j] for j in range(k)]
        vecs.append(model.links[k].com_distance * e[k])
        seg.append(np.array(vecs))
    return theta, pivots, coms, seg


def _perp(v):
    """Rotate 2-vectors by +90 degrees (z cross v)."""
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def _com_jacobians(model, q):
    """J[k, i] = d c_k / d q_i as 2-vectors, zero for i > k."""
    n = model.n
    _, _, _, seg = _segments(model, q)
    J = np.zeros((n, n, 2))
    for k in range(n):
        perp = _perp(seg[k])
        for i in range(k + 1):
            J[k, i] = perp[i:].sum(axis=0)
    return J


def inertia_matrix(model, q):
    """Symmetric positive-definite inertia matrix D(q)."""
    q = np.asarray(q, dtype=float)
    n = model.n
    J = _com_jacobians(model, q)
    D = np.zeros((n, n))
    for k, link in enumerate(model.links):
        D += link.mass * np.einsum("id,jd->ij", J[k], J[k])
        D[:k + 1, :k + 1] += link.inertia_com
    return D


def inertia_matrix_gradient(model, q):
    """dD[l, i, j] = partial D_ij / partial q_l, assembled analytically."""
    q = np.asarray(q, dtype=float)
    n = model.n
    _, _, _, seg = _segments(model, q)
    J = _com_jacobians(model, q)
    dD = np.zeros((n, n, n))
    for k, link in enumerate(model.links):
        # H[i, a] = d^2 c_k / dq_i dq_a = -sum of segments with index >= max(i, a)
        H = np.zeros((k + 1, k + 1, 2))
        for i in range(k + 1):
            for a in range(k + 1):
                H[i, a] = -seg[k][max(i, a):].sum(axis=0)
        for l in range(k + 1):
            dD[l, :k + 1, :k + 1] += link.mass * (
                np.einsum("id,jd->ij", H[:, l], J[k, :k + 1])
                + np.einsum("id,jd->ij", J[k, :k + 1], H[:, l]))
    return dD


def christoffel_tensor(model, q):
    """Gamma[k, i, j] with h_k = sum_ij Gamma_kij qd_i qd_j.

    Built from the gradient of D, which makes Gamma_kkk = 0 structurally
    for planar chains (D_kk does not depend on q_k).
    """
    dD = inertia_matrix_gradient(model, q)
    # Gamma_kij = (dD_kj/dq_i + dD_ki/dq_j - dD_ij/dq_k) / 2
    return (dD.transpose(1, 0, 2) + dD.transpose(2, 0, 1) - dD) / 2.0


def coriolis_terms(model, q, qd):
    """Velocity-product torques: returns (h vector, per-term tensor)."""
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    gamma = christoffel_tensor(model, q)
    terms = gamma * qd[None, :, None] * qd[None, None, :]
    return terms.sum(axis=(1, 2)), terms


def gravity_terms(model, q):
    """Gravity torque split by gravity-vector component.

    Returns (comps, G) with comps[k] = (G_k1*gx, G_k2*gy) and
    G = comps.sum(axis=1) equal to the potential-energy gradient.
    """
    q = np.asarray(q, dtype=float)
    J = _com_jacobians(model, q)
    gx, gy = model.gravity_vec
    masses = np.array([link.mass for link in model.links])
    # U = -sum_k m_k g . c_k  =>  G_k = -sum_m m_m g . dc_m/dq_k
    coef_x = -np.einsum("m,mk->k", masses, J[:, :, 0])
    coef_y = -np.einsum("m,mk->k", masses, J[:, :, 1])
    comps = np.stack([coef_x * gx, coef_y * gy], axis=1)
    return comps, comps.sum(axis=1)


def potential_energy(model, q):
    q = np.asarray(q, dtype=float)
    _, _, coms, _ = _segments(model, q)
    g = model.gravity_vec
    return -sum(link.mass * coms[k] @ g for k, link in enumerate(model.links))


def friction_torques(model, qd):
    """Viscous and Coulomb friction per joint; sign(0) = 0."""
    qd = np.asarray(qd, dtype=float)
    fd = np.array([link.fric_dynamic for link in model.links])
    fs = np.array([link.fric_static for link in model.links])
    return fd * qd, fs * np.sign(qd)


def end_effector_position(model, q):
    """Chain tip position in the base frame."""
    q = np.asarray(q, dtype=float)
    _, pivots, _, _ = _segments(model, q)
    return pivots[model.n]


def end_effector_jacobian(model, q):
    """3 x n planar Jacobian (vx, vy, wz) of the chain tip."""
    q = np.asarray(q, dtype=float)
    n = model.n
    _, pivots, _, _ = _segments(model, q)
    tip = pivots[n]
    J = np.ones((3, n))
    arms = _perp(tip[None, :] - pivots[:n])
    J[0] = arms[:, 0]
    J[1] = arms[:, 1]
    return J


def jacobian_wrench_torques(model, q, wrench):
    """Joint torques from an end-effector wrench.

    Returns (comps, tau_ext): comps[k, c] is J^T[k, c] * wrench[c], and
    tau_ext = comps.sum(axis=1) = J^T w.
    """
    J = end_effector_jacobian(model, q)
    w = wrench.as_vector()
    comps = J.T * w[None, :]
    return comps, comps.sum(axis=1)


def term_breakdown(model, state, wrench=None):
    """Every Eq-of-motion term family reported separately."""
    wrench = wrench or ExternalWrench()
    D = inertia_matrix(model, state.q)
    _, cor = coriolis_terms(model, state.q, state.qd)
    grav, _ = gravity_terms(model, state.q)
    fd, fs = friction_torques(model, state.qd)
    ext, _ = jacobian_wrench_torques(model, state.q, wrench)
    return TorqueBreakdown(inertial=D * state.qdd[None, :], coriolis=cor,
                           gravity=grav, fric_dyn=fd, fric_stat=fs,
                           external=ext)


def inverse_dynamics(model, state, wrench=None):
    """Joint torques that realize the given state (Lagrange-Euler)."""
    return term_breakdown(model, state, wrench).total


def forward_dynamics(model, q, qd, tau, wrench=None):
    """Joint accelerations produced by tau at (q, qd)."""
    wrench = wrench or ExternalWrench()
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    tau = np.asarray(tau, dtype=float)
    D = inertia_matrix(model, q)
    h, _ = coriolis_terms(model, q, qd)
    _, G = gravity_terms(model, q)
    fd, fs = friction_torques(model, qd)
    _, ext = jacobian_wrench_torques(model, q, wrench)
    return np.linalg.solve(D, tau - h - G - fd - fs - ext)
