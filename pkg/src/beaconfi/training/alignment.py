"""Closed-form rigid alignment of a PDR trajectory onto a Wi-Fi trajectory, and the costs built on it."""

from dataclasses import dataclass

import numpy as np

from ..autodiff import ops
from ..autodiff.tensor import Tensor

# rotation by +90 degrees
I2_TILDE = np.array([[0.0, -1.0], [1.0, 0.0]])


def rotation(phi):
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, -s], [s, c]])


@dataclass
class AlignmentResult:
    phi_star: float
    omega_star: np.ndarray
    cost: float
    gamma: float
    gamma_tilde: float

    def apply(self, P):
        """Map PDR points into the Wi-Fi frame."""
        return np.asarray(P, dtype=float) @ rotation(self.phi_star).T + self.omega_star


def _as_pair(Z, P):
    Z = np.asarray(Z.data if isinstance(Z, Tensor) else Z, dtype=float)
    P = np.asarray(P, dtype=float)
    if Z.ndim != 2 or Z.shape[1] != 2 or Z.shape != P.shape:
        raise ValueError(f"Z and P must both be (K, 2); got {Z.shape} and {P.shape}")
    if len(Z) < 2:
        raise ValueError("alignment needs K >= 2 points")
    if not (np.all(np.isfinite(Z)) and np.all(np.isfinite(P))):
        raise ValueError("trajectories must be finite")
    return Z, P


def optimal_transform(Z, P):
    """Rotation and offset minimizing sum_k |z_k - (R(phi) p_k + omega)|^2.

    With centered points, gamma = -sum z.p and gamma_tilde = -sum z.(I~ p);
    the rotation-dependent part of the cost is 2 (gamma cos(phi) +
    gamma_tilde sin(phi)), minimized at phi = atan2(-gamma_tilde, -gamma).
    Centering gives the same values as the raw-sum form with less
    cancellation. If P is a single repeated point, phi = 0.
    """
    Z, P = _as_pair(Z, P)
    K = len(Z)
    zc = Z - Z.mean(axis=0)
    pc = P - P.mean(axis=0)
    gamma = -float(np.sum(zc * pc))
    gamma_t = -float(np.sum(zc * (pc @ I2_TILDE.T)))
    amp = np.hypot(gamma, gamma_t)
    phi = float(np.arctan2(-gamma_t, -gamma)) if amp > 0 else 0.0
    omega = (Z.sum(axis=0) - rotation(phi) @ P.sum(axis=0)) / K
    cost = float(np.sum(zc * zc) + np.sum(pc * pc) - 2.0 * amp)
    return AlignmentResult(phi, omega, max(cost, 0.0), gamma, gamma_t)


def raw_gammas(Z, P):
    """Gamma terms from uncentered sums, as written in the derivation."""
    Z, P = _as_pair(Z, P)
    K = len(Z)
    sz, sp = Z.sum(axis=0), P.sum(axis=0)
    gamma = sz @ sp / K - np.sum(Z * P)
    gamma_t = sz @ (I2_TILDE @ sp) / K - np.sum(Z * (P @ I2_TILDE.T))
    return float(gamma), float(gamma_t)


def closed_form_cost(Z, P):
    """Minimum cost from uncentered sums: |z|^2 + |p|^2 terms minus centroids minus 2 sqrt(g^2 + g~^2)."""
    Z, P = _as_pair(Z, P)
    K = len(Z)
    g, gt = raw_gammas(Z, P)
    return float(np.sum(Z * Z) + np.sum(P * P) - Z.sum(axis=0) @ Z.sum(axis=0) / K
                 - P.sum(axis=0) @ P.sum(axis=0) / K - 2.0 * np.hypot(g, gt))


def alignment_residual(Z, P, phi, omega):
    """Direct evaluation of sum_k |z_k - R(phi) p_k - omega|^2."""
    Z, P = _as_pair(Z, P)
    r = Z - P @ rotation(phi).T - np.asarray(omega, dtype=float)
    return float(np.sum(r * r))


def sensor_cost(Z, P):
    """Residual after optimal alignment.

    For a Tensor ``Z`` the result is a Tensor; the optimal rotation and
    offset are held constant on the tape, which gives the exact gradient
    because the cost is stationary in them at the optimum.
    """
    res = optimal_transform(Z, P)
    if not isinstance(Z, Tensor):
        return res.cost
    target = res.apply(P)
    diff = Z - target
    return ops.reduce_sum(ops.square(diff))


def geometric_cost(Z, epoch_index, ap_positions, d_hat):
    """sum over measurement rows of (|z_k - z_n| - d_n)^2.

    Row i belongs to epoch ``epoch_index[i]``, AP at ``ap_positions[i]``.
    """
    epoch_index = np.asarray(epoch_index, dtype=int)
    ap_positions = np.asarray(ap_positions, dtype=float).reshape(-1, 2)
    if isinstance(Z, Tensor) or isinstance(d_hat, Tensor):
        zk = ops.getitem(Z, epoch_index)
        r = ops.sqrt(ops.reduce_sum(ops.square(zk - ap_positions), axis=1))
        return ops.reduce_sum(ops.square(r - d_hat))
    Z = np.asarray(Z, dtype=float)
    r = np.linalg.norm(Z[epoch_index] - ap_positions, axis=1)
    return float(np.sum((r - np.asarray(d_hat, dtype=float)) ** 2))


def unified_cost(Z, P, epoch_index, ap_positions, d_hat, mu1=1.0, mu2=1.0):
    """mu1 * sensor cost + mu2 * geometric cost; a zero weight skips its term."""
    if mu1 < 0 or mu2 < 0:
        raise ValueError("cost weights must be non-negative")
    terms = []
    if mu1 > 0:
        terms.append(sensor_cost(Z, P) * mu1)
    if mu2 > 0:
        terms.append(geometric_cost(Z, epoch_index, ap_positions, d_hat) * mu2)
    if not terms:
        return Tensor(0.0) if isinstance(Z, Tensor) else 0.0
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total
