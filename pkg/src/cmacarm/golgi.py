"""Granule/Golgi closed-loop activity control.

The granule layer turns per-cell mossy sums into non-negative outputs; a
single Golgi cell feeds back either on the granule threshold or on the
granule input gain.  Equilibria are found by damped fixed-point iteration,
and the lumped closed-form sum of active outputs is available for
cross-checking and for reading off the effective line constants that make
the layer linear in the rate-coded variable R.
"""

from dataclasses import dataclass, replace

import numpy as np


class GolgiConvergenceError(RuntimeError):
    """Raised when the granule/Golgi fixed point fails to converge."""

    def __init__(self, iterations, residual):
        super().__init__(f"Golgi loop did not converge after {iterations} "
                         f"iterations (residual {residual:.3e})")
        self.iterations = iterations
        self.residual = residual


class SparsityCalibrationError(RuntimeError):
    """Raised when threshold search cannot reach the sparsity band."""

    def __init__(self, achieved, target):
        super().__init__(f"calibration reached active fraction {achieved:.4%}"
                         f", outside [0.5x, 2x] of target {target:.4%}")
        self.achieved = achieved
        self.target = target


@dataclass(frozen=True)
class GolgiParams:
    """Constants of the granule/Golgi loop.

    mode selects the feedback site: 'threshold' shifts the granule firing
    threshold, 'gain' scales the mossy input.  sigma is the granule firing
    threshold (scalar, applied per cell).  p_syn and q_low are the upper and
    lower dendritic-tree synapse counts.
    """

    mode: str = "gain"
    K_th: float = 0.0
    K_g: float = 0.0
    G_Gr: float = 1.0
    H_U: float = 1.0
    H_L: float = 1.0
    H_Go: float = 1.0
    theta: float = 0.0
    sigma: float = 0.0
    p_syn: int = 0
    q_low: int = 1
    sparsity_target: float = 0.01

    def __post_init__(self):
        if self.mode not in ("threshold", "gain"):
            raise ValueError("mode must be 'threshold' or 'gain'")
        for name in ("G_Gr", "H_U", "H_L", "H_Go", "K_th", "K_g"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0 < self.sparsity_target < 1:
            raise ValueError("sparsity_target must be in (0, 1)")

    def to_dict(self):
        return {k: getattr(self, k) for k in
                ("mode", "K_th", "K_g", "G_Gr", "H_U", "H_L", "H_Go",
                 "theta", "sigma", "p_syn", "q_low", "sparsity_target")}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class LineParams:
    """Effective constants of the closed loop: sum Y = k1*M - k2 - k3*R."""

    k1: float
    k2: float
    k3: float


def _granule_out(params, mossy_sums, o):
    if params.mode == "gain":
        drive = (1.0 - params.K_g * o) * mossy_sums - params.sigma
    else:
        drive = mossy_sums - params.sigma - params.K_th * o
    return np.maximum(0.0, drive * params.G_Gr)


def _golgi_rate(params, y_sum, r_sum):
    return max(0.0, (params.H_U * y_sum + params.H_L * r_sum
                     + params.theta) * params.H_Go)


def golgi_fixed_point(params, mossy_sums, r_sum, relax=None,
                      tol=1e-12, max_iter=10000):
    """Equilibrium of the granule/Golgi loop by damped iteration.

    Returns (Y dense vector, O).  Raises GolgiConvergenceError when |dO|
    never drops below tol (e.g. in divergent high-gain regimes).  The
    relaxation factor defaults to 1/(1 + loop gain), estimated from the
    open-loop active count, so high-gain but stable loops still converge.
    """
    mossy_sums = np.asarray(mossy_sums, dtype=float)
    if relax is None:
        m_est = np.count_nonzero(_granule_out(params, mossy_sums, 0.0))
        k_fb = params.K_g if params.mode == "gain" else params.K_th
        gain_est = params.G_Gr * k_fb * params.H_U * params.H_Go * (
            mossy_sums[mossy_sums > params.sigma].sum()
            if params.mode == "gain" else m_est)
        relax = min(0.5, 1.0 / (1.0 + gain_est))
    o = _golgi_rate(params, 0.0, r_sum)
    for _ in range(max_iter):
        y = _granule_out(params, mossy_sums, o)
        o_new = _golgi_rate(params, y.sum(), r_sum)
        step = o_new - o
        o = o + relax * step
        if abs(step) < tol:
            y = _granule_out(params, mossy_sums, o)
            return y, o
    raise GolgiConvergenceError(max_iter, abs(step))


def _as_sparse(y):
    from .encoding import SparseActivation
    idx = np.flatnonzero(y)
    return SparseActivation(idx, y[idx], len(y))


def golgi_output_gain(params, mossy_sums, r_sum):
    """Granule outputs under automatic-gain-control feedback."""
    if params.mode != "gain":
        raise ValueError("params.mode must be 'gain'")
    y, o = golgi_fixed_point(params, mossy_sums, r_sum)
    return _as_sparse(y), o


def golgi_output_threshold(params, mossy_sums, r_sum):
    """Granule outputs under threshold-shift feedback."""
    if params.mode != "threshold":
        raise ValueError("params.mode must be 'threshold'")
    y, o = golgi_fixed_point(params, mossy_sums, r_sum)
    return _as_sparse(y), o


def loop_gain(params, m):
    return params.G_Gr * params.K_g * params.H_U * params.H_Go * m


def closed_loop_sum(params, mossy_sums, r_sum, m=None):
    """Closed-form sum of the m active granule outputs.

    Evaluates the lumped equilibrium expression: the input-driven term minus
    the R-driven term, both divided by (1 + G_Gr*K_g*H_U*H_Go*m).  The
    expression mixes the threshold constant (on the spontaneous-rate part)
    with the gain constant (in the loop gain), kept in that historical form;
    it coincides with the gain-mode fixed point for unit basis inputs when
    K_th equals K_g.
    """
    mossy_sums = np.asarray(mossy_sums, dtype=float)
    active = mossy_sums[mossy_sums > params.sigma]
    if m is None:
        m = len(active)
    denom = 1.0 + loop_gain(params, m)
    drive = params.G_Gr * np.sum(
        active - params.sigma - params.K_th * params.H_Go * params.theta)
    r_term = (params.G_Gr * params.K_g * params.H_U * params.H_Go * m
              * (params.H_L / params.H_U) * r_sum) if params.H_U > 0 else 0.0
    return (drive - r_term) / denom


def line_params(params, m, mossy_level):
    """Constants (k1, k2, k3) of sum Y = k1*M - k2 - k3*R at an operating
    point with m active cells at the given per-cell mossy level."""
    if m <= 0:
        raise ValueError("m must be positive")
    denom = 1.0 + loop_gain(params, m)
    k1 = params.G_Gr * m / denom
    k2 = params.G_Gr * m * (params.sigma
                            + params.K_th * params.H_Go * params.theta) / denom
    k3 = params.G_Gr * params.K_g * params.H_Go * params.H_L * m / denom
    return LineParams(k1, k2, k3)


def active_fraction(layout, params, q):
    """Fraction of cells active after granule thresholding at rest (R=0)."""
    from .encoding import encode_position
    act = encode_position(layout, q)
    y, _ = golgi_fixed_point(params, act.dense(), 0.0)
    return np.count_nonzero(y) / layout.size


def calibrate_sparsity(layout, params, sample_states, max_steps=60):
    """Search the granule threshold so the mean active fraction over the
    samples lands within a factor of two of params.sparsity_target.

    Returns updated GolgiParams; raises SparsityCalibrationError when the
    band is unreachable (reports the closest achieved fraction).
    """
    if len(sample_states) == 0:
        raise ValueError("sample_states must be nonempty")
    target = params.sparsity_target

    def mean_fraction(sig):
        cand = replace(params, sigma=sig)
        return np.mean([active_fraction(layout, cand, q)
                        for q in sample_states]), cand

    frac0, cand0 = mean_fraction(0.0)
    if 0.5 * target <= frac0 <= 2.0 * target:
        return cand0
    if frac0 < 0.5 * target:
        # thresholding only prunes; nothing to relax below sigma = 0
        raise SparsityCalibrationError(frac0, target)
    lo, hi = 0.0, 1.0
    frac_hi, _ = mean_fraction(hi)
    while frac_hi > target and hi < 1e6:
        hi *= 2.0
        frac_hi, _ = mean_fraction(hi)
    best_frac, best = frac0, cand0
    for _ in range(max_steps):
        mid = 0.5 * (lo + hi)
        frac, cand = mean_fraction(mid)
        if abs(frac - target) < abs(best_frac - target):
            best_frac, best = frac, cand
        if 0.5 * target <= frac <= 2.0 * target:
            return cand
        if frac > target:
            lo = mid
        else:
            hi = mid
    raise SparsityCalibrationError(best_frac, target)
