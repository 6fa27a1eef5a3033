"""
Exponential decay fit
=====================

Weighted fit of ``p(t) = A * exp(-t / T1) + B`` to down-spin probabilities.

The solver is scipy's Levenberg-Marquardt (``least_squares(method='lm')``).
One-standard-error uncertainties come from the pseudo-inverse of ``J^T J``
at the solution, scaled by the reduced chi-square, the same convention
as ``curve_fit(absolute_sigma=False)``. Parameter directions the data do
not constrain get an infinite uncertainty.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from spinreadout.errors import FitError

log = logging.getLogger(__name__)

MIN_POINTS = 4
MAX_EVALUATIONS = 2000
TOLERANCE = 1e-12


def exp_decay(t, a, t1, b):
    """``a * exp(-t / |t1|) + b``; T1 enters through its magnitude."""
    return a * np.exp(-np.asarray(t, dtype=np.float64) / abs(t1)) + b


def binomial_sigma(p, n):
    """
    Standard error of an observed fraction ``p`` out of ``n`` shots.

    ``p`` is floored to ``[0.5 / n, 1 - 0.5 / n]`` so points at 0 or 1 keep a
    finite, non-zero weight.
    """
    if n < 1:
        raise FitError('Need at least one shot per point, got {}'.format(n))
    p = np.clip(np.asarray(p, dtype=np.float64), 0.5 / n, 1.0 - 0.5 / n)
    return np.sqrt(p * (1.0 - p) / n)


@dataclass(frozen=True)
class FitResult:
    t1_us: float
    amplitude_a: float
    offset_b: float
    sigma_t1: float
    sigma_a: float
    sigma_b: float
    chi2_reduced: float = float('nan')

    def to_dict(self):
        return {
            'A': self.amplitude_a, 'sigma_A': self.sigma_a,
            'T1_us': self.t1_us, 'sigma_T1_us': self.sigma_t1,
            'B': self.offset_b, 'sigma_B': self.sigma_b,
        }


def initial_guess(t, p):
    """
    Starting point: ``B = min(p)``, ``A = max(p) - B`` and T1 from a straight
    line through ``log(p - B)``; half the time span when that line is not
    decreasing.
    """
    b = float(np.min(p))
    a = float(np.max(p)) - b
    t1 = (t[-1] - t[0]) / 2.0
    above = p - b > 0
    if np.count_nonzero(above) >= 2:
        slope = np.polyfit(t[above], np.log(p[above] - b), 1)[0]
        if slope < 0 and math.isfinite(slope):
            t1 = -1.0 / slope
    return np.array([a, t1, b])


def _covariance(jac, residuals, n_params):
    _, s, vt = np.linalg.svd(jac, full_matrices=False)
    cutoff = np.finfo(float).eps * max(jac.shape) * (s[0] if s.size else 0.0)
    dof = residuals.size - n_params
    if s.size < n_params or np.any(s <= cutoff) or dof <= 0:
        return np.full((n_params, n_params), np.inf), float('nan')
    chi2_reduced = float(np.sum(residuals ** 2) / dof)
    cov = (vt.T / s ** 2) @ vt
    return cov * chi2_reduced, chi2_reduced


def fit_exponential(t, p, sigma_p, max_evaluations=MAX_EVALUATIONS):
    """
    Fit ``A * exp(-t / T1) + B`` to probabilities with known per-point errors.

    :param t: wait times in us, strictly increasing, at least four points
    :param p: observed probabilities
    :param sigma_p: per-point standard errors, all positive
    :param int max_evaluations: function evaluation cap of the solver
    :return FitResult: parameters and one-standard-error uncertainties
    :raises FitError: on invalid input or when the solver does not converge;
        ``last_iterate`` holds ``(A, T1, B)`` where it stopped
    """
    t = np.asarray(t, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    sigma_p = np.asarray(sigma_p, dtype=np.float64)
    if not (t.shape == p.shape == sigma_p.shape) or t.ndim != 1:
        raise FitError('t, p and sigma_p must be 1-D arrays of equal length')
    if t.size < MIN_POINTS:
        raise FitError('Need at least {} points, got {}'.format(MIN_POINTS, t.size))
    if np.any(np.diff(t) <= 0):
        raise FitError('Wait times must be strictly increasing')
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(sigma_p)) and np.all(sigma_p > 0)):
        raise FitError('Probabilities must be finite and errors positive')

    def residuals(params):
        return (exp_decay(t, *params) - p) / sigma_p

    start = initial_guess(t, p)
    result = least_squares(residuals, start, method='lm', xtol=TOLERANCE, ftol=TOLERANCE, gtol=TOLERANCE,
                           max_nfev=max_evaluations)
    a, t1, b = result.x
    if result.status <= 0 or not np.all(np.isfinite(result.x)):
        raise FitError('Fit did not converge: {}'.format(result.message), last_iterate=tuple(result.x))

    cov, chi2_reduced = _covariance(result.jac, result.fun, 3)
    sigma = np.sqrt(np.abs(np.diag(cov)))
    log.debug('Fit A={:.4f} T1={:.3f} B={:.4f} after {} evaluations'.format(a, abs(t1), b, result.nfev))
    return FitResult(
        t1_us=float(abs(t1)),
        amplitude_a=float(a),
        offset_b=float(b),
        sigma_t1=float(sigma[1]),
        sigma_a=float(sigma[0]),
        sigma_b=float(sigma[2]),
        chi2_reduced=chi2_reduced,
    )
