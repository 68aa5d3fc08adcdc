"""Linear and thresholded needlet density estimates and L^p discrepancies."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .harmonics import FOUR_PI, HarmonicCoefficients

SUPPORTED_NORMS = ("1", "2", "inf")


@dataclass(frozen=True)
class ThresholdRule:
    """Hard-threshold multipliers: keep beta_jk when |beta| exceeds
    lam * sqrt(log n) * sigma_jk and the occupancy delta_jk exceeds
    rho * log n (natural logs)."""

    lam: float = 1.0
    rho: float = 1.0

    def __post_init__(self):
        if not (self.lam > 0 and math.isfinite(self.lam)) or not (self.rho > 0 and math.isfinite(self.rho)):
            raise ValueError("threshold multipliers must be positive and finite")


@dataclass
class DensityEstimate:
    """Band-limited density: constant 1/(4*pi) plus needlet content.

    ``coeffs`` is the full harmonic representation (constant included).
    ``provenance`` records how it was built; for thresholded estimates it
    carries per-scale survivor counts.
    """

    coeffs: HarmonicCoefficients
    provenance: dict

    def values(self, grid):
        return grid.synthesis(self.coeffs)

    def integral(self):
        return float(self.coeffs.c[0, 0]) * np.sqrt(FOUR_PI)


def _needlet_band_alm(frame, j, beta, L, mask=None):
    """Harmonic coefficients of sum_k beta_jk psi_jk via the scale grid.

    The weighted point measure sum_k lambda_jk (beta_jk / sqrt(lambda_jk))
    delta_{xi_jk} analysed on the scale grid and smoothed by sqrt(b) equals
    the needlet sum exactly (the needlets are polynomials of the grid's
    exactness class).
    """
    sd = frame.scales[j]
    vals = beta if mask is None else beta * mask
    samples = vals / sd.sqrt_lambda()
    raw = sd.grid.analysis(samples, min(sd.lmax, L))
    filt = sd.sqrt_b[: raw.L + 1]
    return raw.filtered(filt).padded(L)


def linear_estimate(coeffs, frame, J):
    """Linear needlet estimate 1/(4*pi) + sum_{j<=J} sum_k beta_jk psi_jk."""
    if J > frame.J_max:
        raise ValueError("J exceeds the frame's maximum scale")
    L = frame.scales[J].lmax
    alm = HarmonicCoefficients.constant(1.0 / FOUR_PI, L)
    for j in range(J + 1):
        alm = alm + _needlet_band_alm(frame, j, coeffs.beta[j], L)
    return DensityEstimate(alm, {"kind": "linear", "J": int(J)})


def linear_estimate_lowpass(frame, event_alm, J):
    """Same estimate computed as one smooth low-pass filter applied to the
    event-map multipoles (transfer function sum_{j<=J} b(B^-j l))."""
    L = frame.scales[J].lmax
    h = frame.window.lowpass_table(J, L)
    alm = event_alm.padded(max(L, event_alm.L)) if event_alm.L < L else event_alm
    filt = np.zeros(alm.L + 1)
    filt[: L + 1] = h
    return DensityEstimate(alm.filtered(filt).padded(L), {"kind": "linear-lowpass", "J": int(J)})


def plugin_jstar(n, rho):
    """floor(0.5 * log2(n / (rho * ln n))) -- the thresholded estimate's
    default finest scale."""
    return math.floor(0.5 * math.log2(n / (rho * math.log(n))))


def plugin_estimate(coeffs, frame, rule, n, J=None):
    """Hard-thresholded estimate over scales 1..J.

    Keeps beta_jk when |beta_jk| > lam*sqrt(ln n)*sigma_jk and
    delta_jk > rho*ln n.  When the default J (see :func:`plugin_jstar`)
    falls below 1 the estimate degenerates to the constant density and is
    flagged in the provenance.
    """
    if n < 2:
        raise ValueError("thresholded estimate requires n >= 2")
    if J is None:
        J = plugin_jstar(n, rule.rho)
    if J < 1:
        alm = HarmonicCoefficients.constant(1.0 / FOUR_PI, 0)
        return DensityEstimate(alm, {"kind": "plugin", "J": int(J), "degenerate": True, "survivors": []})
    if J > frame.J_max:
        raise ValueError("J exceeds the frame's maximum scale")
    logn = math.log(n)
    L = frame.scales[J].lmax
    alm = HarmonicCoefficients.constant(1.0 / FOUR_PI, L)
    survivors = []
    for j in range(1, J + 1):
        mask = plugin_mask(coeffs, j, rule, logn)
        survivors.append(int(mask.sum()))
        if mask.any():
            alm = alm + _needlet_band_alm(frame, j, coeffs.beta[j], L, mask=mask)
    return DensityEstimate(alm, {"kind": "plugin", "J": int(J), "degenerate": False, "survivors": survivors})


def plugin_mask(coeffs, j, rule, logn):
    """Survival mask of the hard-threshold rule at scale j.

    sigma2 stores the variance of the per-event needlet values, so the
    standard error of their mean beta_jk is sigma/sqrt(n); the coefficient
    threshold is lam * sqrt(log n / n) * sigma, paired with the occupancy
    condition delta_jk > rho * log n.
    """
    n = coeffs.n
    beta = coeffs.beta[j]
    sigma = np.sqrt(coeffs.sigma2[j])
    return (np.abs(beta) > rule.lam * np.sqrt(logn / n) * sigma) & (coeffs.delta[j] > rule.rho * logn)


def lp_distance(values, g_values, p, grid):
    """L^p distance between two fields sampled on a quadrature grid.

    ``values`` may be a DensityEstimate (synthesized on the grid) or an
    array of node samples.  p is one of "1", "2", "inf" (integers accepted).
    For band-limited inputs and p = 2 the quadrature is exact; for p = 1
    and infinity the grid acts as a fine approximation mesh.
    """
    if isinstance(values, DensityEstimate):
        values = values.values(grid)
    diff = np.asarray(values, dtype=float) - np.asarray(g_values, dtype=float)
    key = str(p)
    if key == "1":
        return float(np.sum(grid.node_weights() * np.abs(diff)))
    if key == "2":
        return float(np.sqrt(np.sum(grid.node_weights() * diff * diff)))
    if key == "inf":
        return float(np.max(np.abs(diff)))
    raise ValueError(f"unsupported norm p={p!r}; choose from {SUPPORTED_NORMS}")


def unbiased_l2(zeta, J):
    """Unbiased squared-L^2 statistic: plain sum of zeta_jk over scales
    j <= J+1.  May be negative; the sign is informative and must not be
    clamped."""
    if len(zeta) < J + 2:
        raise ValueError("zeta coefficients required up to scale J+1")
    return float(sum(z.sum() for z in zeta[: J + 2]))
