"""Detector coverage densities on the sphere and null-hypothesis sampling.

A coverage model is a normalized probability density g on the sphere.  The
geometric-exposure model depends only on equatorial declination: a ground
array at latitude a0 observing up to a maximum zenith angle theta_z sees
declination delta with relative exposure

    omega(delta) = cos(a0) cos(delta) sin(alpha_m) + alpha_m sin(a0) sin(delta)
    alpha_m = arccos(clip(zeta, -1, 1))
    zeta = (cos(theta_z) - sin(a0) sin(delta)) / (cos(a0) cos(delta))

Densities are evaluated in a declared working frame (catalog frame) and
converted internally to equatorial coordinates where necessary.
"""

from __future__ import annotations

import numpy as np
from scipy.special import roots_legendre

from . import sphere
from .harmonics import FOUR_PI

DEFAULT_SITE_LATITUDE_DEG = -35.2
DEFAULT_MAX_ZENITH_DEG = 60.0


def exposure_omega(dec_rad, site_lat_rad, max_zenith_rad):
    """Relative (unnormalized) geometric exposure as a function of
    declination, clamped at the never-visible / always-visible branches."""
    dec = np.asarray(dec_rad, dtype=float)
    sa, ca = np.sin(site_lat_rad), np.cos(site_lat_rad)
    sd, cd = np.sin(dec), np.cos(dec)
    denom = ca * cd
    with np.errstate(divide="ignore", invalid="ignore"):
        zeta = np.where(np.abs(denom) < 1e-300, np.sign(np.cos(max_zenith_rad) - sa * sd) * np.inf, (np.cos(max_zenith_rad) - sa * sd) / denom)
    alpha_m = np.arccos(np.clip(zeta, -1.0, 1.0))
    return ca * cd * np.sin(alpha_m) + alpha_m * sa * sd


class CoverageModel:
    """Base class: a normalized density on the sphere.

    Subclasses implement ``density(dirs, frame)`` returning values of the
    normalized g at unit vectors expressed in the given frame, and
    ``max_density()`` used as a rejection-sampling envelope.
    """

    uniform = False

    def density(self, dirs, frame=sphere.GALACTIC):
        raise NotImplementedError

    def max_density(self):
        raise NotImplementedError

    def describe(self):
        raise NotImplementedError

    def coverage_id(self):
        import hashlib
        import json

        blob = json.dumps(self.describe(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


class UniformCoverage(CoverageModel):
    uniform = True

    def density(self, dirs, frame=sphere.GALACTIC):
        dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
        return np.full(len(dirs), 1.0 / FOUR_PI)

    def max_density(self):
        return 1.0 / FOUR_PI

    def describe(self):
        return {"kind": "uniform"}


class ExposureCoverage(CoverageModel):
    """Declination-only geometric exposure of a ground detector."""

    def __init__(self, site_lat_deg=DEFAULT_SITE_LATITUDE_DEG, max_zenith_deg=DEFAULT_MAX_ZENITH_DEG):
        self.site_lat_deg = float(site_lat_deg)
        self.max_zenith_deg = float(max_zenith_deg)
        self._a0 = np.deg2rad(self.site_lat_deg)
        self._tz = np.deg2rad(self.max_zenith_deg)
        # normalization: integral over the sphere = 2*pi * int omega cos(dec)
        nodes, weights = roots_legendre(512)
        dec = np.arcsin(nodes)
        self._norm = 2.0 * np.pi * float(weights @ exposure_omega(dec, self._a0, self._tz))
        dense = np.arcsin(np.linspace(-1.0, 1.0, 20001))
        self._max = float(np.max(exposure_omega(dense, self._a0, self._tz))) / self._norm

    def density(self, dirs, frame=sphere.GALACTIC):
        dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
        eq = sphere.convert(dirs, frame, sphere.EQUATORIAL)
        dec = np.arcsin(np.clip(eq[:, 2], -1.0, 1.0))
        return exposure_omega(dec, self._a0, self._tz) / self._norm

    def max_density(self):
        return self._max

    def describe(self):
        return {"kind": "exposure", "site_lat_deg": self.site_lat_deg, "max_zenith_deg": self.max_zenith_deg}


class GriddedCoverage(CoverageModel):
    """Density tabulated on a regular lon/lat grid (degrees), bilinearly
    interpolated and renormalized; the table's frame must match the
    evaluation frame used downstream."""

    def __init__(self, lon_deg, lat_deg, values, frame=sphere.GALACTIC):
        self.lon = np.asarray(lon_deg, dtype=float)
        self.lat = np.asarray(lat_deg, dtype=float)
        self.frame = frame
        vals = np.asarray(values, dtype=float)
        if vals.shape != (len(self.lat), len(self.lon)):
            raise ValueError("values must have shape (nlat, nlon)")
        if np.any(vals < 0):
            raise ValueError("coverage values must be nonnegative")
        # normalize by lon/lat Riemann quadrature with cos(lat) measure
        dlon = np.deg2rad(np.ptp(self.lon)) / max(len(self.lon) - 1, 1)
        dlat = np.deg2rad(np.ptp(self.lat)) / max(len(self.lat) - 1, 1)
        mass = float(np.sum(vals * np.cos(np.deg2rad(self.lat))[:, None]) * dlon * dlat)
        if mass <= 0:
            raise ValueError("coverage table integrates to zero")
        self.values = vals / mass

    def density(self, dirs, frame=sphere.GALACTIC):
        dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
        local = sphere.convert(dirs, frame, self.frame) if frame != self.frame else dirs
        lon, lat = sphere.xyz_to_lonlat(local)
        ilat = np.clip(np.interp(lat, self.lat, np.arange(len(self.lat))), 0, len(self.lat) - 1)
        ilon = np.clip(np.interp(lon, self.lon, np.arange(len(self.lon))), 0, len(self.lon) - 1)
        i0, j0 = np.floor(ilat).astype(int), np.floor(ilon).astype(int)
        i1, j1 = np.minimum(i0 + 1, len(self.lat) - 1), np.minimum(j0 + 1, len(self.lon) - 1)
        fi, fj = ilat - i0, ilon - j0
        v = (
            self.values[i0, j0] * (1 - fi) * (1 - fj)
            + self.values[i1, j0] * fi * (1 - fj)
            + self.values[i0, j1] * (1 - fi) * fj
            + self.values[i1, j1] * fi * fj
        )
        return v

    def max_density(self):
        return float(self.values.max())

    def describe(self):
        import hashlib

        h = hashlib.sha256(self.values.tobytes()).hexdigest()[:12]
        return {"kind": "gridded", "frame": self.frame, "table_sha": h, "shape": list(self.values.shape)}


def exposure_density(cov, dirs, frame=sphere.GALACTIC):
    """Normalized coverage density at unit vector(s)."""
    return cov.density(dirs, frame)


def sample_null(cov, n, rng, frame=sphere.GALACTIC):
    """Draw n directions with density proportional to the coverage.

    Uniform proposal, accept with probability g / g_max.  The returned
    directions are expressed in ``frame``.
    """
    if n < 1:
        raise ValueError("sample size must be >= 1")
    if cov.uniform:
        return sphere.sample_uniform(rng, n)
    gmax = cov.max_density()
    if gmax <= 0:
        raise ValueError("coverage density is identically zero")
    out = np.empty((n, 3))
    have = 0
    while have < n:
        miss = n - have
        batch = max(32, int(1.2 * miss * FOUR_PI * gmax))
        cand = sphere.sample_uniform(rng, batch)
        keep = cand[rng.uniform(0.0, gmax, batch) < cov.density(cand, frame)]
        take = min(len(keep), miss)
        out[have : have + take] = keep[:take]
        have += take
    return out
