"""Geometry of the unit sphere: directions, frames, distances, sampling.

Directions are unit 3-vectors stored as numpy arrays of shape (..., 3).
Angle conventions: colatitude theta in [0, pi] measured from +z, longitude
phi in [0, 2*pi).  Catalog-level I/O uses (lon, lat) in degrees; see
:mod:`skyneedle.catalogs`.
"""

from __future__ import annotations

import numpy as np

UNIT_TOL = 1e-12

# IAU 1958 / J2000 galactic frame constants (degrees): equatorial position
# of the north galactic pole and galactic longitude of the north celestial
# pole.  Precession is deliberately ignored.
NGP_RA_DEG = 192.85948
NGP_DEC_DEG = 27.12825
NCP_GLON_DEG = 122.93192

GALACTIC = "galactic"
EQUATORIAL = "equatorial"
FRAMES = (GALACTIC, EQUATORIAL)


def to_xyz(theta, phi):
    """Cartesian unit vector(s) from colatitude/longitude in radians."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def to_angles(xyz):
    """(theta, phi) in radians from unit vector(s); phi wrapped to [0, 2*pi)."""
    xyz = np.asarray(xyz, dtype=float)
    theta = np.arccos(np.clip(xyz[..., 2], -1.0, 1.0))
    phi = np.mod(np.arctan2(xyz[..., 1], xyz[..., 0]), 2.0 * np.pi)
    return theta, phi


def lonlat_to_xyz(lon_deg, lat_deg):
    """Unit vector(s) from longitude/latitude in degrees."""
    lon = np.deg2rad(np.asarray(lon_deg, dtype=float))
    lat = np.deg2rad(np.asarray(lat_deg, dtype=float))
    return to_xyz(np.pi / 2.0 - lat, lon)


def xyz_to_lonlat(xyz):
    """(lon_deg in [0, 360), lat_deg in [-90, 90]) from unit vector(s)."""
    theta, phi = to_angles(xyz)
    return np.rad2deg(phi), 90.0 - np.rad2deg(theta)


def normalize(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def is_unit(v, tol=UNIT_TOL):
    v = np.asarray(v, dtype=float)
    return bool(np.all(np.abs(np.einsum("...i,...i->...", v, v) - 1.0) < tol))


def geodesic_distance(u, v):
    """Great-circle angle between unit vectors, elementwise, in [0, pi]."""
    dot = np.einsum("...i,...i->...", np.asarray(u, float), np.asarray(v, float))
    return np.arccos(np.clip(dot, -1.0, 1.0))


def pairwise_angles(dirs):
    """(n, n) matrix of geodesic distances within one set of unit vectors."""
    dirs = np.asarray(dirs, dtype=float)
    gram = np.clip(dirs @ dirs.T, -1.0, 1.0)
    return np.arccos(gram)


def sample_uniform(rng, n=None):
    """Draw direction(s) from the uniform density 1/(4*pi).

    z is uniform on [-1, 1] and longitude uniform on [0, 2*pi).  Returns a
    single vector when ``n`` is None, else an (n, 3) array.
    """
    size = 1 if n is None else int(n)
    z = rng.uniform(-1.0, 1.0, size)
    phi = rng.uniform(0.0, 2.0 * np.pi, size)
    s = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    out = np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=-1)
    return out[0] if n is None else out


def tangent_basis(u):
    """Orthonormal tangent pair (e1, e2) at each direction.

    e1 points along increasing longitude ("east"), e2 completes the
    right-handed triad (e1, e2, u).  Within 1e-12 of the poles the
    longitude direction is undefined; there the fixed pair (x_hat, y_hat)
    is used, which is statistically irrelevant for uniformly random
    azimuths.
    """
    u = np.asarray(u, dtype=float)
    z = np.array([0.0, 0.0, 1.0])
    e1 = np.cross(np.broadcast_to(z, u.shape), u)
    norm = np.linalg.norm(e1, axis=-1, keepdims=True)
    polar = norm[..., 0] < 1e-12
    if np.any(polar):
        e1 = np.where(polar[..., None], [1.0, 0.0, 0.0], e1 / np.where(norm == 0, 1.0, norm))
    else:
        e1 = e1 / norm
    e2 = np.cross(u, e1)
    return e1, e2


def deflect(u, angle, azimuth):
    """Rotate direction(s) by ``angle`` toward the tangent at ``azimuth``.

    The azimuth is measured in the local tangent basis of
    :func:`tangent_basis`.  Guarantees geodesic_distance(u, result) == angle
    to within clamping error, and a unit-normalized result.
    """
    u = np.asarray(u, dtype=float)
    angle = np.asarray(angle, dtype=float)
    azimuth = np.asarray(azimuth, dtype=float)
    e1, e2 = tangent_basis(u)
    t = np.cos(azimuth)[..., None] * e1 + np.sin(azimuth)[..., None] * e2
    out = np.cos(angle)[..., None] * u + np.sin(angle)[..., None] * t
    return normalize(out)


def rotation_about_axis(axis, angle):
    """3x3 rotation matrix about a unit axis (Rodrigues form)."""
    x, y, z = normalize(axis)
    c, s = np.cos(angle), np.sin(angle)
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return c * np.eye(3) + s * k + (1.0 - c) * np.outer([x, y, z], [x, y, z])


def rotation_from_z_to(target):
    """Rotation taking the +z axis onto ``target`` (minimal rotation)."""
    target = normalize(target)
    z = np.array([0.0, 0.0, 1.0])
    c = float(np.dot(z, target))
    if c > 1.0 - 1e-15:
        return np.eye(3)
    if c < -1.0 + 1e-15:
        return np.diag([1.0, -1.0, -1.0])
    axis = np.cross(z, target)
    return rotation_about_axis(axis, np.arccos(np.clip(c, -1.0, 1.0)))


def random_rotation(rng):
    """Haar-uniform random rotation matrix."""
    axis = sample_uniform(rng)
    spin = rotation_about_axis(np.array([0.0, 0.0, 1.0]), rng.uniform(0.0, 2.0 * np.pi))
    return rotation_from_z_to(axis) @ spin


def _build_gal_from_eq():
    pole = lonlat_to_xyz(NGP_RA_DEG, NGP_DEC_DEG)
    ncp = np.array([0.0, 0.0, 1.0])
    e = normalize(ncp - np.dot(ncp, pole) * pole)
    x_gal = rotation_about_axis(pole, -np.deg2rad(NCP_GLON_DEG)) @ e
    y_gal = np.cross(pole, x_gal)
    return np.vstack([x_gal, y_gal, pole])


#: Rotation matrix sending equatorial J2000 components to galactic ones.
GAL_FROM_EQ = _build_gal_from_eq()


def convert(xyz, frame_from, frame_to):
    """Convert direction(s) between the galactic and equatorial frames."""
    for f in (frame_from, frame_to):
        if f not in FRAMES:
            raise ValueError(f"unknown frame {f!r}; expected one of {FRAMES}")
    if frame_from == frame_to:
        return np.asarray(xyz, dtype=float).copy()
    xyz = np.asarray(xyz, dtype=float)
    if frame_from == EQUATORIAL:
        return xyz @ GAL_FROM_EQ.T
    return xyz @ GAL_FROM_EQ
