"""Physics-inspired sky simulators: alternatives for power studies.

Three non-isotropic generators are provided:

- :class:`BumpAlternative`: mixture of the uniform density with one
  axisymmetric Gaussian-like bump, f = (1-w) / (4 pi) + w * h, with
  h proportional to exp(-gamma^2 / (2 width^2)) in the geodesic angle gamma
  to the bump center.
- :class:`SourceMixtureAlternative`: an equal mixture of such bumps
  centered on uniformly drawn source directions, multiplied by the detector
  coverage (realized by thinning).
- :class:`PropagationAlternative`: a toy emission/propagation model;
  sources uniform in a ball, selection weight 1/distance^2, power-law
  energies, magnetic deflections (extragalactic, then regular, then
  turbulent), then coverage thinning.

Deflection magnitudes (degrees, before conversion to radians):

    regular      3.25 * (1e20 / (E/Z)) * (B_reg / 2 uG)  * (r / 3 kpc)
    turbulent    0.56 * (1e20 / (E/Z)) * (B_turb / 4 uG) * sqrt(r / 3 kpc) * sqrt(L_gal / 50 pc)
    extragalactic 2.4 * (1e20 / (E/Z)) * (B_ext / 1 nG)  * sqrt(D / 100 Mpc) * sqrt(L_ext / 50 pc)

with the galactic path length r = min(r_perp / |sin b|, r_cap) evaluated at
the galactic latitude b of the incoming direction.  The regular deflection
is deterministic along v x B with B along the galactic y-axis; the random
ones have Gaussian-distributed magnitude and uniform tangent azimuth.
All directions live in the galactic frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_legendre

from . import sphere
from .coverage import UniformCoverage
from .harmonics import FOUR_PI

B_HAT = np.array([0.0, 1.0, 0.0])  # regular field direction (galactic y)


@dataclass(frozen=True)
class EnergySpectrum:
    """Truncated power-law flux dN/dE ~ E^-index on [e_min, e_max] (eV)."""

    index: float = 4.2
    e_min: float = 6.0e19
    e_max: float = 1.0e21

    def __post_init__(self):
        if not self.index > 1:
            raise ValueError("spectral index must exceed 1")
        if not 0 < self.e_min < self.e_max:
            raise ValueError("need 0 < e_min < e_max")

    def ppf(self, u):
        """Inverse CDF of the truncated power law."""
        a = 1.0 - self.index
        lo, hi = self.e_min**a, self.e_max**a
        return (lo - np.asarray(u, dtype=float) * (lo - hi)) ** (1.0 / a)

    def cdf(self, e):
        a = 1.0 - self.index
        lo, hi = self.e_min**a, self.e_max**a
        return (lo - np.asarray(e, dtype=float) ** a) / (lo - hi)


def sample_energy(spectrum, rng, size=None):
    """Draw energies in eV from the truncated power law."""
    return spectrum.ppf(rng.uniform(0.0, 1.0, size))


@dataclass
class SourceSet:
    """Fixed emitters: unit directions and distances (Mpc) within a ball."""

    directions: np.ndarray
    distances: np.ndarray

    def __post_init__(self):
        if np.any(self.distances <= 0):
            raise ValueError("source distances must be positive")

    @property
    def n_sources(self):
        return len(self.distances)


def sample_sources(n_sources, r_max_mpc, rng):
    """Sources uniform in the ball of radius r_max: directions uniform,
    distance density proportional to D^2."""
    if n_sources < 1:
        raise ValueError("need at least one source")
    dirs = sphere.sample_uniform(rng, n_sources)
    dist = r_max_mpc * rng.uniform(0.0, 1.0, n_sources) ** (1.0 / 3.0)
    return SourceSet(dirs, dist)


def select_source(sources, rng, size=None):
    """Pick source index(es) with probability proportional to 1/distance^2.

    Detector acceptance modulates observed arrival directions by thinning
    after propagation, not through these weights.
    """
    w = sources.distances**-2.0
    total = w.sum()
    if not total > 0:
        raise ValueError("all source weights vanish")
    return rng.choice(sources.n_sources, size=size, p=w / total)


@dataclass(frozen=True)
class MagneticFieldModel:
    """Field strengths and coherence/path lengths of the deflection model."""

    b_regular_uG: float = 2.0
    b_turbulent_uG: float = 4.0
    b_extragalactic_nG: float = 1.0
    coherence_gal_pc: float = 50.0
    coherence_ext_pc: float = 50.0
    path_perp_kpc: float = 3.0
    path_cap_kpc: float = 10.0
    atomic_number: int = 1

    def __post_init__(self):
        vals = (self.b_regular_uG, self.b_turbulent_uG, self.b_extragalactic_nG,
                self.coherence_gal_pc, self.coherence_ext_pc, self.path_perp_kpc, self.path_cap_kpc)
        if any(v < 0 for v in vals):
            raise ValueError("field model parameters must be nonnegative")
        if self.atomic_number < 1:
            raise ValueError("atomic number must be a positive integer")

    def galactic_path_kpc(self, dirs):
        """r = min(path_perp / |sin b|, path_cap) at galactic latitude b."""
        z = np.abs(np.atleast_2d(dirs)[:, 2])  # |sin b| in the galactic frame
        with np.errstate(divide="ignore"):
            r = np.where(z > 0, self.path_perp_kpc / np.maximum(z, 1e-300), np.inf)
        return np.minimum(r, self.path_cap_kpc)


def regular_deflection_deg(energy_ev, model, path_kpc):
    return 3.25 * (1e20 / (np.asarray(energy_ev, dtype=float) / model.atomic_number)) * (model.b_regular_uG / 2.0) * (path_kpc / 3.0)


def turbulent_sigma_deg(energy_ev, model, path_kpc):
    return (0.56 * (1e20 / (np.asarray(energy_ev, dtype=float) / model.atomic_number)) * (model.b_turbulent_uG / 4.0)
            * np.sqrt(path_kpc / 3.0) * np.sqrt(model.coherence_gal_pc / 50.0))


def extragalactic_sigma_deg(energy_ev, distance_mpc, model):
    return (2.4 * (1e20 / (np.asarray(energy_ev, dtype=float) / model.atomic_number)) * model.b_extragalactic_nG
            * np.sqrt(np.asarray(distance_mpc, dtype=float) / 100.0) * np.sqrt(model.coherence_ext_pc / 50.0))


def deflect_regular(dirs, energy_ev, model, path_kpc=None):
    """Deterministic magnetic-lensing rotation along v x B.

    Directions parallel to the field are unaffected (vanishing cross
    product).  ``path_kpc`` overrides the latitude rule when the chain
    fixes the path length before the galactic leg.
    """
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    if path_kpc is None:
        path_kpc = model.galactic_path_kpc(dirs)
    angle = np.deg2rad(regular_deflection_deg(energy_ev, model, path_kpc))
    t = np.cross(np.broadcast_to(B_HAT, dirs.shape), dirs)
    tn = np.linalg.norm(t, axis=-1, keepdims=True)
    safe = tn[..., 0] > 1e-14
    t = np.where(safe[..., None], t / np.where(tn == 0, 1.0, tn), 0.0)
    out = np.cos(angle)[..., None] * dirs + np.sin(angle)[..., None] * t
    out = np.where(safe[..., None], out, dirs)
    return sphere.normalize(out)


def deflect_turbulent(dirs, energy_ev, model, rng, path_kpc=None):
    """Random scatter: |N(0, sigma^2)| magnitude at uniform azimuth."""
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    if path_kpc is None:
        path_kpc = model.galactic_path_kpc(dirs)
    sigma = np.deg2rad(turbulent_sigma_deg(energy_ev, model, path_kpc))
    return _gaussian_scatter(dirs, sigma, rng)


def deflect_extragalactic(dirs, energy_ev, distance_mpc, model, rng):
    """Random scatter from intergalactic fields, sigma scaling with
    sqrt(distance)."""
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    sigma = np.deg2rad(extragalactic_sigma_deg(energy_ev, distance_mpc, model))
    return _gaussian_scatter(dirs, sigma, rng)


def _gaussian_scatter(dirs, sigma, rng):
    n = len(dirs)
    angle = np.abs(rng.normal(0.0, 1.0, n)) * np.asarray(sigma, dtype=float)
    azimuth = rng.uniform(0.0, 2.0 * np.pi, n)
    return sphere.deflect(dirs, np.minimum(angle, np.pi), azimuth)


# ---------------------------------------------------------------------------
# alternatives


@dataclass
class BumpAlternative:
    """Uniform background plus one axisymmetric bump of the given angular
    width (radians) and mixture weight."""

    weight: float
    width_rad: float
    center: np.ndarray = field(default_factory=lambda: sphere.to_xyz(np.pi / 2.0, 0.0))

    def __post_init__(self):
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError("mixture weight must lie in [0, 1]")
        if not self.width_rad > 0:
            raise ValueError("bump width must be positive")

    def bump_normalization(self):
        """C such that C * exp(-gamma^2/(2 width^2)) integrates to one."""
        nodes, weights = roots_legendre(256)
        gamma = 0.5 * np.pi * (nodes + 1.0)
        integrand = np.exp(-(gamma**2) / (2.0 * self.width_rad**2)) * np.sin(gamma)
        return 1.0 / (2.0 * np.pi * 0.5 * np.pi * float(weights @ integrand))

    def density(self, dirs):
        c = self.bump_normalization()
        gamma = sphere.geodesic_distance(np.atleast_2d(dirs), self.center)
        bump = c * np.exp(-(gamma**2) / (2.0 * self.width_rad**2))
        return (1.0 - self.weight) / FOUR_PI + self.weight * bump


def _sample_bump(center, width_rad, n, rng):
    """Exact draws from the normalized geodesic-Gaussian bump.

    Rayleigh proposal in the geodesic angle with acceptance sin(g)/g; the
    azimuth is uniform and the polar cap sample is rotated onto the center.
    """
    rot = sphere.rotation_from_z_to(center)
    out = np.empty((n, 3))
    have = 0
    while have < n:
        miss = n - have
        batch = max(32, int(1.3 * miss))
        g = width_rad * np.sqrt(-2.0 * np.log(rng.uniform(0.0, 1.0, batch)))
        ok = g <= np.pi
        g = g[ok]
        keep = rng.uniform(0.0, 1.0, len(g)) < np.where(g > 0, np.sin(g) / np.where(g == 0, 1.0, g), 1.0)
        g = g[keep]
        phi = rng.uniform(0.0, 2.0 * np.pi, len(g))
        cand = sphere.to_xyz(g, phi) @ rot.T
        take = min(len(cand), miss)
        out[have : have + take] = cand[:take]
        have += take
    return out


def sample_bump_mixture(spec, n, rng):
    """Catalog from the uniform+bump mixture."""
    if n < 1:
        raise ValueError("sample size must be >= 1")
    from_bump = rng.uniform(0.0, 1.0, n) < spec.weight
    out = np.empty((n, 3))
    n_bump = int(from_bump.sum())
    if n - n_bump:
        out[~from_bump] = sphere.sample_uniform(rng, n - n_bump)
    if n_bump:
        out[from_bump] = _sample_bump(spec.center, spec.width_rad, n_bump, rng)
    return out


@dataclass
class SourceMixtureAlternative:
    """Equal mixture of bumps at fixed source directions, times coverage."""

    n_sources: int
    width_rad: float
    coverage: UniformCoverage = field(default_factory=UniformCoverage)
    sources: np.ndarray | None = None

    def realize_sources(self, rng):
        """Draw the source directions once; they stay fixed across catalogs."""
        self.sources = sphere.sample_uniform(rng, self.n_sources)
        return self.sources


def sample_source_mixture(spec, n, rng, data_frame=sphere.GALACTIC):
    """Catalog from the source-mixture alternative: pick a source uniformly,
    draw from its bump, keep with probability g/g_max."""
    if spec.sources is None:
        raise ValueError("sources not realized; call realize_sources(rng) first")
    cov = spec.coverage
    gmax = cov.max_density()
    out = np.empty((n, 3))
    have = 0
    while have < n:
        miss = n - have
        batch = max(32, int(1.3 * miss * (1.0 if cov.uniform else FOUR_PI * gmax)))
        idx = rng.integers(0, len(spec.sources), batch)
        cand = np.empty((batch, 3))
        for k in np.unique(idx):
            sel = idx == k
            cand[sel] = _sample_bump(spec.sources[k], spec.width_rad, int(sel.sum()), rng)
        if not cov.uniform:
            cand = cand[rng.uniform(0.0, gmax, batch) < cov.density(cand, data_frame)]
        take = min(len(cand), miss)
        out[have : have + take] = cand[:take]
        have += take
    return out


@dataclass
class PropagationAlternative:
    """Toy emission/propagation model with fixed sources."""

    n_sources: int
    spectrum: EnergySpectrum = field(default_factory=EnergySpectrum)
    fields: MagneticFieldModel = field(default_factory=MagneticFieldModel)
    coverage: UniformCoverage = field(default_factory=UniformCoverage)
    r_max_mpc: float = 70.0
    sources: SourceSet | None = None

    def realize_sources(self, rng):
        self.sources = sample_sources(self.n_sources, self.r_max_mpc, rng)
        return self.sources


def simulate_propagation(spec, n, rng, data_frame=sphere.GALACTIC):
    """Catalog (directions, energies) from the propagation model.

    Per event: energy from the spectrum, source with weight 1/D^2,
    extragalactic scatter, then regular and turbulent galactic deflections
    with the path length fixed at the pre-galactic latitude, then coverage
    thinning (rejected events are resampled from scratch).
    """
    if spec.sources is None:
        raise ValueError("sources not realized; call realize_sources(rng) first")
    cov = spec.coverage
    gmax = cov.max_density()
    dirs = np.empty((n, 3))
    energies = np.empty(n)
    have = 0
    while have < n:
        miss = n - have
        batch = max(32, int(1.3 * miss * (1.0 if cov.uniform else FOUR_PI * gmax)))
        e = sample_energy(spec.spectrum, rng, batch)
        idx = select_source(spec.sources, rng, batch)
        d = spec.sources.directions[idx]
        d = deflect_extragalactic(d, e, spec.sources.distances[idx], spec.fields, rng)
        path = spec.fields.galactic_path_kpc(d)
        d = deflect_regular(d, e, spec.fields, path_kpc=path)
        d = deflect_turbulent(d, e, spec.fields, rng, path_kpc=path)
        if not cov.uniform:
            keep = rng.uniform(0.0, gmax, batch) < cov.density(d, data_frame)
            d, e = d[keep], e[keep]
        take = min(len(d), miss)
        dirs[have : have + take] = d[:take]
        energies[have : have + take] = e[:take]
        have += take
    return dirs, energies
