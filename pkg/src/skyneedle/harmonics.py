"""Real spherical-harmonic analysis/synthesis on Gauss-Legendre grids.

Basis convention: orthonormal real harmonics.  For m = 0 the function is
p_l0(z); for m > 0 the cosine/sine pair sqrt(2) * p_lm(z) * {cos, sin}(m*phi),
where p_lm are the sphere-normalized associated Legendre functions
(p_00 = 1/sqrt(4*pi)).  Coefficients are stored as two lower-triangular
(L+1, L+1) arrays ``c`` (m <= l) and ``s`` (1 <= m <= l).

Grids are Gauss-Legendre colatitudes x equispaced longitudes; a grid of
exactness degree N integrates every spherical polynomial of degree <= N
exactly and has Theta(N^2) nodes.
"""

from __future__ import annotations

import numpy as np

FOUR_PI = 4.0 * np.pi
_SQRT4PI = np.sqrt(FOUR_PI)

# Ring-table cache budget per grid, in float64 entries (~192 MB).  Larger
# requests fall back to recomputing recurrence blocks on the fly.
_CACHE_BUDGET = 24_000_000


def legendre_table(L, x):
    """P_l(x) for l = 0..L, classical Legendre, shape (L+1,) + x.shape."""
    x = np.asarray(x, dtype=float)
    out = np.empty((L + 1,) + x.shape)
    out[0] = 1.0
    if L >= 1:
        out[1] = x
    for ell in range(2, L + 1):
        out[ell] = ((2 * ell - 1) * x * out[ell - 1] - (ell - 1) * out[ell - 2]) / ell
    return out


def legendre_kernel(ell, cosgamma):
    """Projection kernel L_l normalized so that L_l(1) = (2l+1)/(4*pi)."""
    if ell < 0:
        raise ValueError("degree must be nonnegative")
    p = legendre_table(ell, cosgamma)[ell]
    return (2 * ell + 1) / FOUR_PI * p


def kernel_sum(weights, cosgamma):
    """Evaluate sum_l weights[l] * L_l(cosgamma) for a weight table over l."""
    weights = np.asarray(weights, dtype=float)
    L = len(weights) - 1
    p = legendre_table(L, np.asarray(cosgamma, dtype=float))
    ell = np.arange(L + 1)
    scaled = weights * (2 * ell + 1) / FOUR_PI
    return np.tensordot(scaled, p, axes=(0, 0))


class HarmonicCoefficients:
    """Real-basis coefficients up to band limit L; (L+1)^2 numbers total."""

    def __init__(self, L, c=None, s=None):
        L = int(L)
        if L < 0:
            raise ValueError("band limit must be >= 0")
        self.L = L
        self.c = np.zeros((L + 1, L + 1)) if c is None else np.asarray(c, dtype=float)
        self.s = np.zeros((L + 1, L + 1)) if s is None else np.asarray(s, dtype=float)
        if self.c.shape != (L + 1, L + 1) or self.s.shape != (L + 1, L + 1):
            raise ValueError("coefficient arrays must have shape (L+1, L+1)")

    @classmethod
    def constant(cls, value=1.0, L=0):
        """Coefficients of the constant function equal to ``value``."""
        out = cls(L)
        out.c[0, 0] = value * _SQRT4PI
        return out

    def copy(self):
        return HarmonicCoefficients(self.L, self.c.copy(), self.s.copy())

    @property
    def n_coeffs(self):
        return (self.L + 1) ** 2

    def norm_squared(self):
        """Parseval sum: integral of the synthesized function squared."""
        return float(np.sum(self.c**2) + np.sum(self.s**2))

    def filtered(self, h):
        """New coefficients a'_lm = h(l) * a_lm; band limit trimmed to the
        largest l with h(l) != 0."""
        ell = np.arange(self.L + 1)
        hv = np.asarray([h(int(l)) for l in ell], dtype=float) if callable(h) else np.asarray(h, dtype=float)
        if hv.shape != (self.L + 1,):
            raise ValueError("filter table must have length L+1")
        nz = np.nonzero(hv)[0]
        newL = int(nz[-1]) if len(nz) else 0
        k = newL + 1
        return HarmonicCoefficients(newL, hv[:k, None] * self.c[:k, :k], hv[:k, None] * self.s[:k, :k])

    def padded(self, L):
        """Same function represented with a larger band limit."""
        if L < self.L:
            raise ValueError("padding target below current band limit")
        out = HarmonicCoefficients(L)
        out.c[: self.L + 1, : self.L + 1] = self.c
        out.s[: self.L + 1, : self.L + 1] = self.s
        return out

    def __add__(self, other):
        L = max(self.L, other.L)
        a, b = self.padded(L), other.padded(L)
        return HarmonicCoefficients(L, a.c + b.c, a.s + b.s)

    def __sub__(self, other):
        L = max(self.L, other.L)
        a, b = self.padded(L), other.padded(L)
        return HarmonicCoefficients(L, a.c - b.c, a.s - b.s)

    def __mul__(self, scalar):
        return HarmonicCoefficients(self.L, self.c * scalar, self.s * scalar)

    __rmul__ = __mul__


class RingRecurrence:
    """Per-m blocks of sphere-normalized associated Legendre functions.

    For each order m the block is a (npoints, L+1-m) array of p_lm evaluated
    at fixed abscissas z.  Blocks up to ``cache_L`` are precomputed and kept;
    higher orders are regenerated on demand to bound memory.
    """

    def __init__(self, z, cache_L=-1):
        self.z = np.asarray(z, dtype=float)
        self._sz = np.sqrt(np.maximum(0.0, 1.0 - self.z**2))
        self.cache_L = int(cache_L)
        self._blocks = []
        if self.cache_L >= 0:
            self._build_cache()

    def _build_cache(self):
        diag = np.full(self.z.shape, 1.0 / _SQRT4PI)
        for m in range(self.cache_L + 1):
            self._blocks.append(self._extend(diag, m, self.cache_L))
            diag = -np.sqrt((2 * m + 3) / (2 * m + 2)) * self._sz * diag

    def _extend(self, diag, m, L):
        """Column block p_lm, l = m..L, grown from the diagonal value p_mm."""
        z = self.z
        block = np.empty((z.size, L + 1 - m))
        block[:, 0] = diag
        if L > m:
            block[:, 1] = np.sqrt(2 * m + 3) * z * diag
        for ell in range(m + 2, L + 1):
            a = np.sqrt((4 * ell * ell - 1.0) / (ell * ell - m * m))
            b = np.sqrt(((2.0 * ell + 1) * (ell - 1 + m) * (ell - 1 - m)) / ((2.0 * ell - 3) * (ell * ell - m * m)))
            block[:, ell - m] = a * z * block[:, ell - m - 1] - b * block[:, ell - m - 2]
        return block

    def blocks(self, L):
        """Yield (m, p-block for l = m..L) for m = 0..L."""
        upto = min(L, self.cache_L)
        for m in range(upto + 1):
            yield m, self._blocks[m][:, : L + 1 - m]
        if L > self.cache_L:
            if self.cache_L >= 0:
                m0 = self.cache_L + 1
                diag = self._blocks[self.cache_L][:, 0]
                diag = -np.sqrt((2 * m0 + 1) / (2 * m0)) * self._sz * diag
            else:
                m0, diag = 0, np.full(self.z.shape, 1.0 / _SQRT4PI)
            for m in range(m0, L + 1):
                yield m, self._extend(diag, m, L)
                diag = -np.sqrt((2 * m + 3) / (2 * m + 2)) * self._sz * diag


class QuadratureGrid:
    """Gauss-Legendre x uniform-longitude product grid, exact to ``degree``.

    Nodes are ordered ring-major; combined weight of every node on ring r is
    ring_weight[r] * 2*pi/nphi, all strictly positive, summing to 4*pi.
    """

    def __init__(self, degree, cache_L=None):
        degree = int(degree)
        if degree < 0:
            raise ValueError("degree must be >= 0")
        self.degree = degree
        nrings = degree // 2 + 1
        z, w = np.polynomial.legendre.leggauss(nrings)
        order = np.argsort(-z)  # north to south
        self.z = z[order]
        self.ring_weight = w[order]
        self.nrings = nrings
        self.nphi = 2 * degree + 2
        self.phi = 2.0 * np.pi * np.arange(self.nphi) / self.nphi
        self.theta = np.arccos(np.clip(self.z, -1.0, 1.0))
        if cache_L is None:
            cache_L = degree if nrings * (degree + 1) ** 2 // 2 <= _CACHE_BUDGET else -1
        self._rec = RingRecurrence(self.z, cache_L)

    @property
    def npoints(self):
        return self.nrings * self.nphi

    def node_weights(self):
        """Per-node weights, ring-major, shape (npoints,)."""
        lam = self.ring_weight * (2.0 * np.pi / self.nphi)
        return np.repeat(lam, self.nphi)

    def points(self):
        """All nodes as unit vectors, ring-major, shape (npoints, 3)."""
        st = np.sqrt(np.maximum(0.0, 1.0 - self.z**2))
        x = st[:, None] * np.cos(self.phi)[None, :]
        y = st[:, None] * np.sin(self.phi)[None, :]
        zz = np.broadcast_to(self.z[:, None], x.shape)
        return np.stack([x, y, zz], axis=-1).reshape(-1, 3)

    def integrate(self, samples):
        """Quadrature of ring-major samples (flat or (nrings, nphi))."""
        vals = np.asarray(samples, dtype=float).reshape(self.nrings, self.nphi)
        return float((2.0 * np.pi / self.nphi) * self.ring_weight @ vals.sum(axis=1))

    # -- transforms -------------------------------------------------------

    def analysis(self, samples, L):
        """Forward SHT of ring-major samples: a_lm = sum_k lam_k Y_lm f_k."""
        if L > self.degree:
            raise ValueError(f"grid of degree {self.degree} too small for analysis at L={L}")
        vals = np.asarray(samples, dtype=float).reshape(self.nrings, self.nphi)
        return self._analysis_fourier(np.fft.rfft(vals, axis=1), L)

    def analysis_weighted_points(self, iring, iphi, weights, L):
        """Forward SHT of a point measure supported on grid nodes.

        Equivalent to analysis of (counts / node_weight) but exact for the
        measure: a_lm = sum_j weights_j Y_lm(node_j).  No degree restriction
        beyond the longitude sampling (L <= nphi // 2).
        """
        if L > self.nphi // 2:
            raise ValueError("longitude sampling too coarse for requested L")
        grid_mass = np.zeros((self.nrings, self.nphi))
        np.add.at(grid_mass, (iring, iphi), weights)
        fourier = np.fft.rfft(grid_mass, axis=1)
        # undo the quadrature weight applied in _analysis_fourier
        lam = self.ring_weight * (2.0 * np.pi / self.nphi)
        return self._analysis_fourier(fourier / lam[:, None], L)

    def _analysis_fourier(self, fourier, L):
        out = HarmonicCoefficients(L)
        scale0 = 2.0 * np.pi / self.nphi
        for m, block in self._rec.blocks(L):
            fac = scale0 * (np.sqrt(2.0) if m > 0 else 1.0)
            wre = self.ring_weight * fourier[:, m].real
            out.c[m:, m] = fac * (block.T @ wre)
            if m > 0:
                wim = self.ring_weight * (-fourier[:, m].imag)
                out.s[m:, m] = fac * (block.T @ wim)
        return out

    def synthesis(self, coeffs):
        """Evaluate a band-limited function on all grid nodes (ring-major)."""
        L = coeffs.L
        if L > self.nphi // 2 - 1:
            raise ValueError("grid longitude sampling too coarse for synthesis")
        spec = np.zeros((self.nrings, self.nphi // 2 + 1), dtype=complex)
        half = 0.5 * np.sqrt(2.0) * self.nphi
        for m, block in self._rec.blocks(L):
            a = block @ coeffs.c[m:, m]
            if m == 0:
                spec[:, 0] = self.nphi * a
            else:
                spec[:, m] = half * (a - 1j * (block @ coeffs.s[m:, m]))
        return np.fft.irfft(spec, n=self.nphi, axis=1).reshape(-1)

    def nearest_nodes(self, dirs):
        """(ring index, phi index) of the per-axis nearest node for each dir."""
        dirs = np.asarray(dirs, dtype=float)
        z = np.clip(dirs[:, 2], -1.0, 1.0)
        # ring boundaries are midpoints in colatitude; self.z descends
        mid = 0.5 * (self.z[:-1] + self.z[1:])
        iring = np.searchsorted(-mid, -z)
        phi = np.mod(np.arctan2(dirs[:, 1], dirs[:, 0]), 2.0 * np.pi)
        iphi = np.mod(np.rint(phi / (2.0 * np.pi / self.nphi)).astype(int), self.nphi)
        return iring, iphi

    def max_snap_distance(self):
        """Upper bound on the geodesic distance of any point to its nearest
        node under the per-axis assignment rule."""
        theta = self.theta
        gaps = np.diff(theta)
        dtheta = max(theta[0], np.pi - theta[-1], 0.5 * float(gaps.max()) if len(gaps) else np.pi)
        dphi = np.pi / self.nphi
        return float(np.hypot(dtheta, dphi))


def build_grid(degree):
    """Positive product cubature exact for spherical polynomials of degree
    <= ``degree``."""
    return QuadratureGrid(degree)


def sht_forward(samples, grid, L):
    """Forward transform of grid samples; exact for band-limited inputs."""
    return grid.analysis(samples, L)


def sht_inverse(coeffs, where):
    """Synthesize coefficients on a grid or at arbitrary unit vectors."""
    if isinstance(where, QuadratureGrid):
        return where.synthesis(coeffs)
    return synthesis_points(coeffs, where)


def forward_points(dirs, weights, L):
    """a_lm = sum_i weights_i * Y_lm(dirs_i) for arbitrary unit vectors."""
    dirs = np.asarray(dirs, dtype=float)
    weights = np.asarray(weights, dtype=float)
    z = np.clip(dirs[:, 2], -1.0, 1.0)
    phi = np.arctan2(dirs[:, 1], dirs[:, 0])
    out = HarmonicCoefficients(L)
    rec = RingRecurrence(z, cache_L=-1)
    for m, block in rec.blocks(L):
        if m == 0:
            out.c[:, 0] = block.T @ weights
        else:
            fac = np.sqrt(2.0)
            out.c[m:, m] = fac * (block.T @ (weights * np.cos(m * phi)))
            out.s[m:, m] = fac * (block.T @ (weights * np.sin(m * phi)))
    return out


def synthesis_points(coeffs, dirs):
    """Evaluate the band-limited function at arbitrary unit vectors."""
    dirs = np.asarray(dirs, dtype=float)
    single = dirs.ndim == 1
    if single:
        dirs = dirs[None, :]
    z = np.clip(dirs[:, 2], -1.0, 1.0)
    phi = np.arctan2(dirs[:, 1], dirs[:, 0])
    rec = RingRecurrence(z, cache_L=-1)
    out = np.zeros(len(dirs))
    for m, block in rec.blocks(coeffs.L):
        a = block @ coeffs.c[m:, m]
        if m == 0:
            out += a
        else:
            b = block @ coeffs.s[m:, m]
            out += np.sqrt(2.0) * (a * np.cos(m * phi) + b * np.sin(m * phi))
    return out[0] if single else out
