"""The four isotropy test procedures and their calibrated decisions.

Statistics
----------
- Multiple: per-scale discrepancies d(f_hat_J, g) for J = 1..J*, where
  f_hat_J is the linear needlet estimate with finest band J.  Norms "1",
  "2", "inf" are grid L^p distances; "2star" is the unbiased squared-L^2
  statistic built from the zeta coefficients (scales up to J+1).
- PlugIn: scalar d(f_hat, g) for the hard-thresholded estimate with finest
  band J ("2star" does not apply to thresholded estimates).
- NN: Wilcoxon statistic of transformed nearest-neighbour distances,
  W = sqrt(12 n) (1/2 - mean phi(Y_i)), phi(y) = 1 - ((1+cos y)/2)^(n-1).
- TwoPC: number of event pairs within angular distance delta0 (inclusive).

Decisions are calibrated against Monte-Carlo null tables; empirical
p-values use the (r+1)/(R+1) convention with r the count of null
statistics >= the observed one.  The Multiple (and TwoPC scan) combination
is the min-p construction: the combined statistic is the smallest per-scale
empirical p-value and its null distribution is read off the same table.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm as _normal

from .density import ThresholdRule, lp_distance, plugin_mask
from .harmonics import FOUR_PI, HarmonicCoefficients
from .needlets import NeedletCoefficientSet, reference_beta
from .sphere import GALACTIC, pairwise_angles

MULTIPLE_NORMS = ("1", "2", "2star", "inf")
PLUGIN_NORMS = ("1", "2", "inf")


def jstar(n):
    """Finest scale entering the tests: floor(0.5*log2(n / ln n)), at least 1."""
    if n < 2:
        raise ValueError("sample size must be >= 2")
    return max(1, math.floor(0.5 * math.log2(n / math.log(n))))


# ---------------------------------------------------------------------------
# literature statistics


def nn_statistic(dirs):
    """Wilcoxon nearest-neighbour statistic W (asymptotically N(0,1) for
    uniform sampling)."""
    dirs = np.asarray(dirs, dtype=float)
    n = len(dirs)
    if n < 2:
        raise ValueError("nearest-neighbour statistic requires n >= 2")
    ang = pairwise_angles(dirs)
    np.fill_diagonal(ang, np.inf)
    y = ang.min(axis=1)
    ph = nn_phi(y, n)
    return float(np.sqrt(12.0 * n) * (0.5 - ph.mean()))


def nn_phi(y, n):
    """Null marginal CDF of the nearest-neighbour distance under uniformity."""
    return 1.0 - ((1.0 + np.cos(y)) / 2.0) ** (n - 1)


def twopc_statistic(dirs, delta0):
    """Pair count: #{(i < j) : geodesic(X_i, X_j) <= delta0}."""
    if not 0.0 <= delta0 <= np.pi:
        raise ValueError("delta0 must lie in [0, pi]")
    return int(twopc_counts(dirs, np.array([delta0]))[0])


def twopc_counts(dirs, deltas):
    """Pair counts at each angular threshold (inclusive), shape (ndelta,)."""
    dirs = np.asarray(dirs, dtype=float)
    n = len(dirs)
    iu = np.triu_indices(n, 1)
    ang = pairwise_angles(dirs)[iu]
    # count pairs with angle <= delta: cos >= cos(delta); use angles directly
    return np.searchsorted(np.sort(ang), np.asarray(deltas, dtype=float), side="right").astype(np.int64)


# ---------------------------------------------------------------------------
# batch statistic engine


@dataclass
class StatisticsSpec:
    """What to compute per catalog.  ``multiple_J``/``plugin_J`` are the
    largest finest-band columns; tables hold one column per J."""

    multiple_J: int = 0
    multiple_norms: tuple = ()
    plugin_J: int = 0
    plugin_norms: tuple = ()
    plugin_rule: ThresholdRule = field(default_factory=ThresholdRule)
    nn: bool = False
    twopc_deltas_deg: tuple = ()

    def validate(self, frame):
        for p in self.multiple_norms:
            if p not in MULTIPLE_NORMS:
                raise ValueError(f"unsupported Multiple norm {p!r}")
        for p in self.plugin_norms:
            if p not in PLUGIN_NORMS:
                raise ValueError(f"unsupported PlugIn norm {p!r} (2star does not extend to thresholded estimates)")
        if self.multiple_norms and self.multiple_J < 1:
            raise ValueError("multiple_J must be >= 1")
        if self.plugin_norms and self.plugin_J < 1:
            raise ValueError("plugin_J must be >= 1")
        if self.multiple_norms or self.plugin_norms:
            if frame is None:
                raise ValueError("needlet statistics require a frame")
            if self.needlet_scale(frame) > frame.J_max:
                raise ValueError(f"frame J_max={frame.J_max} too small; need scales up to {self.needlet_scale(frame)}")

    def needlet_scale(self, frame=None):
        """Largest needlet scale required by the requested statistics."""
        top = 0
        if self.multiple_norms:
            top = self.multiple_J + (1 if "2star" in self.multiple_norms else 0)
        if self.plugin_norms:
            top = max(top, self.plugin_J)
        return top


class IsotropyEngine:
    """Shared per-catalog statistic evaluator for one (frame, coverage).

    Precomputes the coverage values on the frame mesh, the reference
    harmonic coefficients, and the per-scale reference needlet
    coefficients, so that per-catalog work reduces to one event transform
    plus a handful of filtered syntheses.
    """

    def __init__(self, frame, cov, spec, data_frame=GALACTIC, method="binned"):
        spec.validate(frame)
        self.frame = frame
        self.cov = cov
        self.spec = spec
        self.data_frame = data_frame
        self.method = method
        self.twopc_deltas = np.deg2rad(np.asarray(spec.twopc_deltas_deg, dtype=float))
        self._need_square = bool(spec.plugin_norms) or ("2star" in spec.multiple_norms)
        if not (spec.multiple_norms or spec.plugin_norms):
            self._top_scale = 0
            return
        self.g_mesh = cov.density(frame.mesh.points(), data_frame)
        top = spec.needlet_scale(frame)
        self._top_scale = top
        if top > 0 or spec.multiple_norms:
            L_ref = frame.scales[top].lmax
            if cov.uniform:
                self.g_alm = HarmonicCoefficients.constant(1.0 / FOUR_PI, 0)
                self.ref_betas = [np.zeros(frame.scales[j].grid.npoints) for j in range(top + 1)]
            else:
                self.g_alm = frame.mesh.analysis(self.g_mesh, L_ref)
                self.ref_betas = reference_beta(frame, self.g_alm, J=top)

    def statistics(self, dirs):
        """All requested statistics for one catalog."""
        dirs = np.asarray(dirs, dtype=float)
        n = len(dirs)
        out = {}
        if self.spec.nn:
            out["nn"] = nn_statistic(dirs)
        if len(self.twopc_deltas):
            out["twopc"] = twopc_counts(dirs, self.twopc_deltas)
        if not (self.spec.multiple_norms or self.spec.plugin_norms):
            return out
        frame, spec = self.frame, self.spec
        top = self._top_scale
        L_need = (2 if self._need_square else 1) * frame.scales[top].lmax
        alm = frame.event_coefficients(dirs, L_need, method=self.method)
        coeffs = NeedletCoefficientSet(n=n, reference=self.cov.describe()["kind"])
        zeta_sums = []
        for j in range(top + 1):
            sd = frame.scales[j]
            u, v = frame.scale_fields(alm, j, with_square=self._need_square)
            sqlam = sd.sqrt_lambda()
            beta = sqlam * u
            coeffs.beta.append(beta)
            if self._need_square:
                msq = sqlam**2 * v
                coeffs.sigma2.append(np.maximum(0.0, msq - beta**2))
                coeffs.delta.append(n * v / sd.D1**2)
                if "2star" in spec.multiple_norms:
                    bg = self.ref_betas[j]
                    s1 = n * (beta - bg)
                    s2 = n * msq - 2.0 * n * bg * beta + n * bg**2
                    zeta_sums.append(float(np.sum(s1**2 - s2) / (n * (n - 1.0))))
        if spec.multiple_norms:
            out["multiple"] = self._multiple_stats(alm, coeffs, zeta_sums)
        if spec.plugin_norms:
            out["plugin"] = self._plugin_stats(n, coeffs)
        return out

    def _mesh_band(self, alm, filt_table):
        filt = np.zeros(alm.L + 1)
        filt[: len(filt_table)] = filt_table
        return self.frame.mesh.synthesis(alm.filtered(filt))

    def _multiple_stats(self, alm, coeffs, zeta_sums):
        frame, spec = self.frame, self.spec
        mesh = frame.mesh
        grid_norms = [p for p in spec.multiple_norms if p != "2star"]
        stats = {p: np.empty(spec.multiple_J) for p in spec.multiple_norms}
        if grid_norms:
            # DC of the event map is exactly 1/(4*pi): weights sum to one
            fields = np.full(mesh.npoints, 1.0 / FOUR_PI)
            for j in range(spec.multiple_J + 1):
                sd = frame.scales[j]
                fields = fields + self._mesh_band(alm, sd.sqrt_b[: sd.lmax + 1] ** 2)
                if j >= 1:
                    for p in grid_norms:
                        stats[p][j - 1] = lp_distance(fields, self.g_mesh, p, mesh)
        if "2star" in spec.multiple_norms:
            cum = np.cumsum(zeta_sums)
            stats["2star"] = cum[2 : spec.multiple_J + 2].copy()
        return stats

    def _plugin_stats(self, n, coeffs):
        frame, spec = self.frame, self.spec
        mesh = frame.mesh
        logn = math.log(n)
        stats = {p: np.empty(spec.plugin_J) for p in spec.plugin_norms}
        fields = np.full(mesh.npoints, 1.0 / FOUR_PI)
        for j in range(1, spec.plugin_J + 1):
            sd = frame.scales[j]
            mask = plugin_mask(coeffs, j, spec.plugin_rule, logn)
            if mask.any():
                samples = (coeffs.beta[j] * mask) / sd.sqrt_lambda()
                band = sd.grid.analysis(samples, sd.lmax).filtered(sd.sqrt_b)
                fields = fields + mesh.synthesis(band)
            for p in spec.plugin_norms:
                stats[p][j - 1] = lp_distance(fields, self.g_mesh, p, mesh)
        return stats


def multiple_statistics(dirs, frame, cov, p, J, data_frame=GALACTIC, method="binned"):
    """Per-scale Multiple statistics d(f_hat_j, g), j = 1..J, for one norm."""
    spec = StatisticsSpec(multiple_J=J, multiple_norms=(str(p),))
    engine = IsotropyEngine(frame, cov, spec, data_frame, method)
    return engine.statistics(dirs)["multiple"][str(p)]


# ---------------------------------------------------------------------------
# decisions


@dataclass
class TestDecision:
    method: str
    p_value: float
    alpha: float
    reject: bool
    norm: str | None = None
    jstar: int | None = None
    statistic: object = None
    table_id: str | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        out = {
            "method": self.method,
            "p": self.norm,
            "jstar": self.jstar,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "alpha": self.alpha,
            "reject": bool(self.reject),
            "table_id": self.table_id,
        }
        out.update(self.diagnostics)
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def _check_table(table, method, n=None, frame_hash=None, norm=None, min_replicates=1000):
    if table.method != method:
        raise ValueError(f"table holds {table.method!r} statistics, expected {method!r}")
    if table.R < min_replicates:
        raise ValueError(f"table has R={table.R} < required floor {min_replicates}")
    if n is not None and table.meta.get("n") != n:
        raise ValueError(f"table was built for n={table.meta.get('n')}, catalog has n={n}")
    if frame_hash is not None and table.meta.get("frame_hash") not in (None, frame_hash):
        raise ValueError("table frame hash does not match the supplied frame")
    if norm is not None and table.meta.get("norm") not in (None, str(norm)):
        raise ValueError(f"table norm {table.meta.get('norm')!r} does not match {norm!r}")


def minp_combination(table, observed, ncols):
    """Min-p combined p-value of ``observed`` (length >= ncols) against the
    first ncols columns of a null table.

    Per-column empirical p-values use (count_ge + 1)/(R + 1); the null
    distribution of the minimum is computed from the table itself with the
    same convention.  With a single column this reduces exactly to the
    plain one-sided empirical p-value.
    """
    R = table.R
    obs_p = np.array([(table.rank_count(observed[c], c) + 1.0) / (R + 1.0) for c in range(ncols)])
    q_obs = float(obs_p.min())
    q_null = table.null_minp(ncols)
    count = int(np.searchsorted(q_null, q_obs, side="right"))
    return (count + 1.0) / (R + 1.0), q_obs, int(obs_p.argmin()), obs_p


def multiple_decide(stats, table, alpha, J=None, n=None, frame_hash=None, min_replicates=1000):
    """Min-p decision over scales 1..J from per-scale statistics."""
    stats = np.asarray(stats, dtype=float)
    if J is None:
        J = len(stats)
    _check_table(table, "multiple", n=n, frame_hash=frame_hash, min_replicates=min_replicates)
    if table.ncols < J or len(stats) < J:
        raise ValueError("table or statistic vector has fewer scales than requested")
    p_value, q_obs, argmin, obs_p = minp_combination(table, stats, J)
    return TestDecision(
        method="multiple",
        p_value=p_value,
        alpha=alpha,
        reject=p_value <= alpha,
        norm=table.meta.get("norm"),
        jstar=J,
        statistic=[float(s) for s in stats[:J]],
        table_id=table.table_id(),
        diagnostics={"scale_p_values": [float(x) for x in obs_p], "firing_scale": argmin + 1, "min_p": q_obs},
    )


def scalar_decide(method, value, table, alpha, col=None, n=None, frame_hash=None, min_replicates=1000, norm=None):
    _check_table(table, method, n=n, frame_hash=frame_hash, norm=norm, min_replicates=min_replicates)
    p = (table.rank_count(value, col) + 1.0) / (table.R + 1.0)
    return TestDecision(
        method=method,
        p_value=p,
        alpha=alpha,
        reject=p <= alpha,
        norm=table.meta.get("norm"),
        statistic=float(value),
        table_id=table.table_id(),
    )


def plugin_decide(stat, table, alpha, J=None, n=None, frame_hash=None, min_replicates=1000):
    """One-sided decision for the PlugIn statistic; with a (R, J) table the
    column is selected by the finest band J."""
    col = None if table.data.ndim == 1 else (J or table.ncols) - 1
    d = scalar_decide("plugin", stat, table, alpha, col=col, n=n, frame_hash=frame_hash, min_replicates=min_replicates)
    d.jstar = J
    return d


def nn_decide(W, alpha, table=None, asymptotic=False, coverage_uniform=True, n=None, frame_hash=None, min_replicates=1000):
    """Nearest-neighbour decision: one-sided for large W.

    ``asymptotic`` uses the standard normal upper tail and is only valid
    for uniform coverage; otherwise a Monte-Carlo table is required.
    """
    if asymptotic:
        if not coverage_uniform:
            raise ValueError("asymptotic NN calibration is only valid under uniform coverage")
        p = float(_normal.sf(W))
        return TestDecision(method="nn", p_value=p, alpha=alpha, reject=p <= alpha, statistic=float(W), table_id="asymptotic")
    if table is None:
        raise ValueError("a null table is required unless asymptotic=True")
    return scalar_decide("nn", W, table, alpha, n=n, frame_hash=frame_hash, min_replicates=min_replicates)


def twopc_decide(count, table, alpha, delta0_deg=None, n=None, min_replicates=1000):
    """One-sided decision on the pair count; ties at the threshold count
    toward the p-value (>= convention)."""
    col = None
    if table.data.ndim == 2:
        deltas = table.meta.get("twopc_deltas_deg", [])
        if delta0_deg is None:
            raise ValueError("table holds several delta0 values; specify delta0_deg")
        matches = [i for i, d in enumerate(deltas) if abs(d - delta0_deg) < 1e-9]
        if not matches:
            raise ValueError(f"delta0={delta0_deg} deg not present in table grid {deltas}")
        col = matches[0]
    d = scalar_decide("twopc", count, table, alpha, col=col, n=n, min_replicates=min_replicates)
    d.diagnostics["delta0_deg"] = delta0_deg
    return d


def twopc_scan_pvalue(counts, table, min_replicates=1000):
    """Scan the pair count over the table's delta grid.

    Returns (naive minimum p-value, argmin delta in degrees, scan-adjusted
    p-value).  The naive minimum exaggerates significance; the adjusted
    value applies the same minimization to every null replicate.
    """
    _check_table(table, "twopc", min_replicates=min_replicates)
    counts = np.asarray(counts, dtype=float)
    if table.ncols != len(counts):
        raise ValueError("scan requires one count per table delta")
    adjusted, naive, argmin, _ = minp_combination(table, counts, len(counts))
    deltas = table.meta.get("twopc_deltas_deg")
    return naive, float(deltas[argmin]), adjusted
