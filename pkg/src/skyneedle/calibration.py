"""Monte-Carlo null distribution tables: building, ranking, persistence.

A table holds R replicate statistics under the null (one row per
replicate): a vector for scalar methods, an (R, J) matrix of per-scale
statistics for Multiple/PlugIn, an (R, ndelta) matrix of pair counts for
the TwoPC scan.  Replicate r always uses the r-th child of the master seed,
so tables are byte-identical for a given (seed, config) regardless of how
replicates are scheduled across workers.

File format (versioned): 8-byte magic ``SKYNTBL1``, little-endian uint64
header length, UTF-8 JSON header, then the row-major little-endian float64
data block.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .coverage import sample_null
from .procedures import IsotropyEngine
from .sphere import GALACTIC

MAGIC = b"SKYNTBL1"


class NullDistributionTable:
    """Empirical null distribution of one statistic family."""

    def __init__(self, method, data, meta):
        self.method = str(method)
        self.data = np.asarray(data, dtype=np.float64)
        if self.data.ndim not in (1, 2):
            raise ValueError("table data must be a vector or a matrix")
        self.meta = dict(meta)
        self.meta.setdefault("R", self.R)
        self._sorted = None
        self._minp = {}

    @property
    def R(self):
        return self.data.shape[0]

    @property
    def ncols(self):
        return 1 if self.data.ndim == 1 else self.data.shape[1]

    def table_id(self):
        import hashlib

        blob = json.dumps(self.meta, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode() + self.data.tobytes()).hexdigest()[:16]

    def _columns(self):
        if self._sorted is None:
            mat = self.data.reshape(self.R, self.ncols)
            self._sorted = [np.sort(mat[:, c]) for c in range(self.ncols)]
        return self._sorted

    def rank_count(self, value, col=None):
        """r = #{replicates with statistic >= value} (upper tail, ties in)."""
        cols = self._columns()
        c = cols[0 if col is None else int(col)]
        return int(self.R - np.searchsorted(c, value, side="left"))

    def pvalue(self, value, col=None):
        return (self.rank_count(value, col) + 1.0) / (self.R + 1.0)

    def null_minp(self, ncols):
        """Sorted per-replicate min over the first ncols columns of the
        self-ranked empirical p-values ((count_ge + 1)/(R + 1))."""
        key = int(ncols)
        if key not in self._minp:
            mat = self.data.reshape(self.R, self.ncols)
            pvals = np.empty((self.R, key))
            cols = self._columns()
            for c in range(key):
                pos = np.searchsorted(cols[c], mat[:, c], side="left")
                pvals[:, c] = (self.R - pos + 1.0) / (self.R + 1.0)
            self._minp[key] = np.sort(pvals.min(axis=1))
        return self._minp[key]

    # -- persistence --------------------------------------------------------

    def save(self, path):
        header = {
            "format": "skyneedle-nulltable-v1",
            "method": self.method,
            "shape": list(self.data.shape),
            "meta": self.meta,
        }
        blob = json.dumps(header, sort_keys=True, separators=(",", ":"), default=str).encode()
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(np.uint64(len(blob)).astype("<u8").tobytes())
            fh.write(blob)
            fh.write(self.data.astype("<f8").tobytes(order="C"))

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            magic = fh.read(8)
            if magic != MAGIC:
                raise ValueError(f"{path}: not a skyneedle null table")
            (hlen,) = np.frombuffer(fh.read(8), dtype="<u8")
            header = json.loads(fh.read(int(hlen)).decode())
            data = np.frombuffer(fh.read(), dtype="<f8").reshape(header["shape"])
        return cls(header["method"], data.copy(), header["meta"])

    def to_csv(self, path):
        """One row per replicate, for inspection."""
        mat = self.data.reshape(self.R, self.ncols)
        labels = self.meta.get("columns") or [f"col{c}" for c in range(self.ncols)]
        with open(path, "w") as fh:
            fh.write("replicate," + ",".join(str(x) for x in labels) + "\n")
            for r in range(self.R):
                fh.write(f"{r}," + ",".join(repr(float(x)) for x in mat[r]) + "\n")


def table_rank(table, value, scale=None):
    """Upper-tail count r = #{replicates >= value} (module-level alias)."""
    return table.rank_count(value, scale)


def replicate_rngs(seed, R):
    """Independent per-replicate generators from one master seed.

    Child r depends only on (seed, r), never on scheduling, which keeps
    parallel table builds deterministic.
    """
    children = np.random.SeedSequence(seed).spawn(R)
    return [np.random.default_rng(s) for s in children]


def build_tables(frame, cov, n, R, seed, spec, data_frame=GALACTIC, method="binned", n_jobs=1, sampler=None):
    """Build all null tables requested by ``spec`` from one replicate sweep.

    Returns a dict keyed by "multiple:<norm>", "plugin:<norm>", "nn",
    "twopc".  ``sampler(rng) -> dirs`` may override null sampling (used for
    power studies to push alternative catalogs through the same engine).
    """
    if R < 1:
        raise ValueError("replicate count must be >= 1")
    engine = IsotropyEngine(frame, cov, spec, data_frame=data_frame, method=method)
    draw = sampler or (lambda rng: sample_null(cov, n, rng, data_frame))
    rngs = replicate_rngs(seed, R)

    def one(rng):
        return engine.statistics(draw(rng))

    if n_jobs == 1:
        rows = [one(rng) for rng in rngs]
    else:
        from joblib import Parallel, delayed

        rows = Parallel(n_jobs=n_jobs, batch_size=max(1, R // (8 * n_jobs)))(delayed(one)(rng) for rng in rngs)

    base_meta = {
        "n": int(n),
        "R": int(R),
        "seed": int(seed),
        "coverage": cov.describe(),
        "coverage_id": cov.coverage_id(),
        "frame_hash": frame.frame_hash() if frame is not None else None,
        "data_frame": data_frame,
        "coeff_method": method,
    }
    out = {}
    if spec.multiple_norms:
        cols = [f"J{j}" for j in range(1, spec.multiple_J + 1)]
        for p in spec.multiple_norms:
            mat = np.vstack([r["multiple"][p] for r in rows])
            out[f"multiple:{p}"] = NullDistributionTable("multiple", mat, {**base_meta, "norm": p, "columns": cols})
    if spec.plugin_norms:
        cols = [f"J{j}" for j in range(1, spec.plugin_J + 1)]
        rule = {"lam": spec.plugin_rule.lam, "rho": spec.plugin_rule.rho}
        for p in spec.plugin_norms:
            mat = np.vstack([r["plugin"][p] for r in rows])
            out[f"plugin:{p}"] = NullDistributionTable("plugin", mat, {**base_meta, "norm": p, "columns": cols, "rule": rule})
    if spec.nn:
        vec = np.array([r["nn"] for r in rows])
        out["nn"] = NullDistributionTable("nn", vec, {**base_meta, "norm": None})
    if len(spec.twopc_deltas_deg):
        mat = np.vstack([r["twopc"] for r in rows]).astype(float)
        meta = {**base_meta, "norm": None, "twopc_deltas_deg": [float(d) for d in spec.twopc_deltas_deg],
                "columns": [f"delta{d}" for d in spec.twopc_deltas_deg]}
        out["twopc"] = NullDistributionTable("twopc", mat, meta)
    return out


def build_table(method_key, frame, cov, n, R, seed, spec, **kw):
    """Single-table convenience wrapper around :func:`build_tables`."""
    return build_tables(frame, cov, n, R, seed, spec, **kw)[method_key]
