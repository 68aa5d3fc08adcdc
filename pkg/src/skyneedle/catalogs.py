"""Catalog file format: text lines "lon_deg,lat_deg[,energy_eV]".

A header comment declares the frame: ``# frame=galactic`` or
``# frame=equatorial``.  Blank lines and other ``#`` comments are ignored.
Longitudes live in [0, 360), latitudes in [-90, 90], energies (optional,
eV) must be positive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import sphere


class CatalogError(ValueError):
    pass


@dataclass
class Catalog:
    dirs: np.ndarray              # (n, 3) unit vectors
    frame: str = sphere.GALACTIC
    energies: np.ndarray | None = None

    @property
    def n(self):
        return len(self.dirs)

    def in_frame(self, frame):
        return sphere.convert(self.dirs, self.frame, frame)


def read_catalog(path):
    frame = None
    lons, lats, energies = [], [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip().replace(" ", "")
                if body.startswith("frame="):
                    frame = body.split("=", 1)[1].lower()
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) not in (2, 3):
                raise CatalogError(f"{path}:{lineno}: expected 'lon,lat[,energy]', got {line!r}")
            try:
                lon, lat = float(parts[0]), float(parts[1])
                e = float(parts[2]) if len(parts) == 3 else None
            except ValueError as exc:
                raise CatalogError(f"{path}:{lineno}: {exc}") from None
            if not 0.0 <= lon < 360.0:
                raise CatalogError(f"{path}:{lineno}: longitude {lon} outside [0, 360)")
            if not -90.0 <= lat <= 90.0:
                raise CatalogError(f"{path}:{lineno}: latitude {lat} outside [-90, 90]")
            if e is not None and not e > 0:
                raise CatalogError(f"{path}:{lineno}: energy must be positive")
            lons.append(lon)
            lats.append(lat)
            energies.append(e)
    if frame is None:
        raise CatalogError(f"{path}: missing '# frame=galactic|equatorial' header")
    if frame not in sphere.FRAMES:
        raise CatalogError(f"{path}: unknown frame {frame!r}")
    if not lons:
        raise CatalogError(f"{path}: catalog holds no events")
    has_e = [e is not None for e in energies]
    if any(has_e) and not all(has_e):
        raise CatalogError(f"{path}: energies must be present on all lines or none")
    dirs = sphere.lonlat_to_xyz(np.array(lons), np.array(lats))
    en = np.array(energies, dtype=float) if all(has_e) else None
    return Catalog(dirs=dirs, frame=frame, energies=en)


def write_catalog(path, catalog):
    lon, lat = sphere.xyz_to_lonlat(catalog.dirs)
    with open(path, "w") as fh:
        fh.write(f"# frame={catalog.frame}\n")
        for i in range(catalog.n):
            line = f"{lon[i]:.10f},{lat[i]:.10f}"
            if catalog.energies is not None:
                line += f",{catalog.energies[i]:.6e}"
            fh.write(line + "\n")
