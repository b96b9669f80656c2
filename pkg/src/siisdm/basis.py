"""Fixed rank kriging machinery: centroid grids, bisquare bases, exponential
covariance over centroids."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .exceptions import ConfigurationError

DEFAULT_RANGE_MULTIPLIER = 1.5

# lattice counts per axis for the coarse/fine resolution presets
RESOLUTION_COUNTS = {1: 6, 2: 10, 3: 17}


@dataclass(frozen=True)
class BasisConfig:
    """Centroids and common range of a bisquare basis family."""

    centroids: np.ndarray = field(repr=False)  # (B, 2)
    range: float
    resolution: int = 0

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centroids, dtype=float))
        if c.ndim != 2 or c.shape[1] != 2 or c.shape[0] < 1:
            raise ConfigurationError("centroids must be a (B, 2) array with B >= 1")
        if not np.all(np.isfinite(c)):
            raise ConfigurationError("centroids must be finite")
        if self.range <= 0:
            raise ConfigurationError("range must be positive")
        if len(np.unique(c, axis=0)) != len(c):
            raise ConfigurationError("centroids must be distinct")
        object.__setattr__(self, "centroids", c)

    @property
    def n_basis(self) -> int:
        return self.centroids.shape[0]

    def to_dict(self) -> dict:
        return {
            "centroids": self.centroids.tolist(),
            "range": self.range,
            "resolution": self.resolution,
        }

    @staticmethod
    def from_dict(d: dict) -> "BasisConfig":
        return BasisConfig(
            centroids=np.asarray(d["centroids"], dtype=float),
            range=float(d["range"]),
            resolution=int(d.get("resolution", 0)),
        )


def build_centroid_grid(
    bounds: tuple[float, float, float, float],
    counts: tuple[int, int],
    range_multiplier: float = DEFAULT_RANGE_MULTIPLIER,
) -> BasisConfig:
    """Regular lattice of centroids inside ``bounds`` = (xmin, xmax, ymin, ymax).

    The basis range is range_multiplier times the largest inter-centroid
    spacing.  A 1x1 grid places a single centroid at the rectangle center,
    with spacing taken as the larger rectangle side.
    """
    xmin, xmax, ymin, ymax = map(float, bounds)
    nx, ny = counts
    if nx < 1 or ny < 1:
        raise ConfigurationError("need at least one centroid per axis")
    if not (xmax > xmin and ymax > ymin):
        raise ConfigurationError("bounds must enclose a non-degenerate rectangle")
    if range_multiplier <= 0:
        raise ConfigurationError("range_multiplier must be positive")

    def axis_points(lo, hi, n):
        if n == 1:
            return np.array([(lo + hi) / 2.0]), hi - lo
        pts = np.linspace(lo, hi, n)
        return pts, pts[1] - pts[0]

    xs, dx = axis_points(xmin, xmax, nx)
    ys, dy = axis_points(ymin, ymax, ny)
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    centroids = np.column_stack([gx.ravel(), gy.ravel()])
    spacing = max(dx, dy)
    return BasisConfig(centroids=centroids, range=range_multiplier * spacing)


def build_for_resolution(
    bounds: tuple[float, float, float, float],
    resolution: int,
    range_multiplier: float = DEFAULT_RANGE_MULTIPLIER,
) -> BasisConfig:
    """Map a coarse resolution hint to a deterministic lattice size."""
    if resolution not in RESOLUTION_COUNTS:
        raise ConfigurationError(
            f"resolution must be one of {sorted(RESOLUTION_COUNTS)}, got {resolution}"
        )
    n = RESOLUTION_COUNTS[resolution]
    cfg = build_centroid_grid(bounds, (n, n), range_multiplier)
    object.__setattr__(cfg, "resolution", resolution)
    return cfg


def bisquare(location, centroid, range: float):
    """Compactly supported radial function {1 - (d/r)^2}^2, zero beyond d = r."""
    if range <= 0:
        raise ConfigurationError("range must be positive")
    loc = np.asarray(location, dtype=float)
    cen = np.asarray(centroid, dtype=float)
    d = np.sqrt(np.sum((loc - cen) ** 2, axis=-1))
    scaled = d / range
    return np.where(scaled <= 1.0, (1.0 - scaled**2) ** 2, 0.0)


def basis_matrix(locations, config: BasisConfig, warn_uncovered: bool = True) -> np.ndarray:
    """N x B matrix of bisquare basis values at the given locations."""
    locs = np.atleast_2d(np.asarray(locations, dtype=float))
    d = cdist(locs, config.centroids)
    scaled = d / config.range
    mat = np.where(scaled <= 1.0, (1.0 - scaled**2) ** 2, 0.0)
    if warn_uncovered:
        uncovered = ~np.any(mat > 0.0, axis=1)
        if np.any(uncovered):
            warnings.warn(
                f"{int(np.sum(uncovered))} location(s) not covered by any basis "
                "function (all-zero basis row)",
                stacklevel=2,
            )
    return mat


def centroid_distances(config: BasisConfig) -> np.ndarray:
    return cdist(config.centroids, config.centroids)


def exp_covariance(centroids, sigma2: float, scale: float) -> np.ndarray:
    """Exponential covariance sigma2 * exp(-d / scale) over centroid pairs."""
    if sigma2 <= 0 or scale <= 0:
        raise ConfigurationError("sigma2 and scale must be positive")
    c = np.atleast_2d(np.asarray(centroids, dtype=float))
    cov = sigma2 * np.exp(-cdist(c, c) / scale)
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ConfigurationError(
            "covariance matrix is not positive definite (duplicated centroids?)"
        ) from exc
    return cov
