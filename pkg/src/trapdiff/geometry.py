"""Grids and implicit circle geometry for the embedded-boundary solvers.

Cell-centered meshes in 1D and 2D, a circle level set, classification of
2D cells into fluid (Inside), Ghost (bubble cells with a fluid 4-neighbor)
and Inactive cells, orthogonal projections onto the circle, and the
biquadratic interpolation stencils used to evaluate the solution and its
normal derivative at ghost projections.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, StencilDegradationError

INSIDE, GHOST, INACTIVE = 0, 1, 2
_LABEL_NAMES = {INSIDE: "inside", GHOST: "ghost", INACTIVE: "inactive"}


@dataclass(frozen=True)
class Interval1D:
    """Uniform cell-centered interval mesh; centers x_i = x_left + (i - 1/2) h."""

    x_left: float
    n_cells: int
    x_right: float = 1.0

    def __post_init__(self):
        if self.n_cells <= 0:
            raise ConfigurationError("n_cells must be positive")
        if self.x_right <= self.x_left:
            raise ConfigurationError("x_right must exceed x_left")

    @property
    def h(self) -> float:
        return (self.x_right - self.x_left) / self.n_cells

    def centers(self) -> np.ndarray:
        return self.x_left + (np.arange(self.n_cells) + 0.5) * self.h

    def faces(self) -> np.ndarray:
        return self.x_left + np.arange(self.n_cells + 1) * self.h


@dataclass(frozen=True)
class CartesianGrid2D:
    """Uniform square mesh on [-a, a]^2 with N cells per side, h = 2a/N."""

    a: float
    N: int

    def __post_init__(self):
        if self.a <= 0 or self.N <= 0:
            raise ConfigurationError("require a > 0 and N > 0")

    @property
    def h(self) -> float:
        return 2.0 * self.a / self.N

    def centers_1d(self) -> np.ndarray:
        return -self.a + (np.arange(self.N) + 0.5) * self.h

    def center(self, i: int, j: int) -> tuple[float, float]:
        x = self.centers_1d()
        return float(x[i]), float(x[j])


@dataclass(frozen=True)
class CircleLevelSet:
    """Signed distance to a circle: negative inside the bubble."""

    radius: float
    center: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.radius <= 0:
            raise ConfigurationError("radius must be positive")

    def value(self, x, y):
        return np.hypot(np.asarray(x) - self.center[0], np.asarray(y) - self.center[1]) - self.radius


@dataclass
class PointClassification:
    """Per-cell labels plus the ghost-point boundary data."""

    labels: np.ndarray  # (N, N) int8, axis 0 = i (x index), axis 1 = j (y index)
    ghost_indices: np.ndarray  # (n_g, 2) int
    projections: np.ndarray  # (n_g, 2) float
    normals: np.ndarray  # (n_g, 2) float, pointing from bubble into fluid
    thetas: np.ndarray  # (n_g,) float in [-pi, pi)
    curvature: float


def classify(grid: CartesianGrid2D, ls: CircleLevelSet) -> PointClassification:
    """Label every cell Inside / Ghost / Inactive for the circular bubble."""
    h = grid.h
    if ls.radius < h:
        # Degenerate unresolved bubble: treat the whole box as fluid.
        labels = np.zeros((grid.N, grid.N), dtype=np.int8)
        empty2 = np.zeros((0, 2))
        return PointClassification(labels, np.zeros((0, 2), dtype=int), empty2,
                                   empty2, np.zeros(0), 1.0 / ls.radius)
    if h >= ls.radius / 4.0:
        raise ConfigurationError(
            f"grid does not resolve the circle: h = {h} >= R/4 = {ls.radius / 4.0}"
        )
    x = grid.centers_1d()
    X, Y = np.meshgrid(x, x, indexing="ij")
    in_bubble = ls.value(X, Y) < 0.0
    labels = np.where(in_bubble, INACTIVE, INSIDE).astype(np.int8)
    fluid = ~in_bubble
    has_fluid_nb = np.zeros_like(in_bubble)
    has_fluid_nb[1:, :] |= fluid[:-1, :]
    has_fluid_nb[:-1, :] |= fluid[1:, :]
    has_fluid_nb[:, 1:] |= fluid[:, :-1]
    has_fluid_nb[:, :-1] |= fluid[:, 1:]
    ghost_mask = in_bubble & has_fluid_nb
    labels[ghost_mask] = GHOST
    gi, gj = np.nonzero(ghost_mask)
    ghost_indices = np.column_stack([gi, gj])
    px = X[gi, gj] - ls.center[0]
    py = Y[gi, gj] - ls.center[1]
    r = np.hypot(px, py)
    if np.any(r == 0):
        raise ConfigurationError("a ghost cell center coincides with the circle center")
    nx, ny = px / r, py / r
    projections = np.column_stack(
        [ls.center[0] + ls.radius * nx, ls.center[1] + ls.radius * ny]
    )
    normals = np.column_stack([nx, ny])
    thetas = np.arctan2(ny, nx)
    return PointClassification(labels, ghost_indices, projections, normals,
                               thetas, 1.0 / ls.radius)


def project_to_boundary(ls: CircleLevelSet, point):
    """Orthogonal projection onto the circle with normal, angle and curvature."""
    dx = point[0] - ls.center[0]
    dy = point[1] - ls.center[1]
    r = math.hypot(dx, dy)
    if r == 0.0:
        raise ConfigurationError("projection undefined for the circle center")
    nx, ny = dx / r, dy / r
    proj = (ls.center[0] + ls.radius * nx, ls.center[1] + ls.radius * ny)
    theta = math.atan2(ny, nx)
    return proj, (nx, ny), theta, 1.0 / ls.radius


@dataclass
class InterpolationStencil:
    """Tensor-product stencil evaluating c and dc/dn at a boundary projection."""

    indices: np.ndarray  # (k, 2) int cell indices
    value_weights: np.ndarray  # (k,)
    normal_weights: np.ndarray  # (k,)
    biquadratic: bool


def _lagrange_1d(nodes: np.ndarray, x: float):
    """Values and derivatives of the Lagrange basis on the given nodes at x."""
    n = len(nodes)
    vals = np.empty(n)
    ders = np.empty(n)
    for k in range(n):
        others = np.delete(nodes, k)
        denom = np.prod(nodes[k] - others)
        vals[k] = np.prod(x - others) / denom
        d = 0.0
        for m in range(len(others)):
            d += np.prod(np.delete(x - others, m))
        ders[k] = d / denom
    return vals, ders


def ghost_interpolation_stencil(
    grid: CartesianGrid2D, cls: PointClassification, ghost_index: int
) -> InterpolationStencil:
    """Biquadratic patch rooted at the ghost in the upwind-normal direction.

    The 3x3 block starts at the ghost cell and extends two cells toward the
    fluid along the sign of each normal component, so the block contains the
    ghost itself plus (mostly) fluid cells; the weights reproduce the value
    and normal derivative of any biquadratic polynomial exactly at the
    projection.  Falls back to bilinear (2x2) when the full patch is blocked.
    """
    h = grid.h
    x0 = -grid.a + 0.5 * h
    proj = cls.projections[ghost_index]
    normal = cls.normals[ghost_index]
    gi, gj = (int(v) for v in cls.ghost_indices[ghost_index])
    sx = 1 if normal[0] >= 0.0 else -1
    sy = 1 if normal[1] >= 0.0 else -1
    labels = cls.labels
    N = grid.N

    def block_ok(i0, j0, size):
        if i0 < 0 or j0 < 0 or i0 + size > N or j0 + size > N:
            return False
        return not np.any(labels[i0:i0 + size, j0:j0 + size] == INACTIVE)

    def make(i0, j0, size):
        xi = x0 + (i0 + np.arange(size)) * h
        yj = x0 + (j0 + np.arange(size)) * h
        lx, dlx = _lagrange_1d(xi, proj[0])
        ly, dly = _lagrange_1d(yj, proj[1])
        vw = np.outer(lx, ly)
        nw = normal[0] * np.outer(dlx, ly) + normal[1] * np.outer(lx, dly)
        ii, jj = np.meshgrid(i0 + np.arange(size), j0 + np.arange(size), indexing="ij")
        return InterpolationStencil(
            indices=np.column_stack([ii.ravel(), jj.ravel()]),
            value_weights=vw.ravel(),
            normal_weights=nw.ravel(),
            biquadratic=(size == 3),
        )

    def root(ci, cj, size):
        """Lower-left corner of the block starting at (ci, cj), upwind."""
        i0 = ci if sx > 0 else ci - (size - 1)
        j0 = cj if sy > 0 else cj - (size - 1)
        return i0, j0

    # primary block at the ghost, then blocks nudged one cell fluid-ward
    for ci, cj in ((gi, gj), (gi + sx, gj), (gi, gj + sy), (gi + sx, gj + sy)):
        i0, j0 = root(ci, cj, 3)
        if block_ok(i0, j0, 3):
            return make(i0, j0, 3)
    for ci, cj in ((gi, gj), (gi + sx, gj), (gi, gj + sy), (gi + sx, gj + sy)):
        i0, j0 = root(ci, cj, 2)
        if block_ok(i0, j0, 2):
            return make(i0, j0, 2)
    raise StencilDegradationError(
        f"no admissible interpolation patch near ghost {ghost_index}"
    )


def dump_classification(grid: CartesianGrid2D, cls: PointClassification, path):
    """Write (i, j, x, y, label, theta_proj) rows for visualization."""
    x = grid.centers_1d()
    theta_by_cell = {}
    for k, (i, j) in enumerate(cls.ghost_indices):
        theta_by_cell[(int(i), int(j))] = cls.thetas[k]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j", "x", "y", "label", "theta_proj"])
        for i in range(grid.N):
            for j in range(grid.N):
                theta = theta_by_cell.get((i, j), "")
                writer.writerow(
                    [i, j, f"{x[i]:.17g}", f"{x[j]:.17g}",
                     _LABEL_NAMES[int(cls.labels[i, j])],
                     f"{theta:.17g}" if theta != "" else ""]
                )
