"""Uniform truncated grids, sampled fields, and field serialization."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "Grid",
    "Field",
    "build_grid",
    "inner_mask",
    "write_field_csv",
    "read_field_csv",
    "write_field_binary",
    "read_field_binary",
]


@dataclass(frozen=True)
class Grid:
    """Uniform lattice covering [-L, L)^dim with the origin as a node.

    Nodes along each axis sit at (j - n/2) * h for j = 0..n-1 with
    h = 2L/n, so the set is symmetric under x -> -x up to the single
    unpaired node at -L (the periodic image of +L).
    """

    dim: int
    n_per_axis: int
    half_extent: float

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.n_per_axis % 2 != 0 or self.n_per_axis < 4:
            raise ValueError(f"n_per_axis must be even and >= 4, got {self.n_per_axis}")
        if not self.half_extent > 0:
            raise ValueError(f"half_extent must be positive, got {self.half_extent}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_extent / self.n_per_axis

    @property
    def n_nodes(self) -> int:
        return self.n_per_axis ** self.dim

    @property
    def shape(self) -> tuple:
        return (self.n_per_axis,) * self.dim

    def axis(self) -> np.ndarray:
        n = self.n_per_axis
        return (np.arange(n) - n // 2) * self.spacing

    def coords(self) -> np.ndarray:
        """Node coordinates as an (n_nodes, dim) array, row-major."""
        ax = self.axis()
        if self.dim == 1:
            return ax[:, None]
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])

    def radii(self) -> np.ndarray:
        """|x| per node, in grid shape."""
        ax = self.axis()
        if self.dim == 1:
            return np.abs(ax)
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        return np.sqrt(X * X + Y * Y)

    def cell_volume(self) -> float:
        return self.spacing ** self.dim


def build_grid(dim: int, n_per_axis: int, half_extent: float) -> Grid:
    """Build the uniform grid; rejects odd n and nonpositive extent."""
    return Grid(dim=dim, n_per_axis=n_per_axis, half_extent=float(half_extent))


@dataclass
class Field:
    """Real-valued function sampled on a Grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {self.values.shape} does not match grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "Field":
        if grid.dim == 1:
            vals = fn(grid.axis())
        else:
            ax = grid.axis()
            X, Y = np.meshgrid(ax, ax, indexing="ij")
            vals = fn(X, Y)
        return cls(grid, np.asarray(vals, dtype=float))

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))


def inner_mask(grid: Grid, frac: float = 0.5) -> np.ndarray:
    """Boolean mask (grid shape) of nodes with max-norm |x| <= frac * L."""
    cut = frac * grid.half_extent
    ax_ok = np.abs(grid.axis()) <= cut + 1e-12 * grid.half_extent
    if grid.dim == 1:
        return ax_ok
    return ax_ok[:, None] & ax_ok[None, :]


# --- serialization ---------------------------------------------------------
#
# CSV: one row per node, columns are the node coordinates then the value.
# Binary: little-endian header (dim: int64, n_per_axis: int64,
# half_extent: float64, s: float64) followed by row-major float64 values.

_HEADER = struct.Struct("<qqdd")


def write_field_csv(field: Field, path) -> None:
    path = Path(path)
    coords = field.grid.coords()
    vals = field.flat()
    cols = ["x", "y"][: field.grid.dim] + ["value"]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row, v in zip(coords, vals):
            fh.write(",".join("%.17g" % c for c in row) + ",%.17g\n" % v)


def read_field_csv(path, grid: Grid) -> Field:
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    vals = data[:, -1].reshape(grid.shape)
    return Field(grid, vals)


def write_field_binary(field: Field, path, s: float = float("nan")) -> None:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                field.grid.dim, field.grid.n_per_axis, field.grid.half_extent, s
            )
        )
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def read_field_binary(path) -> tuple[Field, float]:
    """Read a binary field record; returns (field, s)."""
    path = Path(path)
    raw = path.read_bytes()
    dim, n, L, s = _HEADER.unpack_from(raw, 0)
    grid = Grid(dim=int(dim), n_per_axis=int(n), half_extent=float(L))
    vals = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(grid.shape)
    return Field(grid, vals.copy()), float(s)
