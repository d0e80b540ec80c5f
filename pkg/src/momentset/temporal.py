"""Learnable temporal-embedding table with interpolation and timestamp codec.

Rows of the table correspond to relative positions in a video: row 0 is the
start, the last row the end. Interpolation uses the align-corners
convention so those endpoints are preserved at any target length.
"""
from __future__ import annotations

import numpy as np

from . import kernels
from .errors import ConfigError, DegenerateVectorError, TimestampRangeError
from .tensor import Tensor, _record


def _interp_coords(coords: np.ndarray, rows: int):
    """Split continuous row coordinates into (lo, hi, frac)."""
    x = np.clip(coords, 0.0, rows - 1.0)
    lo = np.floor(x).astype(np.int64)
    hi = np.minimum(lo + 1, rows - 1)
    frac = x - lo
    return lo, hi, frac


def interp_table_rows(table: Tensor, coords: np.ndarray) -> Tensor:
    """Linear interpolation of table rows at continuous coordinates.

    Differentiable with respect to the table (scatter-add adjoint).
    """
    rows = table.data.shape[0]
    lo, hi, frac = _interp_coords(np.asarray(coords, dtype=np.float64), rows)
    out = Tensor(kernels.interp_rows(table.data, lo, hi, frac))

    def bwd(g):
        return (kernels.interp_rows_grad(g, lo, hi, frac, rows),)

    return _record(out, (table,), bwd)


class TemporalTable:
    """T0 x d learnable table of relative-time embeddings."""

    def __init__(self, table: Tensor):
        self.table = table

    @property
    def rows(self) -> int:
        return self.table.data.shape[0]

    @property
    def dim(self) -> int:
        return self.table.data.shape[1]

    @classmethod
    def init_sinusoidal(cls, rows: int, dim: int) -> "TemporalTable":
        """Classic 1D sin/cos position table, marked learnable."""
        if rows < 2:
            raise ConfigError(f"temporal table needs >= 2 rows, got {rows}")
        if dim % 2 != 0:
            raise ConfigError(f"temporal embedding width must be even, got {dim}")
        pos = np.arange(rows, dtype=np.float64)[:, None]
        i = np.arange(dim // 2, dtype=np.float64)[None, :]
        angle = pos / np.power(10000.0, 2.0 * i / dim)
        data = np.empty((rows, dim))
        data[:, 0::2] = np.sin(angle)
        data[:, 1::2] = np.cos(angle)
        return cls(Tensor(data, requires_grad=True))

    def interpolate(self, target_len: int) -> Tensor:
        """Resample the table to target_len rows (align-corners linear)."""
        if target_len == self.rows:
            return interp_table_rows(self.table, np.arange(self.rows, dtype=np.float64))
        if target_len == 1:
            coords = np.array([(self.rows - 1) / 2.0])
        else:
            coords = np.arange(target_len, dtype=np.float64) * (
                (self.rows - 1) / (target_len - 1)
            )
        return interp_table_rows(self.table, coords)

    def _coord(self, t: float, duration: float) -> float:
        if duration <= 0:
            raise TimestampRangeError(f"duration must be positive, got {duration}")
        if t < 0 or t > duration:
            raise TimestampRangeError(
                f"timestamp {t} outside [0, {duration}]"
            )
        return (t / duration) * (self.rows - 1)

    def embed_timestamp(self, t: float, duration: float) -> Tensor:
        """Embedding of a timestamp relative to the video length; 1 x d."""
        coord = self._coord(t, duration)
        return interp_table_rows(self.table, np.array([coord]))

    def embed_timestamps(self, ts, duration: float) -> Tensor:
        """Embeddings of several timestamps at once; len(ts) x d."""
        coords = np.array([self._coord(t, duration) for t in ts])
        return interp_table_rows(self.table, coords)

    def decode_timestamp(self, pred: np.ndarray, duration: float) -> float:
        """Map a predicted embedding back to seconds.

        Argmax of cosine similarity against the base table rows; ties go to
        the smaller index.
        """
        if duration <= 0:
            raise TimestampRangeError(f"duration must be positive, got {duration}")
        p = np.asarray(pred, dtype=np.float64).reshape(-1)
        norm = np.linalg.norm(p)
        if norm < 1e-12:
            raise DegenerateVectorError("decode_timestamp: zero-norm prediction")
        p = p / norm
        rows = self.table.data
        row_norms = np.linalg.norm(rows, axis=1)
        row_norms = np.maximum(row_norms, 1e-12)
        sims = (rows @ p) / row_norms
        idx = int(np.argmax(sims))  # argmax returns the first maximal index
        return (idx / (self.rows - 1)) * duration
