"""Compression ratio -> semantic distortion, backed by a measured table.

The table is stored as the measurement reports it, ratio = dim(x)/dim(z) >= 1.
The allocation side works with o = dim(z)/dim(x) in (0, 1], so lookups
invert at the boundary: table ratio = 1 / o.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np


class CompressionDomainError(ValueError):
    pass


@dataclass(frozen=True)
class TableEntry:
    ratio: float
    latent_dimension: int
    mse_loss: float

    @property
    def o(self) -> float:
        return 1.0 / self.ratio


@dataclass(frozen=True)
class CompressionChoice:
    ratio_o: float
    sem_std: float


class CompressionTable:
    """Immutable ratio -> MSE table with log-linear interpolation."""

    def __init__(self, entries):
        entries = sorted(entries, key=lambda e: e.ratio)
        if not entries:
            raise CompressionDomainError("compression table is empty")
        for a, b in zip(entries, entries[1:]):
            if not a.ratio < b.ratio:
                raise CompressionDomainError(f"duplicate ratio {a.ratio}")
            if not a.mse_loss < b.mse_loss:
                raise CompressionDomainError(
                    f"mse must increase with ratio (ratio {a.ratio} -> {b.ratio})")
        for e in entries:
            if not e.ratio > 1 or not 0 <= e.mse_loss <= 1 or e.latent_dimension < 1:
                raise CompressionDomainError(f"invalid table entry {e}")
        self.entries = tuple(entries)
        # (ratio 1, mse 0) anchors the lossless end
        self._log_ratio = np.log(np.array([1.0] + [e.ratio for e in entries]))
        self._mse = np.array([0.0] + [e.mse_loss for e in entries])

    def __len__(self):
        return len(self.entries)

    @property
    def min_o(self) -> float:
        return 1.0 / self.entries[-1].ratio

    @classmethod
    def from_file(cls, path) -> "CompressionTable":
        return cls.from_text(Path(path).read_text())

    @classmethod
    def from_text(cls, text: str) -> "CompressionTable":
        entries = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#") or line.lower().startswith("ratio"):
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 3:
                raise CompressionDomainError(f"line {lineno}: expected 'ratio latent_dim mse'")
            try:
                entries.append(TableEntry(float(parts[0]), int(parts[1]), float(parts[2])))
            except ValueError as exc:
                raise CompressionDomainError(f"line {lineno}: {exc}") from None
        return cls(entries)

    @classmethod
    def default(cls) -> "CompressionTable":
        text = resources.files("semcom_alloc").joinpath("data/compression_table.tsv").read_text()
        return cls.from_text(text)

    def distortion_for_ratio(self, o):
        """Semantic distortion variance (MSE) at compression ratio ``o``; vectorised."""
        o_arr = np.asarray(o, dtype=float)
        if np.any(~((o_arr > 0) & (o_arr <= 1))):
            raise CompressionDomainError("compression ratio o must lie in (0, 1]")
        log_ratio = -np.log(o_arr)
        # np.interp clamps beyond the last point
        mse = np.interp(log_ratio, self._log_ratio, self._mse)
        # snap round-off neighbours of table points (1/(1/192) != 192 in floats) to exact values
        idx = np.clip(np.searchsorted(self._log_ratio, log_ratio), 0, len(self._mse) - 1)
        for k in (idx - 1, idx):
            k = np.clip(k, 0, len(self._mse) - 1)
            hit = np.abs(self._log_ratio[k] - log_ratio) < 1e-12
            mse = np.where(hit, self._mse[k], mse)
        return float(mse) if np.ndim(mse) == 0 else mse

    def sem_std_for_ratio(self, o):
        return np.sqrt(self.distortion_for_ratio(o))

    def choices(self, include_lossless: bool = True) -> list[CompressionChoice]:
        """Table points as (o, std), most aggressive first."""
        out = [CompressionChoice(e.o, math.sqrt(e.mse_loss)) for e in reversed(self.entries)]
        if include_lossless:
            out.append(CompressionChoice(1.0, 0.0))
        return out

    def nearest_feasible_ratio(self, target_std: float) -> CompressionChoice:
        """Most aggressive table choice whose semantic std does not exceed ``target_std``."""
        if target_std < 0:
            raise CompressionDomainError("target_std must be >= 0")
        for choice in self.choices():
            if choice.sem_std <= target_std:
                return choice
        return CompressionChoice(1.0, 0.0)


_DEFAULT = None


def default_table() -> CompressionTable:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = CompressionTable.default()
    return _DEFAULT


def distortion_for_ratio(o, table: CompressionTable | None = None):
    return (table or default_table()).distortion_for_ratio(o)


def sem_std_for_ratio(o, table: CompressionTable | None = None):
    return (table or default_table()).sem_std_for_ratio(o)


def nearest_feasible_ratio(target_std: float, table: CompressionTable | None = None) -> CompressionChoice:
    return (table or default_table()).nearest_feasible_ratio(target_std)
