"""Graph convolution through the power-series filter, without eigensolves.

One sweep maintains the running propagated block P <- L P and accumulates
c_d * P, so the cost is D sparse products (O(m E D) multiply-adds) and no
dense matrix power is ever formed. The propagated blocks L^d X can also be
computed once, persisted to disk, and reused across training runs.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import DegreeMismatch, DimensionMismatch, FormatError
from .graph import SparseMatrix, spmv
from .trig import TaylorTables, TrigParams, effective_coefficients

_MAGIC = b"SFLABPF1"
_VERSION = 1


@dataclass(frozen=True)
class PropagatedFeatures:
    """Blocks [X, L X, L^2 X, ..., L^D X], each n x m."""

    D: int
    blocks: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.blocks) != self.D + 1:
            raise DimensionMismatch("need exactly D + 1 blocks")

    @property
    def shape(self) -> tuple[int, int]:
        return self.blocks[0].shape


def tpd_convolve(
    L: SparseMatrix, X: np.ndarray, params: TrigParams, tables: TaylorTables
) -> np.ndarray:
    """Z = sum_d c_d L^d X with c_d from the coefficient tables."""
    if L.n_rows != L.n_cols:
        raise DimensionMismatch("L must be square")
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != L.n_rows:
        raise DimensionMismatch(
            f"X has {X.shape[0]} rows but L is {L.n_rows}x{L.n_cols}"
        )
    c = effective_coefficients(params, tables)
    P = X
    Z = c[0] * P
    for d in range(1, tables.D + 1):
        P = spmv(L, P)
        Z = Z + c[d] * P
    return Z


def precompute(L: SparseMatrix, X: np.ndarray, D: int) -> PropagatedFeatures:
    """All propagated blocks up to L^D X."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != L.n_rows or L.n_rows != L.n_cols:
        raise DimensionMismatch("feature rows must match the (square) operator")
    blocks = [X]
    for _ in range(D):
        blocks.append(spmv(L, blocks[-1]))
    return PropagatedFeatures(D=D, blocks=tuple(blocks))


def convolve_from_precomputed(
    feats: PropagatedFeatures, params: TrigParams, tables: TaylorTables
) -> np.ndarray:
    """Same accumulation as tpd_convolve, reading stored blocks instead of
    re-propagating; identical arithmetic order, so results match bit-for-bit."""
    if feats.D < tables.D:
        raise DegreeMismatch(
            f"precomputed degree {feats.D} < requested degree {tables.D}"
        )
    c = effective_coefficients(params, tables)
    Z = c[0] * feats.blocks[0]
    for d in range(1, tables.D + 1):
        Z = Z + c[d] * feats.blocks[d]
    return Z


# ---------------------------------------------------------------------------
# Feature persistence: little-endian binary with a trailing CRC32
# ---------------------------------------------------------------------------
#
# layout: magic (8 bytes) | version u32 | n u64 | m u64 | D u32
#         | (D+1) row-major float64 blocks | crc32 u32 of all prior bytes


def save_features(feats: PropagatedFeatures, path) -> None:
    n, m = feats.shape
    header = _MAGIC + struct.pack("<IQQI", _VERSION, n, m, feats.D)
    crc = zlib.crc32(header)
    with open(path, "wb") as fh:
        fh.write(header)
        for block in feats.blocks:
            raw = np.ascontiguousarray(block, dtype="<f8").tobytes()
            crc = zlib.crc32(raw, crc)
            fh.write(raw)
        fh.write(struct.pack("<I", crc & 0xFFFFFFFF))


def load_features(path) -> PropagatedFeatures:
    with open(path, "rb") as fh:
        payload = fh.read()
    head_len = len(_MAGIC) + struct.calcsize("<IQQI")
    if len(payload) < head_len + 4:
        raise FormatError(f"{path}: truncated header")
    if payload[: len(_MAGIC)] != _MAGIC:
        raise FormatError(f"{path}: bad magic")
    version, n, m, D = struct.unpack_from("<IQQI", payload, len(_MAGIC))
    if version != _VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    block_bytes = n * m * 8
    expect = head_len + (D + 1) * block_bytes + 4
    if len(payload) != expect:
        raise FormatError(
            f"{path}: expected {expect} bytes for n={n}, m={m}, D={D}, "
            f"got {len(payload)}"
        )
    (stored_crc,) = struct.unpack_from("<I", payload, expect - 4)
    if zlib.crc32(payload[: expect - 4]) & 0xFFFFFFFF != stored_crc:
        raise FormatError(f"{path}: checksum mismatch")
    blocks = []
    off = head_len
    for _ in range(D + 1):
        arr = np.frombuffer(payload, dtype="<f8", count=n * m, offset=off)
        blocks.append(arr.reshape(n, m).astype(np.float64))
        off += block_bytes
    return PropagatedFeatures(D=D, blocks=tuple(blocks))
