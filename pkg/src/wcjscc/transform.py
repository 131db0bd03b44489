"""Real DFT-based unitary transform and the block interleaving layout.

Layout conventions used throughout the package:

* A length ``n*b`` sequence is read as ``n`` consecutive blocks of length
  ``b``; block ``t`` holds samples ``t*b .. t*b + b - 1``.
* After transforming every block, coordinate ``l`` of block ``t`` is stored
  at ``out[..., l, t]``.  ``out[..., l, :]`` is the length-``n`` sub-block
  ``l`` (one effective i.i.d. sequence).

All functions accept extra leading axes (batches of trials, sources).
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidInputError

__all__ = [
    "TransformQ",
    "BlockGeometry",
    "build_q",
    "apply_q",
    "apply_q_inverse",
    "apply_q_fft",
    "interleave",
    "deinterleave",
    "gaussianize_source",
    "degaussianize_source",
]


@dataclass(frozen=True, eq=False)
class TransformQ:
    b: int
    entries: np.ndarray

    def __repr__(self):
        return f"TransformQ(b={self.b})"


@dataclass(frozen=True)
class BlockGeometry:
    n: int
    b: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise InvalidInputError(f"n must be a positive integer, got {self.n}")
        _check_even(self.b)

    @property
    def total(self):
        return self.n * self.b


def _check_even(b):
    if isinstance(b, bool) or int(b) != b or b < 2 or b % 2:
        raise InvalidInputError(f"block size b must be an even integer >= 2, got {b!r}")
    return int(b)


@lru_cache(maxsize=32)
def _q_entries(b):
    i = np.arange(b)[:, None]
    j = np.arange(b)[None, :]
    h = b // 2
    q = np.empty((b, b))
    q[0] = 1.0 / np.sqrt(b)
    q[1:h] = np.sqrt(2.0 / b) * np.cos(2.0 * np.pi * j * i[1:h] / b)
    q[h] = np.where(np.arange(b) % 2 == 0, 1.0, -1.0) / np.sqrt(b)
    q[h + 1:] = np.sqrt(2.0 / b) * np.sin(2.0 * np.pi * j * (i[h + 1:] - h) / b)
    q.setflags(write=False)
    return q


def build_q(b):
    """Return the ``b x b`` real unitary matrix.

    Row 0 is the constant ``1/sqrt(b)``, rows ``1..b/2-1`` are scaled
    cosines, row ``b/2`` alternates ``+-1/sqrt(b)`` and rows
    ``b/2+1..b-1`` are scaled sines.  Entries are cached per ``b``.

    >>> build_q(2).entries * np.sqrt(2)
    array([[ 1.,  1.],
           [ 1., -1.]])
    """
    b = _check_even(b)
    return TransformQ(b, _q_entries(b))


def _as_blocks(q, block):
    block = np.asarray(block, dtype=float)
    if block.ndim == 0 or block.shape[-1] != q.b:
        raise InvalidInputError(
            f"expected trailing length {q.b}, got shape {block.shape}")
    return block


def apply_q(q, block):
    """Return ``Q @ block`` along the last axis."""
    block = _as_blocks(q, block)
    return block @ q.entries.T


def apply_q_inverse(q, block):
    """Return ``Q^T @ block`` along the last axis (``Q`` is orthogonal)."""
    block = _as_blocks(q, block)
    return block @ q.entries


def apply_q_fft(q, block):
    """Same as :func:`apply_q` but via a real FFT, O(b log b) per block."""
    block = _as_blocks(q, block)
    b = q.b
    h = b // 2
    spec = np.fft.rfft(block, axis=-1)
    out = np.empty(block.shape)
    out[..., 0] = spec[..., 0].real / np.sqrt(b)
    out[..., 1:h] = np.sqrt(2.0 / b) * spec[..., 1:h].real
    out[..., h] = spec[..., h].real / np.sqrt(b)
    out[..., h + 1:] = -np.sqrt(2.0 / b) * spec[..., 1:h].imag
    return out


def _check_geometry(x, geom):
    x = np.asarray(x)
    if x.ndim == 0 or x.shape[-1] != geom.total:
        raise InvalidInputError(
            f"expected trailing length n*b = {geom.total}, got shape {x.shape}")
    return x


def interleave(x, geom):
    """Rearrange ``n`` length-``b`` blocks into ``b`` length-``n`` sub-blocks.

    Element ``[..., l, t]`` of the result is ``x[..., t*b + l]``.  No
    arithmetic is performed, so the map is an exact bijection.
    """
    x = _check_geometry(x, geom)
    lead = x.shape[:-1]
    return np.swapaxes(x.reshape(lead + (geom.n, geom.b)), -1, -2).copy()


def deinterleave(blocks, geom):
    """Exact inverse of :func:`interleave`."""
    blocks = np.asarray(blocks)
    if blocks.ndim < 2 or blocks.shape[-2:] != (geom.b, geom.n):
        raise InvalidInputError(
            f"expected trailing shape ({geom.b}, {geom.n}), got {blocks.shape}")
    lead = blocks.shape[:-2]
    return np.swapaxes(blocks, -1, -2).reshape(lead + (geom.total,)).copy()


def gaussianize_source(x, geom):
    """Transform each length-``b`` block with ``Q`` and interleave.

    ``x`` has shape ``(..., n*b)``; a 2-D input is treated as a family of
    ``k`` sources (one per row).  A list of per-source sequences with
    unequal lengths is rejected.  Returns shape ``(..., b, n)``.
    """
    if isinstance(x, (list, tuple)):
        lengths = {len(np.ravel(s)) for s in x}
        if len(lengths) > 1:
            raise InvalidInputError(f"source sequences have unequal lengths {sorted(lengths)}")
    x = _check_geometry(np.asarray(x, dtype=float), geom)
    q = build_q(geom.b)
    lead = x.shape[:-1]
    coeffs = apply_q(q, x.reshape(lead + (geom.n, geom.b)))
    return np.swapaxes(coeffs, -1, -2)


def degaussianize_source(blocks, geom):
    """Inverse of :func:`gaussianize_source`."""
    blocks = np.asarray(blocks, dtype=float)
    if blocks.ndim < 2 or blocks.shape[-2:] != (geom.b, geom.n):
        raise InvalidInputError(
            f"expected trailing shape ({geom.b}, {geom.n}), got {blocks.shape}")
    q = build_q(geom.b)
    lead = blocks.shape[:-2]
    samples = apply_q_inverse(q, np.swapaxes(blocks, -1, -2))
    return samples.reshape(lead + (geom.total,))
