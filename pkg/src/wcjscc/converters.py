"""Lift an ``n``-slot scheme to an ``n*b``-slot scheme for non-Gaussian data.

:func:`convert_for_source` transforms the *sources* (block transform plus
interleaving) and runs the inner scheme ``b`` times back to back, once per
sub-block.  :func:`convert_for_noise` transforms the *channel*: physical
transmit blocks are ``Q^T`` of effective inputs and effective outputs are
``Q`` of physical received blocks, which turns an additive network into
``b`` parallel copies of itself with mixed noise.
"""

import numpy as np

from .errors import InvalidInputError
from .network import History
from .schemes import ClipSpec, CodingScheme, PrecisionSpec, clip_outputs
from .schemes import limit_encoding_precision, limit_reading_precision
from .transform import BlockGeometry, build_q, degaussianize_source, gaussianize_source

__all__ = ["SourceConvertedScheme", "NoiseConvertedScheme", "convert_for_source", "convert_for_noise"]

DEFAULT_CLIP = ClipSpec(1e6)
DEFAULT_PRECISION = PrecisionSpec(30)


def _check_b(b):
    if isinstance(b, bool) or int(b) != b or b < 2 or b % 2:
        raise InvalidInputError(f"b must be an even integer >= 2, got {b!r}")
    return int(b)


class _Converted(CodingScheme):
    def __init__(self, inner, b, label):
        b = _check_b(b)
        if not isinstance(inner, CodingScheme):
            raise InvalidInputError("inner must be a CodingScheme")
        super().__init__(inner.n * b, inner.k, f"{label}[b={b}]({inner.name})")
        self.inner = inner
        self.b = b
        self.geometry = BlockGeometry(inner.n, b)
        self.q = build_q(b)
        self.builtin = inner.builtin

    def source_encode(self, m, t, x, y):
        raise TypeError("converted schemes keep per-run buffers; use scheme.session()")

    relay_encode = destination_encode = decode = source_encode


class _SourceSession:
    def __init__(self, scheme, rng):
        self.n = scheme.inner.n
        self.geometry = scheme.geometry
        self.inner = [scheme.inner.session(rng) for _ in range(scheme.b)]
        self._effective = {}

    def source_encode(self, m, t, x, y):
        if m not in self._effective:
            self._effective[m] = gaussianize_source(x, self.geometry)
        ell, tau = divmod(t, self.n)
        x_eff = self._effective[m][:, ell, :]
        return self.inner[ell].source_encode(m, tau, x_eff, y.window(ell * self.n, t))

    def relay_encode(self, p, t, y):
        ell, tau = divmod(t, self.n)
        return self.inner[ell].relay_encode(p, tau, y.window(ell * self.n, t))

    def destination_encode(self, m, t, y):
        ell, tau = divmod(t, self.n)
        return self.inner[ell].destination_encode(m, tau, y.window(ell * self.n, t))

    def decode(self, m, y):
        n = self.n
        parts = [s.decode(m, y[:, ell * n:(ell + 1) * n]) for ell, s in enumerate(self.inner)]
        return degaussianize_source(np.stack(parts, axis=1), self.geometry)


class SourceConvertedScheme(_Converted):
    def __init__(self, inner, b):
        super().__init__(inner, b, "srcconv")

    def session(self, rng=None):
        return _SourceSession(self, rng)

    def arrange(self, x):
        """Per-sub-block view ``(B, b, n)`` in which distortion is measured."""
        return gaussianize_source(x, self.geometry)


class _NoiseSession:
    """Per-run state: effective inputs are computed once per ``b``-slot block.

    At physical slot ``t*b + j`` only physical outputs ``0 .. t*b - 1`` are
    read, so all ``b`` transmit signals of block ``t`` are fixed before any
    of them goes on the air.
    """

    def __init__(self, scheme, rng):
        self.n = scheme.inner.n
        self.b = scheme.b
        self.Q = scheme.q.entries
        self.inner = [scheme.inner.session(rng) for _ in range(scheme.b)]
        self._tx = {}

    def _effective_history(self, y, t):
        # physical [0, t*b) -> (B, b, t) effective outputs
        past = y[0:t * self.b]
        B = past.shape[0]
        eff = past.reshape(B, t, self.b) @ self.Q.T
        return np.swapaxes(eff, 1, 2)

    def _transmit(self, key, slot, y, encode):
        t, j = divmod(slot, self.b)
        cached = self._tx.get(key)
        if cached is None or cached[0] != t:
            eff_hist = self._effective_history(y, t)
            u_eff = np.stack(
                [np.broadcast_to(encode(ell, t, History(eff_hist[:, ell, :], t)), (eff_hist.shape[0],))
                 for ell in range(self.b)], axis=1)
            cached = (t, u_eff @ self.Q)
            self._tx[key] = cached
        return cached[1][:, j]

    def source_encode(self, m, slot, x, y):
        n = self.n

        def enc(ell, t, h):
            return self.inner[ell].source_encode(m, t, x[:, ell * n:(ell + 1) * n], h)

        return self._transmit(("source", m), slot, y, enc)

    def relay_encode(self, p, slot, y):
        return self._transmit(
            ("relay", p), slot, y, lambda ell, t, h: self.inner[ell].relay_encode(p, t, h))

    def destination_encode(self, m, slot, y):
        return self._transmit(
            ("destination", m), slot, y,
            lambda ell, t, h: self.inner[ell].destination_encode(m, t, h))

    def decode(self, m, y):
        B = y.shape[0]
        eff = y.reshape(B, self.n, self.b) @ self.Q.T  # (B, n, b)
        parts = [s.decode(m, np.ascontiguousarray(eff[:, :, ell])) for ell, s in enumerate(self.inner)]
        return np.concatenate(parts, axis=1)


class NoiseConvertedScheme(_Converted):
    requires_additive = True

    def __init__(self, inner, b):
        super().__init__(inner, b, "noiseconv")

    def session(self, rng=None):
        return _NoiseSession(self, rng)

    def arrange(self, x):
        B = x.shape[0]
        return x.reshape(B, self.b, self.inner.n)


def _maybe_wrap(inner, wrap, clip, precision, limiter):
    if not isinstance(inner, CodingScheme):
        raise InvalidInputError("inner must be a CodingScheme")
    if wrap is None:
        wrap = not inner.builtin
    if not wrap:
        return inner
    return limiter(clip_outputs(inner, clip), precision)


def convert_for_source(inner, b, wrap=None, clip=DEFAULT_CLIP, precision=DEFAULT_PRECISION):
    """Scheme of block length ``n*b`` that feeds the inner scheme transformed sources.

    Source ``m`` splits its ``n*b`` samples into ``n`` blocks, applies
    ``Q`` to each and interleaves the result into ``b`` effective
    length-``n`` sources; sub-block ``l`` is coded during slots
    ``l*n .. l*n + n - 1`` by a fresh copy of the inner scheme.  The
    decoder undoes interleaving and applies ``Q^T``.

    ``wrap`` (default: only for non-builtin inner schemes) first applies
    output clipping and finite encoding precision.
    """
    inner = _maybe_wrap(inner, wrap, clip, precision, limit_encoding_precision)
    return SourceConvertedScheme(inner, b)


def convert_for_noise(inner, b, wrap=None, clip=DEFAULT_CLIP, precision=DEFAULT_PRECISION):
    """Scheme of block length ``n*b`` running ``b`` inner copies on effective channels.

    Only valid on additive networks; the engine rejects other forms.
    ``wrap`` behaves as in :func:`convert_for_source` but applies finite
    reading precision.
    """
    inner = _maybe_wrap(inner, wrap, clip, precision, limit_reading_precision)
    return NoiseConvertedScheme(inner, b)
