"""Coding schemes: the per-role function families, wrappers and baselines.

A scheme of block length ``n`` for ``k`` source/destination pairs offers
four role methods, all batched over a leading trial axis:

``source_encode(m, t, x, y)``
    ``x`` is source ``m``'s whole block, shape ``(B, n)``; ``y`` is the
    node's :class:`~wcjscc.network.History` of ``t`` past outputs.
``relay_encode(p, t, y)`` / ``destination_encode(m, t, y)``
    Same, without a source argument.
``decode(m, y)``
    ``y`` is the destination's full block of outputs, shape ``(B, n)``.

Schemes are immutable.  The engine calls :meth:`CodingScheme.session` once
per run and talks to the returned object; schemes that need per-run
buffers (converters, dithered wrappers) return a fresh object there.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .network import History, midrise_index, midrise_levels
from .sources import floor_precision

__all__ = [
    "CodingScheme",
    "FunctionScheme",
    "ClipSpec",
    "PrecisionSpec",
    "clip_outputs",
    "limit_encoding_precision",
    "limit_reading_precision",
    "baseline_uncoded_lmmse",
    "baseline_sign_bpsk",
    "baseline_scalar_quantizer",
    "passthrough",
    "SCHEMES",
    "build_scheme",
]


def _zeros(t, y):
    return np.zeros(y.batch)


class CodingScheme:
    """Base class; subclasses override the role methods they use."""

    builtin = False
    requires_additive = False

    def __init__(self, n, k=1, name="scheme"):
        if int(n) != n or n < 1:
            raise InvalidInputError(f"block length must be a positive integer, got {n}")
        if int(k) != k or k < 1:
            raise InvalidInputError(f"k must be a positive integer, got {k}")
        self.n = int(n)
        self.k = int(k)
        self.name = name

    def __repr__(self):
        return f"{type(self).__name__}(name={self.name!r}, n={self.n}, k={self.k})"

    def session(self, rng=None):
        return self

    def source_encode(self, m, t, x, y):
        raise NotImplementedError

    def relay_encode(self, p, t, y):
        return np.zeros(y.batch)

    def destination_encode(self, m, t, y):
        return np.zeros(y.batch)

    def decode(self, m, y):
        raise NotImplementedError


class FunctionScheme(CodingScheme):
    """Scheme assembled from plain callables.

    ``source_encoders[m](t, x, y)``, ``relay_encoders[p](t, y)``,
    ``destination_encoders[m](t, y)`` and ``decoders[m](y)``.  Missing
    relay/destination encoders transmit zero.
    """

    def __init__(self, n, source_encoders, decoders, relay_encoders=None,
                 destination_encoders=None, name="custom", builtin=False):
        source_encoders = tuple(source_encoders)
        decoders = tuple(decoders)
        if len(source_encoders) != len(decoders):
            raise InvalidInputError("need one decoder per source encoder")
        super().__init__(n, len(decoders), name)
        self.source_encoders = source_encoders
        self.decoders = decoders
        self.relay_encoders = dict(relay_encoders or {})
        self.destination_encoders = dict(destination_encoders or {})
        self.builtin = builtin

    def source_encode(self, m, t, x, y):
        return self.source_encoders[m](t, x, y)

    def relay_encode(self, p, t, y):
        return self.relay_encoders.get(p, _zeros)(t, y)

    def destination_encode(self, m, t, y):
        return self.destination_encoders.get(m, _zeros)(t, y)

    def decode(self, m, y):
        return self.decoders[m](y)


# ---------------------------------------------------------------------------
# wrappers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClipSpec:
    M: float

    def __post_init__(self):
        if not (np.isfinite(self.M) and self.M > 0):
            raise InvalidInputError(f"clip bound must be positive and finite, got {self.M}")


@dataclass(frozen=True)
class PrecisionSpec:
    """Number of fractional bits kept, ``rho``, with optional per-role overrides.

    ``overrides`` maps ``(role, index)`` (e.g. ``("source", 0)``) to a
    specific ``rho``.  ``dither`` selects the randomised variant that adds
    uniform noise on ``(-2**-(rho+1), 2**-(rho+1))`` after flooring.
    """

    rho: int = 16
    overrides: dict = field(default_factory=dict)
    dither: bool = False

    def __post_init__(self):
        for r in [self.rho, *self.overrides.values()]:
            if int(r) != r or r < 1:
                raise InvalidInputError(f"precision rho must be an integer >= 1, got {r}")

    def __hash__(self):
        return hash((self.rho, tuple(sorted(self.overrides.items())), self.dither))

    def rho_for(self, role, index):
        return int(self.overrides.get((role, index), self.rho))


class _Delegate:
    """Session forwarding every role call to an inner session."""

    def __init__(self, inner):
        self.inner = inner

    def source_encode(self, m, t, x, y):
        return self.inner.source_encode(m, t, x, y)

    def relay_encode(self, p, t, y):
        return self.inner.relay_encode(p, t, y)

    def destination_encode(self, m, t, y):
        return self.inner.destination_encode(m, t, y)

    def decode(self, m, y):
        return self.inner.decode(m, y)


class _Wrapper(CodingScheme):
    def __init__(self, inner, name):
        super().__init__(inner.n, inner.k, name)
        self.inner = inner
        self.builtin = inner.builtin
        self.requires_additive = inner.requires_additive

    def session(self, rng=None):
        return self._Session(self, self.inner.session(rng), rng)

    # stateless use without an explicit session
    def source_encode(self, m, t, x, y):
        return self.session().source_encode(m, t, x, y)

    def relay_encode(self, p, t, y):
        return self.session().relay_encode(p, t, y)

    def destination_encode(self, m, t, y):
        return self.session().destination_encode(m, t, y)

    def decode(self, m, y):
        return self.session().decode(m, y)


class _ClipSession(_Delegate):
    def __init__(self, scheme, inner, rng):
        super().__init__(inner)
        self.M = scheme.spec.M

    def decode(self, m, y):
        return np.clip(self.inner.decode(m, y), -self.M, self.M)


class ClippedScheme(_Wrapper):
    _Session = _ClipSession

    def __init__(self, inner, spec):
        super().__init__(inner, f"clip({inner.name})")
        self.spec = spec


def clip_outputs(scheme, spec):
    """Clamp every decoder output componentwise to ``[-M, M]``.

    Encoders are untouched, so only reconstructions that were already
    farther than ``M`` from the origin change.
    """
    if not isinstance(spec, ClipSpec):
        spec = ClipSpec(spec)
    return ClippedScheme(scheme, spec)


class _EncodingPrecisionSession(_Delegate):
    def __init__(self, scheme, inner, rng):
        super().__init__(inner)
        self.spec = scheme.spec
        self.rng = rng
        self._dither = {}

    def _quantize(self, m, x):
        rho = self.spec.rho_for("source", m)
        xq = floor_precision(x, rho)
        if not self.spec.dither:
            return xq
        if m not in self._dither:
            if self.rng is None:
                raise InvalidInputError("dithered precision wrapper needs a random generator")
            half = 2.0 ** (-rho - 1)
            self._dither[m] = self.rng.uniform(-half, half, np.shape(x))
        return xq + self._dither[m]

    def source_encode(self, m, t, x, y):
        return self.inner.source_encode(m, t, self._quantize(m, x), y)


class EncodingPrecisionScheme(_Wrapper):
    _Session = _EncodingPrecisionSession

    def __init__(self, inner, spec):
        super().__init__(inner, f"encprec({inner.name})")
        self.spec = spec


def limit_encoding_precision(scheme, spec):
    """Source encoders see only ``floor_precision(x, rho_m)`` of their source."""
    if not isinstance(spec, PrecisionSpec):
        spec = PrecisionSpec(spec)
    return EncodingPrecisionScheme(scheme, spec)


class _ReadingPrecisionSession(_Delegate):
    def __init__(self, scheme, inner, rng):
        super().__init__(inner)
        self.spec = scheme.spec
        self.decoders = scheme.decoders
        self.n = scheme.n
        self.rng = rng
        self._dither = {}

    def _read(self, role, idx, values):
        rho = self.spec.rho_for(role, idx)
        out = floor_precision(values, rho)
        if self.spec.dither:
            key = (role, idx)
            if key not in self._dither:
                if self.rng is None:
                    raise InvalidInputError("dithered precision wrapper needs a random generator")
                half = 2.0 ** (-rho - 1)
                self._dither[key] = self.rng.uniform(-half, half, (values.shape[0], self.n))
            out = out + self._dither[key][:, :values.shape[1]]
        return out

    def _wrap(self, role, idx, y):
        return History(self._read(role, idx, y.values()), len(y))

    def source_encode(self, m, t, x, y):
        return self.inner.source_encode(m, t, x, self._wrap("source", m, y))

    def relay_encode(self, p, t, y):
        return self.inner.relay_encode(p, t, self._wrap("relay", p, y))

    def destination_encode(self, m, t, y):
        return self.inner.destination_encode(m, t, self._wrap("destination", m, y))

    def decode(self, m, y):
        if not self.decoders:
            return self.inner.decode(m, y)
        return self.inner.decode(m, self._read("destination", m, np.asarray(y, dtype=float)))


class ReadingPrecisionScheme(_Wrapper):
    _Session = _ReadingPrecisionSession

    def __init__(self, inner, spec, decoders=True):
        super().__init__(inner, f"readprec({inner.name})")
        self.spec = spec
        self.decoders = decoders


def limit_reading_precision(scheme, spec, decoders=True):
    """Every node sees its received signals only through ``floor_precision``.

    With ``decoders=True`` (default) destinations also decode from the
    floored block, so reconstructions depend on received signals only
    through their ``rho``-bit representation.
    """
    if not isinstance(spec, PrecisionSpec):
        spec = PrecisionSpec(spec)
    return ReadingPrecisionScheme(scheme, spec, decoders)


# ---------------------------------------------------------------------------
# Gaussian-designed baselines (per-slot, repeated over the block)
# ---------------------------------------------------------------------------

def _positive(**kw):
    for name, v in kw.items():
        if not (np.isfinite(v) and v > 0):
            raise InvalidInputError(f"{name} must be positive, got {v}")


def _nonnegative(**kw):
    for name, v in kw.items():
        if not (np.isfinite(v) and v >= 0):
            raise InvalidInputError(f"{name} must be non-negative, got {v}")


def _per_slot(n, k, enc, dec, name):
    """Scheme applying scalar ``enc``/``dec`` to every slot independently."""
    source = tuple((lambda t, x, y: enc(x[:, t])) for _ in range(k))
    decoders = tuple(dec for _ in range(k))
    return FunctionScheme(n, source, decoders, name=name, builtin=True)


def baseline_uncoded_lmmse(power=1.0, source_var=1.0, noise_var=1.0, n=1, k=1):
    """Scale the source to power ``P`` and decode with the linear MMSE gain.

    Under Gaussian design the distortion is ``s2 * z2 / (P + z2)``.
    """
    _positive(power=power, source_var=source_var)
    _nonnegative(noise_var=noise_var)
    gain = np.sqrt(power / source_var)
    dgain = np.sqrt(power * source_var) / (power + noise_var)
    return _per_slot(n, k, lambda x: gain * x, lambda y: dgain * y, "uncoded_lmmse")


def baseline_sign_bpsk(power=1.0, noise_var=1.0, source_var=1.0, n=1, k=1):
    """One-bit scheme: send ``+-sqrt(P)`` by the source's sign.

    The decoder thresholds at zero (ties go to ``+``) and outputs the
    half-normal conditional mean ``+-sigma*sqrt(2/pi)``.
    """
    _positive(power=power, source_var=source_var)
    _nonnegative(noise_var=noise_var)
    amp = np.sqrt(power)
    recon = np.sqrt(source_var) * np.sqrt(2.0 / np.pi)
    return _per_slot(
        n, k,
        lambda x: np.where(x >= 0, amp, -amp),
        lambda y: np.where(y >= 0, recon, -recon),
        "sign_bpsk")


def baseline_scalar_quantizer(rate=3, source_var=1.0, loading=4.0, link_amplitude=1.0, n=1, k=1):
    """``2**rate``-cell mid-rise quantizer over ``[-A*sigma, A*sigma]``.

    The encoder sends the cell index as the matching level of a bit pipe
    with the same rate over ``[-link_amplitude, link_amplitude]``; the
    decoder maps the received level back to the cell midpoint.

    >>> s = baseline_scalar_quantizer(rate=1, source_var=1.0, loading=1.0)
    >>> float(s.decoders[0](s.source_encoders[0](0, np.array([[0.3]]), None)[:, None])[0, 0])
    0.5
    """
    if int(rate) != rate or not 1 <= rate <= 16:
        raise InvalidInputError(f"rate must be an integer in 1..16, got {rate}")
    _positive(source_var=source_var, loading=loading, link_amplitude=link_amplitude)
    span = loading * np.sqrt(source_var)

    def enc(x):
        return midrise_levels(midrise_index(x, rate, span), rate, link_amplitude)

    def dec(y):
        return midrise_levels(midrise_index(y, rate, link_amplitude), rate, span)

    return _per_slot(n, k, enc, dec, "scalar_quantizer")


def passthrough(gain=1.0, n=1, k=1):
    """Send ``gain * x`` uncoded and decode ``y / gain``."""
    if gain == 0 or not np.isfinite(gain):
        raise InvalidInputError("gain must be finite and non-zero")
    return _per_slot(n, k, lambda x: gain * x, lambda y: y / gain, "passthrough")


SCHEMES = {
    "passthrough": passthrough,
    "scalar_quantizer": baseline_scalar_quantizer,
    "sign_bpsk": baseline_sign_bpsk,
    "uncoded_lmmse": baseline_uncoded_lmmse,
}


def build_scheme(name, **params):
    try:
        factory = SCHEMES[name]
    except KeyError:
        raise InvalidInputError(
            f"unknown scheme {name!r}; known: {', '.join(sorted(SCHEMES))}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise InvalidInputError(f"bad parameters for scheme {name!r}: {exc}") from None
