"""Seeded i.i.d. vector sources with a prescribed covariance.

Every marginal family is standardised (mean 0, variance 1) and vectors are
coloured with a factor ``F`` of the covariance, ``K = F F^T``.  Random
numbers come from numpy's PCG64 seeded through ``SeedSequence(seed,
spawn_key=(stream_id, chunk))`` so sources, noises and dithers never share a
stream and any chunk can be regenerated on its own.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack

from .errors import InvalidInputError

# stream ids; keep stable, they are part of the reproducibility contract
SOURCE_STREAM = 0
NOISE_STREAM = 1
DITHER_STREAM = 2
PROBE_STREAM = 3

__all__ = [
    "SOURCE_STREAM",
    "NOISE_STREAM",
    "DITHER_STREAM",
    "PROBE_STREAM",
    "CovarianceSpec",
    "MarginalFamily",
    "SampleStream",
    "SourceSpec",
    "FAMILY_TAGS",
    "make_family",
    "sample_iid_vectors",
    "floor_precision",
    "dither",
]


@dataclass(frozen=True, eq=False)
class CovarianceSpec:
    """Symmetric PSD ``k x k`` covariance matrix."""

    K: np.ndarray

    def __post_init__(self):
        K = np.atleast_2d(np.asarray(self.K, dtype=float))
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise InvalidInputError(f"covariance must be square, got shape {K.shape}")
        if not np.all(np.isfinite(K)):
            raise InvalidInputError("covariance has non-finite entries")
        if np.max(np.abs(K - K.T), initial=0.0) > 1e-12:
            raise InvalidInputError("covariance is not symmetric")
        if K.size and np.linalg.eigvalsh(K).min() < -1e-10:
            raise InvalidInputError("covariance is not positive semidefinite")
        K = K.copy()
        K.setflags(write=False)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "_factor", _psd_factor(K))

    @property
    def k(self):
        return self.K.shape[0]

    @property
    def factor(self):
        """Matrix ``F`` with ``F @ F.T == K``; lower triangular when ``K`` is PD."""
        return self._factor

    @classmethod
    def identity(cls, k):
        return cls(np.eye(k))


def _psd_factor(K):
    try:
        return np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        pass
    # semidefinite: pivoted Cholesky, K[p][:, p] = L L^T
    c, piv, rank, info = lapack.dpstrf(K, lower=1, tol=1e-13)
    if info < 0:
        raise InvalidInputError("pivoted Cholesky failed on covariance")
    L = np.tril(c)
    L[:, rank:] = 0.0
    F = np.zeros_like(K)
    F[piv - 1] = L
    return F


@dataclass(frozen=True)
class MarginalFamily:
    """A standardised scalar distribution identified by ``tag``.

    ``params`` holds the shape parameters given at construction; derived
    quantities live in ``_support``.
    """

    tag: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.tag not in _BUILDERS:
            raise InvalidInputError(
                f"unknown family tag {self.tag!r}; known: {', '.join(FAMILY_TAGS)}")
        object.__setattr__(self, "params", dict(self.params))
        try:
            support = _BUILDERS[self.tag](**self.params)
        except TypeError as exc:
            raise InvalidInputError(f"bad parameters for family {self.tag!r}: {exc}") from None
        object.__setattr__(self, "_support", support)

    def __hash__(self):
        return hash((self.tag, repr(sorted(self.params.items()))))

    def sample(self, rng, size):
        return _SAMPLERS[self.tag](rng, size, self._support)


def _gaussian_params():
    return None


def _uniform_params():
    return np.sqrt(3.0)


def _rademacher_params():
    return None


def _laplace_params():
    return 1.0 / np.sqrt(2.0)


def _two_point_params(p=0.2, a=None, b=None):
    if not 0.0 < p < 1.0:
        raise InvalidInputError(f"two-point-asymmetric needs 0 < p < 1, got {p}")
    hi = np.sqrt((1.0 - p) / p)
    lo = -np.sqrt(p / (1.0 - p))
    if a is not None or b is not None:
        a = hi if a is None else float(a)
        b = lo if b is None else float(b)
        mean = p * a + (1 - p) * b
        var = p * a * a + (1 - p) * b * b - mean * mean
        if abs(mean) > 1e-9 or abs(var - 1.0) > 1e-9:
            raise InvalidInputError(
                f"two-point-asymmetric values (p={p}, a={a}, b={b}) are not "
                "zero-mean unit-variance")
        hi, lo = a, b
    return (p, hi, lo)


def _mixture_params(weights=(0.5, 0.5), means=(-1.0, 1.0), stds=(0.5, 0.5)):
    w = np.asarray(weights, dtype=float)
    mu = np.asarray(means, dtype=float)
    sd = np.asarray(stds, dtype=float)
    if not (w.shape == mu.shape == sd.shape) or w.ndim != 1 or len(w) == 0:
        raise InvalidInputError("mixture weights/means/stds must be equal-length lists")
    if np.any(w < 0) or not np.isclose(w.sum(), 1.0) or np.any(sd < 0):
        raise InvalidInputError("mixture weights must be a probability vector, stds >= 0")
    mean = np.dot(w, mu)
    var = np.dot(w, sd ** 2 + mu ** 2) - mean ** 2
    if var <= 0:
        raise InvalidInputError("mixture has zero variance")
    return (w, mu, sd, mean, np.sqrt(var))


def _sample_mixture(rng, size, s):
    w, mu, sd, mean, scale = s
    comp = rng.choice(len(w), size=size, p=w)
    x = mu[comp] + sd[comp] * rng.standard_normal(size)
    return (x - mean) / scale


_BUILDERS = {
    "gaussian": _gaussian_params,
    "uniform": _uniform_params,
    "rademacher": _rademacher_params,
    "laplace": _laplace_params,
    "two-point-asymmetric": _two_point_params,
    "mixture-of-gaussians": _mixture_params,
}

_SAMPLERS = {
    "gaussian": lambda rng, size, s: rng.standard_normal(size),
    "uniform": lambda rng, size, s: rng.uniform(-s, s, size),
    "rademacher": lambda rng, size, s: 2.0 * rng.integers(0, 2, size) - 1.0,
    "laplace": lambda rng, size, s: rng.laplace(0.0, s, size),
    "two-point-asymmetric": lambda rng, size, s: np.where(
        rng.random(size) < s[0], s[1], s[2]),
    "mixture-of-gaussians": _sample_mixture,
}

FAMILY_TAGS = tuple(sorted(_BUILDERS))


def make_family(tag, **params):
    return MarginalFamily(tag, params)


@dataclass(frozen=True)
class SampleStream:
    """Reproducible random stream identified by ``(seed, stream_id)``.

    Streams are not thread safe; hand each consumer its own.
    """

    seed: int
    stream_id: int = SOURCE_STREAM

    def generator(self, chunk=0):
        """Fresh generator for sub-stream ``chunk`` (bit-identical on every call)."""
        seq = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id), int(chunk)))
        return np.random.Generator(np.random.PCG64(seq))


def _rng(stream):
    if isinstance(stream, np.random.Generator):
        return stream
    if isinstance(stream, SampleStream):
        return stream.generator()
    raise InvalidInputError(f"expected SampleStream or numpy Generator, got {type(stream).__name__}")


def sample_iid_vectors(spec, family, count, stream):
    """Draw ``count`` i.i.d. rows with mean 0 and covariance ``spec.K``.

    Returns an array of shape ``(count, k)``.
    """
    if not isinstance(spec, CovarianceSpec):
        spec = CovarianceSpec(spec)
    if not isinstance(family, MarginalFamily):
        family = MarginalFamily(family)
    if int(count) != count or count < 1:
        raise InvalidInputError(f"count must be a positive integer, got {count}")
    rng = _rng(stream)
    w = family.sample(rng, (int(count), spec.k))
    return w @ spec.factor.T


@dataclass(frozen=True, eq=False)
class SourceSpec:
    """i.i.d. vector process: a marginal family coloured to covariance ``cov``.

    Used for both sources and additive noises.
    """

    cov: CovarianceSpec
    family: MarginalFamily = field(default_factory=lambda: MarginalFamily("gaussian"))

    def __post_init__(self):
        if not isinstance(self.cov, CovarianceSpec):
            object.__setattr__(self, "cov", CovarianceSpec(self.cov))
        if not isinstance(self.family, MarginalFamily):
            object.__setattr__(self, "family", MarginalFamily(self.family))

    @property
    def k(self):
        return self.cov.k

    def sample(self, count, stream):
        return sample_iid_vectors(self.cov, self.family, count, stream)


def floor_precision(x, rho):
    """Round down to the grid ``2**-rho``: ``2**-rho * floor(2**rho * x)``."""
    if int(rho) != rho or rho < 1:
        raise InvalidInputError(f"rho must be a positive integer, got {rho}")
    scale = 2.0 ** int(rho)
    return np.floor(np.asarray(x, dtype=float) * scale) / scale


def dither(x, rho, stream):
    """Floor to ``rho`` bits and add uniform noise on ``(-2**-(rho+1), 2**-(rho+1))``."""
    base = floor_precision(x, rho)
    half = 2.0 ** (-int(rho) - 1)
    u = _rng(stream).uniform(-half, half, np.shape(base))
    return base + u
