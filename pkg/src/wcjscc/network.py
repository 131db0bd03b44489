"""Time-slotted simulation of memoryless networks.

Signals are batched: every array carries a leading trial axis of size
``B`` so one pass of the slot loop simulates ``B`` independent blocks.
Nodes are numbered ``0..N-1``.

A network is either additive (``Y = H U + Z``) or functional
(``Y = h(U, Z)`` with ``Z`` exogenous).  Noise for a whole run is drawn
from its own stream before any encoder runs, so it cannot depend on
channel inputs.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import CausalityError, InvalidInputError, SchemeError
from .sources import CovarianceSpec, MarginalFamily, sample_iid_vectors

__all__ = [
    "Topology",
    "AdditiveNetwork",
    "FunctionalNetwork",
    "ExogenousNoise",
    "History",
    "Transcript",
    "AccessLog",
    "step",
    "run_scheme",
    "additive_network",
    "scalar_channel",
    "bitpipe_network",
    "midrise_levels",
    "midrise_index",
]


@dataclass(frozen=True)
class Topology:
    """Node roles of a ``(k, N)`` network.

    ``sources[m]`` transmits source ``m``, ``destinations[m]`` reconstructs
    it; every other node is a relay, ordered by index.
    """

    N: int
    sources: tuple
    destinations: tuple

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(int(s) for s in self.sources))
        object.__setattr__(self, "destinations", tuple(int(d) for d in self.destinations))
        S, D = self.sources, self.destinations
        if len(S) != len(D) or not S:
            raise InvalidInputError("need equally many (>= 1) sources and destinations")
        if len(set(S)) != len(S) or len(set(D)) != len(D):
            raise InvalidInputError("duplicate node in sources or destinations")
        if set(S) & set(D):
            raise InvalidInputError("source and destination sets must be disjoint")
        if any(not 0 <= i < self.N for i in S + D):
            raise InvalidInputError(f"node index out of range [0, {self.N})")

    @property
    def k(self):
        return len(self.sources)

    @property
    def relays(self):
        used = set(self.sources) | set(self.destinations)
        return tuple(i for i in range(self.N) if i not in used)

    def roles(self):
        """Yield ``(node, role, index)`` for every node, in node order."""
        lookup = {}
        for m, s in enumerate(self.sources):
            lookup[s] = ("source", m)
        for m, d in enumerate(self.destinations):
            lookup[d] = ("destination", m)
        for p, r in enumerate(self.relays):
            lookup[r] = ("relay", p)
        for i in range(self.N):
            yield (i,) + lookup[i]


@dataclass(frozen=True, eq=False)
class ExogenousNoise:
    """Per-slot random vector ``Z`` of dimension ``dim``.

    ``sampler(rng, count)`` must return an array of shape ``(count, dim)``.
    """

    dim: int
    sampler: object = None

    def draw(self, rng, count):
        if self.dim == 0 or self.sampler is None:
            return np.zeros((count, self.dim))
        return np.asarray(self.sampler(rng, count), dtype=float).reshape(count, self.dim)


@dataclass(frozen=True, eq=False)
class AdditiveNetwork:
    topology: Topology
    H: np.ndarray
    noise_cov: CovarianceSpec
    noise_family: MarginalFamily = field(default_factory=lambda: MarginalFamily("gaussian"))

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        N = self.topology.N
        if H.shape != (N, N):
            raise InvalidInputError(f"H must be {N}x{N}, got {H.shape}")
        if not np.all(np.isfinite(H)):
            raise InvalidInputError("H has non-finite entries")
        H = H.copy()
        H.setflags(write=False)
        object.__setattr__(self, "H", H)
        if not isinstance(self.noise_cov, CovarianceSpec):
            object.__setattr__(self, "noise_cov", CovarianceSpec(self.noise_cov))
        if not isinstance(self.noise_family, MarginalFamily):
            object.__setattr__(self, "noise_family", MarginalFamily(self.noise_family))
        if self.noise_cov.k != N:
            raise InvalidInputError(f"noise covariance must be {N}x{N}")

    form = "additive"

    @property
    def noise_dim(self):
        return self.topology.N

    def draw_noise(self, rng, count):
        return sample_iid_vectors(self.noise_cov, self.noise_family, count, rng)

    def output(self, inputs, noise):
        return inputs @ self.H.T + noise


@dataclass(frozen=True, eq=False)
class FunctionalNetwork:
    """Network given by a deterministic map ``h(U, Z) -> Y`` on batched arrays.

    ``h`` receives ``U`` of shape ``(B, N)`` and ``Z`` of shape
    ``(B, exogenous.dim)`` and returns ``Y`` of shape ``(B, N)``.
    """

    topology: Topology
    h: object
    exogenous: ExogenousNoise = field(default_factory=lambda: ExogenousNoise(0))
    tag: str = "functional"

    form = "functional"

    @property
    def noise_dim(self):
        return self.exogenous.dim

    def draw_noise(self, rng, count):
        return self.exogenous.draw(rng, count)

    def output(self, inputs, noise):
        y = np.asarray(self.h(inputs, noise), dtype=float)
        if y.shape != inputs.shape:
            raise SchemeError(f"network map returned shape {y.shape}, expected {inputs.shape}")
        return y


def step(model, inputs, noise_draw):
    """One channel use: ``Y = H U + Z`` or ``Y = h(U, Z)``.

    Accepts a single slot (``inputs`` of length ``N``) or a batch ``(B, N)``.
    """
    u = np.asarray(inputs, dtype=float)
    z = np.asarray(noise_draw, dtype=float)
    single = u.ndim == 1
    u2 = np.atleast_2d(u)
    if u2.shape[-1] != model.topology.N:
        raise InvalidInputError(f"expected {model.topology.N} inputs, got {u2.shape[-1]}")
    if not np.all(np.isfinite(u2)):
        raise InvalidInputError("channel inputs must be finite")
    z2 = z.reshape(u2.shape[0], model.noise_dim)
    y = model.output(u2, z2)
    return y[0] if single else y


# ---------------------------------------------------------------------------
# causality-checked view of past received signals
# ---------------------------------------------------------------------------

class AccessLog:
    """Records, per slot, the largest time index any encoder read."""

    def __init__(self):
        self.reads = []

    def record(self, slot, index):
        self.reads.append((slot, index))

    def violations(self):
        return [(s, i) for s, i in self.reads if i >= s]


class History:
    """Read-only window on one node's received signals ``y[start:start+t]``.

    Indexing is along time and relative to the window: ``h[j]`` is the
    signal received ``j`` slots after the window start and has shape
    ``(B,)``.  Any read at or beyond ``len(h)`` raises
    :class:`CausalityError`; python-style truncation of slices does not
    apply.
    """

    __slots__ = ("_data", "_start", "_t", "_log", "_slot")

    def __init__(self, data, t, start=0, log=None, slot=None):
        self._data = data
        self._start = start
        self._t = t
        self._log = log
        self._slot = slot

    def __len__(self):
        return self._t

    @property
    def batch(self):
        return self._data.shape[0]

    def _touch(self, last):
        if last >= self._t:
            raise CausalityError(
                f"read of received signal {last} but only {self._t} are available")
        if self._log is not None and last >= 0:
            self._log.record(self._slot, self._start + last)

    def __getitem__(self, key):
        if isinstance(key, slice):
            if key.step not in (None, 1):
                raise InvalidInputError("strided history reads are not supported")
            lo = 0 if key.start is None else key.start
            hi = self._t if key.stop is None else key.stop
            lo = lo + self._t if lo < 0 else lo
            hi = hi + self._t if hi < 0 else hi
            if lo < 0 or hi < lo:
                raise InvalidInputError(f"bad history slice {key}")
            self._touch(hi - 1)
            return self._data[:, self._start + lo:self._start + hi]
        j = int(key)
        if j < 0:
            j += self._t
        if j < 0:
            raise InvalidInputError(f"history index {key} out of range")
        self._touch(j)
        return self._data[:, self._start + j]

    def values(self):
        """All available signals, shape ``(B, len(self))``."""
        return self[:]

    def window(self, start, stop):
        """Sub-history covering relative indices ``start..stop-1``."""
        if not 0 <= start <= stop <= self._t:
            raise CausalityError(
                f"window [{start}, {stop}) exceeds {self._t} available signals")
        return History(self._data, stop - start, self._start + start, self._log, self._slot)


@dataclass(eq=False)
class Transcript:
    """Per-slot signals of one batched run, each of shape ``(B, L, ...)``."""

    inputs: np.ndarray
    outputs: np.ndarray
    noise: np.ndarray


def _check_finite(u, slot, node):
    if not np.all(np.isfinite(u)):
        bad = int(np.flatnonzero(~np.isfinite(u))[0])
        raise SchemeError(f"non-finite encoder output at node {node}, slot {slot}, trial {bad}")


def run_scheme(model, scheme, sources, noise=None, rng=None, scheme_rng=None, audit=None):
    """Run one block of ``scheme`` over ``model`` for a batch of trials.

    ``sources`` has shape ``(k, B, L)`` with ``L = scheme.n``.  ``noise``
    (shape ``(B, L, noise_dim)``) is drawn from ``rng`` when omitted.
    ``scheme_rng`` feeds randomised wrappers (dithering).  Pass an
    :class:`AccessLog` as ``audit`` to record every history read.

    Returns ``(reconstructions, transcript)`` with reconstructions of shape
    ``(k, B, L)``.
    """
    topo = model.topology
    x = np.asarray(sources, dtype=float)
    if x.ndim == 2:
        x = x[:, None, :]
    if x.ndim != 3 or x.shape[0] != topo.k:
        raise InvalidInputError(f"sources must have shape (k={topo.k}, B, L), got {x.shape}")
    k, B, L = x.shape
    if L != scheme.n:
        raise InvalidInputError(f"scheme block length {scheme.n} != source length {L}")
    if scheme.k != topo.k:
        raise InvalidInputError(f"scheme serves {scheme.k} sources, network has {topo.k}")
    if getattr(scheme, "requires_additive", False) and model.form != "additive":
        raise InvalidInputError(
            "this scheme needs an additive-noise network (it relies on Y = H U + Z)")

    if noise is None:
        if rng is None:
            raise InvalidInputError("either noise or rng must be given")
        noise = model.draw_noise(rng, B * L).reshape(B, L, model.noise_dim)
    noise = np.asarray(noise, dtype=float).reshape(B, L, model.noise_dim)

    session = scheme.session(scheme_rng)
    N = topo.N
    U = np.zeros((N, B, L))
    Y = np.zeros((N, B, L))
    roles = list(topo.roles())
    for t in range(L):
        for node, role, idx in roles:
            hist = History(Y[node], t, log=audit, slot=t)
            if role == "source":
                u = session.source_encode(idx, t, x[idx], hist)
            elif role == "relay":
                u = session.relay_encode(idx, t, hist)
            else:
                u = session.destination_encode(idx, t, hist)
            u = np.broadcast_to(np.asarray(u, dtype=float), (B,))
            _check_finite(u, t, node)
            U[node, :, t] = u
        Y[:, :, t] = model.output(U[:, :, t].T, noise[:, t, :]).T

    xhat = np.empty_like(x)
    for m, d in enumerate(topo.destinations):
        out = np.asarray(session.decode(m, Y[d]), dtype=float)
        if out.shape != (B, L):
            raise SchemeError(f"decoder {m} returned shape {out.shape}, expected {(B, L)}")
        xhat[m] = out
    transcript = Transcript(np.moveaxis(U, 0, -1), np.moveaxis(Y, 0, -1), noise)
    return xhat, transcript


# ---------------------------------------------------------------------------
# common network constructions
# ---------------------------------------------------------------------------

def additive_network(N, sources, destinations, H, noise_K, family="gaussian", **params):
    topo = Topology(N, tuple(sources), tuple(destinations))
    fam = family if isinstance(family, MarginalFamily) else MarginalFamily(family, params)
    return AdditiveNetwork(topo, H, CovarianceSpec(noise_K), fam)


def scalar_channel(noise_var=1.0, family="gaussian", **params):
    """Point-to-point ``Y = U + Z``: node 0 transmits, node 1 receives.

    Only the receiver sees noise; the transmitter's (unused) noise
    coordinate is zero, which makes the noise covariance singular.
    """
    K = np.diag([0.0, float(noise_var)])
    H = np.array([[0.0, 0.0], [1.0, 0.0]])
    return additive_network(2, (0,), (1,), H, K, family, **params)


def midrise_index(x, rate, amplitude):
    """Cell index of a ``2**rate``-level mid-rise quantizer on ``[-A, A]``."""
    levels = 2 ** int(rate)
    step_size = 2.0 * amplitude / levels
    idx = np.floor((np.asarray(x, dtype=float) + amplitude) / step_size)
    return np.clip(idx, 0, levels - 1).astype(np.int64)


def midrise_levels(idx, rate, amplitude):
    """Cell midpoints for the indices returned by :func:`midrise_index`."""
    step_size = 2.0 * amplitude / 2 ** int(rate)
    return -amplitude + (np.asarray(idx) + 0.5) * step_size


def bitpipe_network(topology, rate, amplitude=1.0, links=None):
    """Noiseless wireline network of ``rate``-bit pipes.

    Each link ``(i, j)`` delivers node ``i``'s input to node ``j`` after
    mid-rise quantization to ``2**rate`` levels over ``[-amplitude,
    amplitude]``.  Default links join ``sources[m]`` to
    ``destinations[m]``.  A node may terminate at most one link; nodes
    with no incoming link receive 0.
    """
    if int(rate) != rate or not 1 <= rate <= 16:
        raise InvalidInputError(f"pipe rate must be an integer in 1..16, got {rate}")
    if not amplitude > 0:
        raise InvalidInputError("pipe amplitude must be positive")
    if links is None:
        links = list(zip(topology.sources, topology.destinations))
    links = [(int(i), int(j)) for i, j in links]
    receivers = [j for _, j in links]
    if len(set(receivers)) != len(receivers):
        raise InvalidInputError("a node may terminate at most one bit pipe")
    src = np.array([i for i, _ in links], dtype=int)
    dst = np.array(receivers, dtype=int)

    def h(u, z):
        y = np.zeros_like(u)
        y[:, dst] = midrise_levels(midrise_index(u[:, src], rate, amplitude), rate, amplitude)
        return y

    net = FunctionalNetwork(topology, h, ExogenousNoise(0), tag="bitpipe")
    object.__setattr__(net, "rate", int(rate))
    object.__setattr__(net, "amplitude", float(amplitude))
    return net
