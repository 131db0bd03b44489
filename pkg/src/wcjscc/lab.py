"""Monte-Carlo distortion estimates and Gaussianity diagnostics.

One *trial* is one block of the scheme under test (``n*b`` symbols for a
converted scheme).  Blocks are simulated in chunks of ``CHUNK_SYMBOLS``
symbols; chunk ``c`` draws sources, noise and dithers from sub-stream
``c`` of the corresponding stream.  Because the chunk size is fixed in
symbols, runs at different ``b`` (powers of two) consume the very same raw
sample sequence (common random numbers across a sweep).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .errors import InvalidInputError
from .network import run_scheme
from .sources import DITHER_STREAM, NOISE_STREAM, PROBE_STREAM, SOURCE_STREAM
from .sources import SampleStream, SourceSpec
from .transform import build_q

__all__ = [
    "CHUNK_SYMBOLS",
    "DistortionReport",
    "GaussianityDiagnostics",
    "TransformProbe",
    "Experiment",
    "SweepRow",
    "simulate",
    "estimate_distortion",
    "ks_statistic",
    "gaussianity",
    "transform_probe",
    "effective_noise_probe",
    "effective_source_probe",
    "convergence_sweep",
]

CHUNK_SYMBOLS = 2 ** 18
Z95 = 1.96


@dataclass
class DistortionReport:
    """Per-destination distortion estimate over ``trials`` independent blocks.

    ``profile[m, l]`` is the mean squared error of sub-block ``l`` in the
    domain where the converter codes it (``None`` for unconverted
    schemes).  ``sign_mismatch[m]`` is the fraction of symbols whose
    reconstruction has the opposite sign to the source (0 counted as +).
    """

    trials: int
    mse: np.ndarray
    stderr: np.ndarray
    sign_mismatch: np.ndarray
    profile: np.ndarray = None
    metadata: dict = field(default_factory=dict)

    @property
    def ci95(self):
        return Z95 * self.stderr

    def interval(self, m=0):
        return (self.mse[m] - self.ci95[m], self.mse[m] + self.ci95[m])


@dataclass
class GaussianityDiagnostics:
    ks: float
    skew: float
    exkurt: float
    samples: int


def _blocks_per_chunk(L):
    return max(1, CHUNK_SYMBOLS // L)


def simulate(model, scheme, source, trials, seed):
    """Yield ``(x, xhat)`` chunks, each of shape ``(k, B_c, L)``."""
    if not isinstance(source, SourceSpec):
        raise InvalidInputError("source must be a SourceSpec")
    if source.k != model.topology.k or scheme.k != model.topology.k:
        raise InvalidInputError(
            f"source dimension {source.k}, scheme k={scheme.k} and network "
            f"k={model.topology.k} disagree")
    L = scheme.n
    per = _blocks_per_chunk(L)
    src = SampleStream(seed, SOURCE_STREAM)
    noi = SampleStream(seed, NOISE_STREAM)
    dit = SampleStream(seed, DITHER_STREAM)
    done = 0
    chunk = 0
    while done < trials:
        B = min(per, trials - done)
        x = source.sample(B * L, src.generator(chunk)).reshape(B, L, source.k)
        x = np.moveaxis(x, -1, 0)
        noise = model.draw_noise(noi.generator(chunk), B * L).reshape(B, L, model.noise_dim)
        xhat, _ = run_scheme(model, scheme, x, noise=noise, scheme_rng=dit.generator(chunk))
        yield x, xhat
        done += B
        chunk += 1


def estimate_distortion(model, scheme, source, trials, seed=0):
    """Mean per-symbol squared error per destination with a normal-theory CI."""
    if int(trials) != trials or trials < 100:
        raise InvalidInputError(f"need at least 100 trials, got {trials}")
    trials = int(trials)
    per_block = []
    mismatch = np.zeros(scheme.k)
    arrange = getattr(scheme, "arrange", None)
    profile = None
    for x, xhat in simulate(model, scheme, source, trials, seed):
        err = (x - xhat) ** 2
        per_block.append(err.mean(axis=-1))
        mismatch += ((x >= 0) != (xhat >= 0)).sum(axis=(1, 2))
        if arrange is not None:
            diff = np.stack([arrange(x[m]) - arrange(xhat[m]) for m in range(scheme.k)])
            part = (diff ** 2).sum(axis=(1, 3))
            profile = part if profile is None else profile + part
    d = np.concatenate(per_block, axis=1)
    stderr = d.std(axis=1, ddof=1) / np.sqrt(trials)
    if profile is not None:
        profile = profile / (trials * scheme.inner.n)
    meta = {
        "scheme": scheme.name,
        "n": scheme.n,
        "b": getattr(scheme, "b", 1),
        "source_family": source.family.tag,
        "source_params": dict(source.family.params),
        "network": getattr(model, "tag", model.form),
        "seed": int(seed),
        "trials": trials,
    }
    return DistortionReport(trials, d.mean(axis=1), stderr,
                            mismatch / (trials * scheme.n), profile, meta)


# ---------------------------------------------------------------------------
# Gaussianity
# ---------------------------------------------------------------------------

def ks_statistic(samples, sigma=1.0):
    """Kolmogorov-Smirnov distance between the sample ECDF and N(0, sigma^2).

    Uses the sorted-sample formula ``max_i max(i/n - F(x_i), F(x_i) - (i-1)/n)``.
    """
    if not (np.isfinite(sigma) and sigma > 0):
        raise InvalidInputError(f"sigma must be positive, got {sigma}")
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n < 100:
        raise InvalidInputError(f"need at least 100 samples, got {n}")
    cdf = ndtr(x / sigma)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))


def gaussianity(samples, sigma=1.0):
    x = np.asarray(samples, dtype=float).ravel()
    c = x - x.mean()
    m2 = np.mean(c ** 2)
    if m2 > 0:
        skew = float(np.mean(c ** 3) / m2 ** 1.5)
        exkurt = float(np.mean(c ** 4) / m2 ** 2 - 3.0)
    else:
        skew, exkurt = float("nan"), float("nan")
    ks = ks_statistic(x, sigma) if sigma > 0 else float("nan")
    return GaussianityDiagnostics(ks, skew, exkurt, int(x.size))


@dataclass
class TransformProbe:
    """Statistics of selected transform rows ``ells`` of i.i.d. vectors.

    Arrays are indexed ``[i_ell, coordinate(, coordinate)]``.  Covariances
    use the known zero mean; ``cov_se`` is the standard error of each
    entry and ``autocorr`` the lag-1 correlation across ``t``.
    """

    b: int
    ells: tuple
    rows: int
    cov: np.ndarray
    cov_se: np.ndarray
    autocorr: np.ndarray
    skew: np.ndarray
    exkurt: np.ndarray
    ks: np.ndarray
    samples: np.ndarray


def transform_probe(draw, dim, b, rows, seed, ells, stream_id=PROBE_STREAM, sigma=None):
    """Apply ``Q`` to length-``b`` blocks of ``draw(rng, count)`` and summarise.

    ``sigma[i]`` is the reference standard deviation of coordinate ``i``
    for the KS distance (NaN where it is zero).
    """
    q = build_q(b).entries
    ells = tuple(sorted(set(int(e) for e in ells)))
    if any(not 0 <= e < b for e in ells):
        raise InvalidInputError(f"sub-block indices must lie in [0, {b})")
    if rows < 2:
        raise InvalidInputError("need at least two rows")
    stream = SampleStream(seed, stream_id)
    per = _blocks_per_chunk(b)
    sel = q[list(ells)]
    out = []
    done = chunk = 0
    while done < rows:
        B = min(per, rows - done)
        z = np.asarray(draw(stream.generator(chunk), B * b), dtype=float).reshape(B, b, dim)
        out.append(np.einsum("lj,tjd->tld", sel, z))
        done += B
        chunk += 1
    s = np.concatenate(out, axis=0)  # (rows, L, dim)
    prod = s[:, :, :, None] * s[:, :, None, :]
    cov = prod.mean(axis=0)
    cov_se = prod.std(axis=0, ddof=1) / np.sqrt(rows)
    a, c = s[:-1], s[1:]
    denom = np.sqrt((a ** 2).sum(axis=0) * (c ** 2).sum(axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        autocorr = np.where(denom > 0, (a * c).sum(axis=0) / denom, 0.0)
    if sigma is None:
        sigma = np.sqrt(np.clip(np.diag(cov.mean(axis=0)), 0, None))
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (dim,))
    L = len(ells)
    skew = np.empty((L, dim))
    exkurt = np.empty((L, dim))
    ks = np.empty((L, dim))
    for i in range(L):
        for d in range(dim):
            g = gaussianity(s[:, i, d], sigma[d]) if sigma[d] > 0 else None
            skew[i, d] = g.skew if g else np.nan
            exkurt[i, d] = g.exkurt if g else np.nan
            ks[i, d] = g.ks if g else np.nan
    return TransformProbe(b, ells, rows, cov, cov_se, autocorr, skew, exkurt, ks, s)


def _default_ells(b):
    return (0, 1, b // 2, b - 1)


def effective_noise_probe(model, b, slots, seed=0, ells=None):
    """Statistics of the effective noise rows ``Q @ Z`` of an additive network."""
    if model.form != "additive":
        raise InvalidInputError("effective noise is defined for additive networks only")
    if slots < 1000:
        raise InvalidInputError("need at least 1000 slots")
    ells = _default_ells(b) if ells is None else ells
    sigma = np.sqrt(np.diag(model.noise_cov.K))
    return transform_probe(model.draw_noise, model.noise_dim, b, int(slots), seed, ells,
                           stream_id=NOISE_STREAM, sigma=sigma)


def effective_source_probe(source, b, rows, seed=0, ells=None):
    """Statistics of the effective source rows (sub-blocks) of a source."""
    ells = _default_ells(b) if ells is None else ells
    sigma = np.sqrt(np.diag(source.cov.K))
    return transform_probe(lambda rng, c: source.sample(c, rng), source.k, b, int(rows), seed,
                           ells, stream_id=SOURCE_STREAM, sigma=sigma)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

@dataclass
class Experiment:
    """Everything needed to run one converter at several block sizes."""

    model: object
    scheme: object
    source: SourceSpec
    converter: str = "source"
    trials: int = 10_000
    seed: int = 0
    wrap: bool = None
    diag_ell: int = 1

    def build(self, b):
        from .converters import convert_for_noise, convert_for_source
        if self.converter == "source":
            return convert_for_source(self.scheme, b, wrap=self.wrap)
        if self.converter == "noise":
            return convert_for_noise(self.scheme, b, wrap=self.wrap)
        if self.converter == "none":
            return self.scheme
        raise InvalidInputError(f"unknown converter {self.converter!r}")


@dataclass
class SweepRow:
    b: int
    report: DistortionReport
    diagnostics: list


def _diagnostics(exp, b):
    """Gaussianity of the quantity the converter mixes, one entry per destination."""
    rows = exp.trials * exp.scheme.n
    topo = exp.model.topology
    if exp.converter == "noise":
        if exp.model.form != "additive":
            return [None] * topo.k
        ell = min(exp.diag_ell, b - 1)
        probe = effective_noise_probe(exp.model, b, max(rows, 1000), exp.seed, ells=(ell,))
        return [_entry(probe, 0, d) for d in topo.destinations]
    if exp.converter == "source":
        ell = min(exp.diag_ell, b - 1)
        probe = effective_source_probe(exp.source, b, max(rows, 2), exp.seed, ells=(ell,))
        return [_entry(probe, 0, m) for m in range(exp.source.k)]
    raw = exp.source.sample(rows, SampleStream(exp.seed, SOURCE_STREAM).generator(0))
    sig = np.sqrt(np.diag(exp.source.cov.K))
    return [gaussianity(raw[:, m], sig[m]) if sig[m] > 0 else None for m in range(exp.source.k)]


def _entry(probe, i, d):
    if np.isnan(probe.ks[i, d]):
        return None
    return GaussianityDiagnostics(float(probe.ks[i, d]), float(probe.skew[i, d]),
                                  float(probe.exkurt[i, d]), probe.rows)


def convergence_sweep(exp, b_list, diagnostics=True):
    """Run ``exp`` at every ``b`` with shared seeds; returns a list of :class:`SweepRow`."""
    b_list = list(b_list)
    if not b_list:
        raise InvalidInputError("empty b list")
    for b in b_list:
        if isinstance(b, bool) or int(b) != b or b < 2 or b % 2:
            raise InvalidInputError(f"every b must be even and >= 2, got {b!r}")
    if b_list != sorted(b_list):
        raise InvalidInputError("b list must be ascending")
    rows = []
    for b in b_list:
        scheme = exp.build(b)
        report = estimate_distortion(exp.model, scheme, exp.source, exp.trials, exp.seed)
        diags = _diagnostics(exp, b) if diagnostics else [None] * exp.source.k
        rows.append(SweepRow(int(b), report, diags))
    return rows
