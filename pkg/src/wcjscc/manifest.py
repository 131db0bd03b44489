"""Experiment manifests: a strict YAML schema mapped onto library objects.

Example::

    experiment: theorem1_bitpipe_uniform
    source: {family: uniform, K: [[1.0]]}
    network: {form: bitpipe, nodes: 2, sources: [0], destinations: [1], rate: 3}
    scheme: {name: scalar_quantizer, params: {rate: 3, source_var: 1.0, loading: 4.0}}
    converter: source
    b: [4, 16, 64, 256]
    baselines: [inner, gaussian]
    trials: 100000
    seed: 1

Unknown keys are errors.  Every :class:`~wcjscc.errors.ConfigError`
names the offending field and, when known, its line in the file.
"""

from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import ConfigError, InvalidInputError
from .network import AdditiveNetwork, Topology, bitpipe_network
from .schemes import SCHEMES, ClipSpec, PrecisionSpec, build_scheme, clip_outputs
from .schemes import limit_encoding_precision, limit_reading_precision
from .sources import FAMILY_TAGS, CovarianceSpec, MarginalFamily, SourceSpec

__all__ = ["ExperimentManifest", "parse_manifest", "load_manifest", "CONVERTERS", "BASELINES"]

CONVERTERS = ("none", "noise", "source")
BASELINES = ("gaussian", "inner")
NETWORK_FORMS = ("additive", "bitpipe")

_TOP = {"experiment", "source", "network", "scheme", "wrappers", "converter", "b",
        "baselines", "trials", "seed", "output"}
_REQUIRED_TOP = ("experiment", "source", "network", "scheme", "converter", "trials", "seed")
_DIST = {"family", "params", "K"}
_NET_COMMON = {"form", "nodes", "sources", "destinations"}
_NET_FORM = {"additive": {"H", "noise"}, "bitpipe": {"rate", "amplitude", "links"}}
_SCHEME = {"name", "params"}
_WRAPPERS = {"clip": {"M"}, "encoding_precision": {"rho", "dither"},
             "reading_precision": {"rho", "dither", "decoders"}}
_OUTPUT = {"dir", "csv", "json"}


@dataclass
class ExperimentManifest:
    """Validated manifest plus the objects it describes."""

    name: str
    text: str
    source: SourceSpec
    network: object
    scheme: object
    scheme_name: str
    converter: str
    b: list
    baselines: list
    trials: int
    seed: int
    output: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)
    inner: object = None  # scheme before wrappers, used by the 'inner' baseline


class _Lines:
    """Maps dotted key paths to 1-based line numbers of a composed YAML tree."""

    def __init__(self, text):
        self.lines = {}
        try:
            node = yaml.compose(text, Loader=yaml.SafeLoader)
        except yaml.YAMLError:
            node = None
        if node is not None:
            self._walk(node, "")

    def _walk(self, node, path):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                p = f"{path}.{k.value}" if path else str(k.value)
                self.lines[p] = k.start_mark.line + 1
                self._walk(v, p)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                p = f"{path}[{i}]"
                self.lines[p] = v.start_mark.line + 1
                self._walk(v, p)

    def __call__(self, path):
        while path:
            if path in self.lines:
                return self.lines[path]
            path = path.rsplit(".", 1)[0] if "." in path else ""
        return None


class _Checker:
    def __init__(self, text):
        self.lines = _Lines(text)

    def fail(self, path, message):
        raise ConfigError(message, field=path, line=self.lines(path))

    def mapping(self, value, path, allowed, required=()):
        if not isinstance(value, dict):
            self.fail(path, "expected a mapping")
        for key in value:
            if key not in allowed:
                p = f"{path}.{key}" if path else str(key)
                self.fail(p, f"unknown field (allowed: {', '.join(sorted(allowed))})")
        for key in required:
            if key not in value:
                self.fail(path or key, f"missing required field '{key}'")
        return value

    def integer(self, value, path, lo=None, hi=None):
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail(path, f"expected an integer, got {value!r}")
        if lo is not None and value < lo or hi is not None and value > hi:
            self.fail(path, f"value {value} outside [{lo}, {hi}]")
        return value

    def number(self, value, path, positive=False):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(path, f"expected a number, got {value!r}")
        if positive and not value > 0:
            self.fail(path, f"must be positive, got {value}")
        return float(value)

    def matrix(self, value, path, size):
        try:
            a = np.asarray(value, dtype=float)
        except (TypeError, ValueError):
            self.fail(path, "expected a numeric matrix")
        if a.shape != (size, size):
            self.fail(path, f"expected a {size}x{size} matrix, got shape {a.shape}")
        return a

    def choice(self, value, path, options):
        if value not in options:
            self.fail(path, f"must be one of {', '.join(options)}, got {value!r}")
        return value


def _dist(ck, value, path, size):
    ck.mapping(value, path, _DIST, ("family", "K"))
    tag = ck.choice(value["family"], f"{path}.family", FAMILY_TAGS)
    params = value.get("params") or {}
    ck.mapping(params, f"{path}.params", set(params))
    K = ck.matrix(value["K"], f"{path}.K", size)
    try:
        return SourceSpec(CovarianceSpec(K), MarginalFamily(tag, params))
    except (InvalidInputError, TypeError) as exc:
        ck.fail(path, str(exc))


def _network(ck, value, k):
    path = "network"
    ck.mapping(value, path, _NET_COMMON | _NET_FORM["additive"] | _NET_FORM["bitpipe"],
               ("form", "nodes", "sources", "destinations"))
    form = ck.choice(value["form"], "network.form", NETWORK_FORMS)
    other = NETWORK_FORMS[1 - NETWORK_FORMS.index(form)]
    for key in _NET_FORM[other]:
        if key in value:
            ck.fail(f"network.{key}", f"not valid for a {form} network")
    N = ck.integer(value["nodes"], "network.nodes", lo=2)
    srcs = value["sources"]
    dsts = value["destinations"]
    for name, lst in (("sources", srcs), ("destinations", dsts)):
        if not isinstance(lst, list) or not lst:
            ck.fail(f"network.{name}", "expected a non-empty list of node indices")
        for i, v in enumerate(lst):
            ck.integer(v, f"network.{name}[{i}]", lo=0, hi=N - 1)
    if len(srcs) != k:
        ck.fail("network.sources", f"network has {len(srcs)} sources but the source spec has k={k}")
    try:
        topo = Topology(N, tuple(srcs), tuple(dsts))
    except InvalidInputError as exc:
        ck.fail("network", str(exc))
    if form == "additive":
        for key in ("H", "noise"):
            if key not in value:
                ck.fail("network", f"missing required field '{key}' for an additive network")
        H = ck.matrix(value["H"], "network.H", N)
        noise = _dist(ck, value["noise"], "network.noise", N)
        return AdditiveNetwork(topo, H, noise.cov, noise.family)
    if "rate" not in value:
        ck.fail("network", "missing required field 'rate' for a bitpipe network")
    rate = ck.integer(value["rate"], "network.rate", lo=1, hi=16)
    amp = ck.number(value.get("amplitude", 1.0), "network.amplitude", positive=True)
    links = value.get("links")
    try:
        return bitpipe_network(topo, rate, amp, links)
    except (InvalidInputError, TypeError, ValueError) as exc:
        ck.fail("network.links", str(exc))


def _scheme(ck, value, k):
    ck.mapping(value, "scheme", _SCHEME, ("name",))
    name = ck.choice(value["name"], "scheme.name", tuple(sorted(SCHEMES)))
    params = dict(value.get("params") or {})
    ck.mapping(params, "scheme.params", set(params))
    params.setdefault("k", k)
    try:
        return name, build_scheme(name, **params)
    except InvalidInputError as exc:
        ck.fail("scheme.params", str(exc))


def _wrap(ck, value, scheme):
    if value is None:
        return scheme
    ck.mapping(value, "wrappers", set(_WRAPPERS))
    for key in ("clip", "encoding_precision", "reading_precision"):
        spec = value.get(key)
        if spec is None:
            continue
        path = f"wrappers.{key}"
        ck.mapping(spec, path, _WRAPPERS[key])
        try:
            if key == "clip":
                if "M" not in spec:
                    ck.fail(path, "missing required field 'M'")
                scheme = clip_outputs(scheme, ClipSpec(ck.number(spec["M"], f"{path}.M", True)))
                continue
            rho = ck.integer(spec.get("rho", 16), f"{path}.rho", lo=1, hi=52)
            prec = PrecisionSpec(rho, dither=bool(spec.get("dither", False)))
            if key == "encoding_precision":
                scheme = limit_encoding_precision(scheme, prec)
            else:
                scheme = limit_reading_precision(scheme, prec, bool(spec.get("decoders", True)))
        except InvalidInputError as exc:
            ck.fail(path, str(exc))
    return scheme


def parse_manifest(text):
    """Validate manifest ``text`` and build the objects it names."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"YAML parse error: {getattr(exc, 'problem', exc)}",
                          field="<document>", line=line) from None
    ck = _Checker(text)
    ck.mapping(raw, "", _TOP, _REQUIRED_TOP)
    name = raw["experiment"]
    if not isinstance(name, str) or not name or any(c in name for c in "/\\,\n"):
        ck.fail("experiment", "expected a plain name without path separators or commas")

    src = raw["source"]
    ck.mapping(src, "source", _DIST, ("family", "K"))
    K = src["K"]
    k = len(K) if isinstance(K, list) else 0
    if k < 1:
        ck.fail("source.K", "expected a non-empty square matrix")
    source = _dist(ck, src, "source", k)
    network = _network(ck, raw["network"], k)
    scheme_name, scheme = _scheme(ck, raw["scheme"], k)
    inner = scheme
    scheme = _wrap(ck, raw.get("wrappers"), scheme)

    converter = ck.choice(raw["converter"], "converter", CONVERTERS)
    b = raw.get("b", [])
    if not isinstance(b, list):
        ck.fail("b", "expected a list of even integers")
    for i, v in enumerate(b):
        if isinstance(v, bool) or not isinstance(v, int) or v < 2 or v % 2:
            ck.fail(f"b[{i}]", f"block sizes must be even integers >= 2, got {v!r}")
    if b != sorted(b) or len(set(b)) != len(b):
        ck.fail("b", "block sizes must be strictly ascending")
    if converter == "none" and b:
        ck.fail("b", "converter 'none' takes no block sizes")
    if converter != "none" and not b:
        ck.fail("b", f"converter '{converter}' needs at least one block size")
    if converter == "noise" and network.form != "additive":
        ck.fail("converter", "the noise converter needs an additive network")

    baselines = raw.get("baselines") or []
    if not isinstance(baselines, list):
        ck.fail("baselines", "expected a list")
    for i, v in enumerate(baselines):
        ck.choice(v, f"baselines[{i}]", BASELINES)

    trials = ck.integer(raw["trials"], "trials", lo=100)
    seed = ck.integer(raw["seed"], "seed", lo=0)
    output = raw.get("output") or {}
    ck.mapping(output, "output", _OUTPUT)
    for key, val in output.items():
        if not isinstance(val, str):
            ck.fail(f"output.{key}", "expected a string")

    return ExperimentManifest(name, text, source, network, scheme, scheme_name, converter,
                              list(b), list(baselines), trials, seed, dict(output), raw, inner)


def load_manifest(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        text = fh.read()
    return parse_manifest(text)
