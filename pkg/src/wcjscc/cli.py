"""Command-line experiment runner.

    wcjscc run MANIFEST [--out DIR] [--trials N] [--seed S] [-v]
    wcjscc list
    wcjscc manifests

``MANIFEST`` is a path or the name of a bundled manifest.
"""

import argparse
import csv
import hashlib
import io
import json
import logging
import platform
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError, InvalidInputError, SchemeError
from .lab import CHUNK_SYMBOLS, Experiment, convergence_sweep, estimate_distortion, gaussianity
from .manifest import CONVERTERS, parse_manifest
from .network import AdditiveNetwork
from .schemes import SCHEMES
from .sources import (DITHER_STREAM, FAMILY_TAGS, NOISE_STREAM, SOURCE_STREAM, MarginalFamily,
                      SampleStream, SourceSpec)

log = logging.getLogger("wcjscc")

CSV_COLUMNS = ["experiment", "b", "destination", "trials", "mse", "stderr", "ci95",
               "ks", "skew", "exkurt", "seed"]


@dataclass
class ResultBundle:
    manifest_text: str
    rows: list
    provenance: dict
    wall_clock: float = 0.0
    csv_path: Path = None
    json_path: Path = None
    extra: dict = field(default_factory=dict)


def list_components():
    """Sorted inventory of scheme names, family tags, network forms and converters."""
    return {
        "converters": sorted(CONVERTERS),
        "families": sorted(FAMILY_TAGS),
        "network_forms": sorted(["additive", "bitpipe", "functional"]),
        "schemes": sorted(SCHEMES),
    }


def bundled_manifests():
    root = resources.files("wcjscc") / "manifests"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def bundled_manifest_text(name):
    return (resources.files("wcjscc") / "manifests" / f"{name}.yaml").read_text(encoding="utf-8")


def _read_manifest(ref):
    path = Path(ref)
    if path.exists():
        with open(path, "r", encoding="utf-8", newline="") as fh:
            return fh.read()
    if ref in bundled_manifests():
        return bundled_manifest_text(ref)
    raise ConfigError(f"no such manifest file or bundled manifest: {ref}", field="<path>")


def _fmt(v):
    if v is None:
        return ""
    v = float(v)
    if np.isnan(v):
        return ""
    return repr(v)


def _gaussian_variant(m, target):
    """Copy of the manifest's data with the targeted family made Gaussian."""
    gauss = MarginalFamily("gaussian")
    source, net = m.source, m.network
    if target in ("source", "both"):
        source = SourceSpec(m.source.cov, gauss)
    if target in ("noise", "both") and isinstance(net, AdditiveNetwork):
        net = AdditiveNetwork(net.topology, net.H, net.noise_cov, gauss)
    return source, net


def _raw_diagnostics(m, source, net, rows):
    """Gaussianity of the untransformed quantity the converter would mix."""
    out = []
    if m.converter == "noise" and isinstance(net, AdditiveNetwork):
        z = net.draw_noise(SampleStream(m.seed, NOISE_STREAM).generator(0), rows)
        for d in net.topology.destinations:
            s = np.sqrt(net.noise_cov.K[d, d])
            out.append(gaussianity(z[:, d], s) if s > 0 else None)
        return out
    x = source.sample(rows, SampleStream(m.seed, SOURCE_STREAM).generator(0))
    for j in range(source.k):
        s = np.sqrt(source.cov.K[j, j])
        out.append(gaussianity(x[:, j], s) if s > 0 else None)
    return out


def _row_records(label, b, report, diags, seed):
    recs = []
    for j in range(len(report.mse)):
        g = diags[j] if diags else None
        recs.append({
            "experiment": label,
            "b": int(b),
            "destination": j,
            "trials": report.trials,
            "mse": float(report.mse[j]),
            "stderr": float(report.stderr[j]),
            "ci95": float(report.ci95[j]),
            "ks": None if g is None else g.ks,
            "skew": None if g is None else g.skew,
            "exkurt": None if g is None else g.exkurt,
            "seed": int(seed),
            "sign_mismatch": float(report.sign_mismatch[j]),
            "profile": None if report.profile is None else [float(v) for v in report.profile[j]],
            "scheme": report.metadata.get("scheme"),
        })
    return recs


def execute(m):
    """Run a parsed manifest; returns the list of row records."""
    rows = []
    diag_rows = m.trials * m.scheme.n
    for base in m.baselines:
        if base == "inner":
            source, net = m.source, m.network
        else:
            target = {"source": "source", "noise": "noise"}.get(m.converter, "both")
            source, net = _gaussian_variant(m, target)
        log.info("baseline %s: %d trials", base, m.trials)
        rep = estimate_distortion(net, m.inner, source, m.trials, m.seed)
        rows += _row_records(f"{m.name}:{base}", 1, rep, _raw_diagnostics(m, source, net, diag_rows),
                             m.seed)
    if m.converter == "none":
        log.info("unconverted run: %d trials", m.trials)
        rep = estimate_distortion(m.network, m.scheme, m.source, m.trials, m.seed)
        rows += _row_records(m.name, 1, rep, _raw_diagnostics(m, m.source, m.network, diag_rows),
                             m.seed)
        return rows
    exp = Experiment(m.network, m.scheme, m.source, m.converter, m.trials, m.seed, wrap=False)
    for b in m.b:
        log.info("converter %s, b=%d: %d trials", m.converter, b, m.trials)
        (row,) = convergence_sweep(exp, [b])
        rows += _row_records(m.name, b, row.report, row.diagnostics, m.seed)
    return rows


def render_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([r["experiment"], r["b"], r["destination"], r["trials"], _fmt(r["mse"]),
                    _fmt(r["stderr"]), _fmt(r["ci95"]), _fmt(r["ks"]), _fmt(r["skew"]),
                    _fmt(r["exkurt"]), r["seed"]])
    return buf.getvalue()


def _with_overrides(text, trials, seed):
    m = parse_manifest(text)
    if trials is not None:
        if trials < 100:
            raise ConfigError("trial override must be >= 100", field="--trials")
        m.trials = int(trials)
    if seed is not None:
        if seed < 0:
            raise ConfigError("seed override must be >= 0", field="--seed")
        m.seed = int(seed)
    return m


def run_manifest(path, out_dir=None, trials=None, seed=None):
    """Run the manifest at ``path`` (or a bundled name) and write CSV + JSON."""
    text = _read_manifest(str(path))
    m = _with_overrides(text, trials, seed)
    started = time.perf_counter()
    rows = execute(m)
    elapsed = time.perf_counter() - started

    out = Path(out_dir) if out_dir is not None else Path(m.output.get("dir", "results"))
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / m.output.get("csv", f"{m.name}.csv")
    json_path = out / m.output.get("json", f"{m.name}.json")
    provenance = {
        "seed": m.seed,
        "trials": m.trials,
        "bit_generator": "PCG64",
        "seeding": "SeedSequence(seed, spawn_key=(stream_id, chunk))",
        "streams": {"source": SOURCE_STREAM, "noise": NOISE_STREAM, "dither": DITHER_STREAM},
        "chunk_symbols": CHUNK_SYMBOLS,
        "numpy": np.__version__,
        "python": platform.python_version(),
        "overrides": {"trials": trials, "seed": seed},
    }
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(render_csv(rows))
    doc = {
        "experiment": m.name,
        "manifest": text,
        "manifest_sha256": hashlib.sha256(text.encode("utf-8")).hexdigest(),
        "rows": rows,
        "provenance": provenance,
        "wall_clock_s": elapsed,
    }
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, allow_nan=False, default=_json_default)
        fh.write("\n")
    return ResultBundle(text, rows, provenance, elapsed, csv_path, json_path)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not serialisable: {type(obj).__name__}")


def main(argv=None):
    parser = argparse.ArgumentParser(prog="wcjscc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment manifest")
    run.add_argument("manifest", help="manifest path or bundled manifest name")
    run.add_argument("--out", help="output directory (overrides the manifest)")
    run.add_argument("--trials", type=int, help="trial count override")
    run.add_argument("--seed", type=int, help="seed override")
    run.add_argument("-v", "--verbose", action="count", default=0, dest="run_verbose")
    sub.add_parser("list", help="list schemes, families, network forms and converters")
    sub.add_parser("manifests", help="list bundled manifests")
    args = parser.parse_args(argv)

    verbosity = args.verbose + getattr(args, "run_verbose", 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(verbosity, 2),
                        format="%(levelname)s %(message)s")

    if args.command == "list":
        for kind, names in list_components().items():
            print(f"{kind}: {', '.join(names)}")
        return 0
    if args.command == "manifests":
        print("\n".join(bundled_manifests()))
        return 0
    try:
        bundle = run_manifest(args.manifest, args.out, args.trials, args.seed)
    except ConfigError as exc:
        print(f"wcjscc: invalid manifest: {exc}", file=sys.stderr)
        return 2
    except (InvalidInputError, SchemeError, FloatingPointError) as exc:
        print(f"wcjscc: run failed: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {bundle.csv_path} and {bundle.json_path} ({bundle.wall_clock:.1f} s)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
