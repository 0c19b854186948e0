"""``mixzone`` command line: chi, features, cluster, stats, synth, replay.

Exit codes: 0 ok, 2 malformed input, 3 domain error, 4 configuration error.
Errors are printed to stderr as ``mixzone: error: <Kind>: <message>``.
"""

import argparse
import hashlib
import json
import os
import sys
import warnings

import numpy as np

from . import __version__, kernels
from ._numba_compat import set_num_threads
from .errors import ConfigError, MixzoneError
from .features import build_features, ingest_index_series, read_features_csv, write_features_csv
from .kmeans import (
    AUTO,
    SELECT_MODES,
    KMeansConfig,
    labels_for_cells,
    read_curve_csv,
    read_labels_csv,
    regionalize,
    select_from_curve,
    write_curve_csv,
    write_labels_csv,
)
from .mixing_state import PRESETS, load_grouping, mixing_state_index, read_particles_csv, write_particles_csv
from .stats import (
    export_region_map,
    format_report,
    read_composition_csv,
    region_composition,
    region_monthly_means,
    write_map_csv,
    write_summary_json,
)
from .synthetic import BlobSpec, generate_blobs, generate_population

EXIT_OK, EXIT_FORMAT, EXIT_DOMAIN, EXIT_CONFIG = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"mixzone: error: ConfigError: {message}\n")


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0, help="root seed for every random substream (default 0)")
    p.add_argument("--threads", type=_positive_int, default=None, help="cap on numba worker threads")
    p.add_argument("--config", metavar="JSON", help="JSON file of option values keyed by option name")
    p.add_argument("--manifest", metavar="PATH", help="where to write the run manifest")
    return p


def build_parser():
    common = _common()
    parser = _Parser(prog="mixzone", description="Aerosol mixing state indices and mixing state zones.")
    parser.add_argument("--version", action="version", version=f"mixzone {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("chi", parents=[common], help="mixing state index of a particle population")
    p.add_argument("particles", help="particle CSV: particle_id,<species>...")
    p.add_argument(
        "--grouping",
        default="abundance",
        help=f"preset ({'|'.join(PRESETS)}) or JSON file mapping species to groups (default abundance)",
    )
    p.add_argument("--all-groupings", action="store_true", help="report all three presets")
    p.add_argument(
        "--undefined",
        choices=("undefined", "one"),
        default="undefined",
        help="how to report chi when the bulk holds a single group (default undefined)",
    )
    p.add_argument("--json", action="store_true", help="print JSON instead of key=value lines")
    p.set_defaults(func=cmd_chi)

    p = sub.add_parser("features", parents=[common], help="monthly 36-wide feature vectors from index series")
    p.add_argument("series", help="series CSV: cell_id,lat,lon,time,chi_a,chi_o,chi_h")
    p.add_argument("--out", required=True, help="feature CSV to write")
    p.add_argument(
        "--missing",
        default="strict",
        help="monthly missing-data policy: strict or min_count=N (default strict)",
    )
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("cluster", parents=[common], help="k-means regions with optional automatic k")
    p.add_argument("features", nargs="?", help="feature CSV")
    p.add_argument("--k", default=AUTO, help="number of regions or 'auto' (default auto)")
    p.add_argument("--k-max", dest="k_max", type=_positive_int, default=20, help="largest k tried (default 20)")
    p.add_argument("--tau", type=float, default=0.05, help="relative variance drop threshold (default 0.05)")
    p.add_argument("--restarts", type=_positive_int, default=10, help="k-means++ restarts per k (default 10)")
    p.add_argument(
        "--max-iterations", dest="max_iterations", type=_positive_int, default=300, help="Lloyd iteration cap"
    )
    p.add_argument(
        "--centroid-tolerance",
        dest="centroid_tolerance",
        type=float,
        default=1e-6,
        help="stop when no centroid moves this far (default 1e-6)",
    )
    p.add_argument("--select", choices=SELECT_MODES, default="at_threshold", help="elbow reading (default at_threshold)")
    p.add_argument("--zscore", action="store_true", help="standardise feature columns before clustering")
    p.add_argument(
        "--lat-weighting", dest="lat_weighting", action="store_true", help="weight cells by cos(latitude)"
    )
    p.add_argument("--labels-out", dest="labels_out", help="labels CSV: cell_id,lat,lon,region")
    p.add_argument("--curve-out", dest="curve_out", help="variance curve CSV: k,variance,selected")
    p.add_argument(
        "--from-curve",
        dest="from_curve",
        metavar="CSV",
        help="only apply the k rule to an existing variance curve (k,variance)",
    )
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("stats", parents=[common], help="per-region summaries and the region map")
    p.add_argument("features", help="feature CSV")
    p.add_argument("labels", help="labels CSV from `mixzone cluster`")
    p.add_argument("--summary-out", dest="summary_out", help="summary JSON")
    p.add_argument("--map-out", dest="map_out", help="map CSV: lat_index,lon_index,region")
    p.add_argument("--composition", help="composition CSV: cell_id,<species>... (mass fractions)")
    p.add_argument(
        "--composition-weight",
        dest="composition_weight",
        metavar="COLUMN",
        help="column of the composition CSV used as averaging weight",
    )
    p.add_argument("--nlat", type=_positive_int, help="declared number of grid latitudes")
    p.add_argument("--nlon", type=_positive_int, help="declared number of grid longitudes")
    p.add_argument("--report", action="store_true", help="print a human-readable table")
    p.add_argument("--unit", choices=("percent", "fraction"), default="percent", help="report unit")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("synth", help="synthetic test data")
    synth = p.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    b = synth.add_parser("blobs", parents=[common], help="Gaussian-blob feature grid with true labels")
    b.add_argument("--cells", type=_positive_int, required=True)
    b.add_argument("--clusters", type=_positive_int, required=True)
    b.add_argument("--sigma", type=float, default=0.05, help="blob spread (default 0.05)")
    b.add_argument(
        "--separation", type=float, default=None, help="minimum center distance in units of sigma"
    )
    b.add_argument("--grid", metavar="NLATxNLON", help="grid shape, e.g. 192x288")
    b.add_argument("--out", required=True, help="feature CSV to write")
    b.add_argument("--truth", help="labels CSV of the generating clusters")
    b.set_defaults(func=cmd_synth_blobs)
    q = synth.add_parser("pop", parents=[common], help="random particle population")
    q.add_argument("--particles", type=_positive_int, required=True)
    q.add_argument("--species", type=_positive_int, required=True)
    q.add_argument("--sparsity", type=float, default=0.0, help="probability of a zero mass entry")
    q.add_argument("--out", required=True, help="particle CSV to write")
    q.set_defaults(func=cmd_synth_pop)

    p = sub.add_parser("replay", help="re-run a manifest and check output digests")
    p.add_argument("manifest_path", metavar="MANIFEST")
    p.set_defaults(func=cmd_replay)
    return parser


CONFIG_KEYS = {
    "seed", "threads", "grouping", "all_groupings", "undefined", "json", "missing", "k", "k_max", "tau",
    "restarts", "max_iterations", "centroid_tolerance", "select", "zscore", "lat_weighting", "unit",
    "nlat", "nlon", "composition_weight", "sigma", "separation", "sparsity",
}


# ---------------------------------------------------------------------------
# helpers


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _check_paths(inputs, outputs):
    ins = {os.path.realpath(p) for p in inputs if p}
    outs = [os.path.realpath(p) for p in outputs if p]
    if len(set(outs)) != len(outs):
        raise ConfigError("output paths must be distinct")
    clash = ins.intersection(outs)
    if clash:
        raise ConfigError(f"output would overwrite input {sorted(clash)[0]}")


def _kmeans_config(args):
    return KMeansConfig(
        k=args.k,
        k_max=args.k_max,
        tau=args.tau,
        restarts=args.restarts,
        max_iterations=args.max_iterations,
        centroid_tolerance=args.centroid_tolerance,
        seed=args.seed,
        select=args.select,
        zscore=args.zscore,
        lat_weighting=args.lat_weighting,
    )


def _write_manifest(args, argv, inputs, outputs):
    path = args.manifest
    if path is None:
        if not outputs:
            return None
        path = outputs[0] + ".manifest.json"
    config = {
        k: v for k, v in sorted(vars(args).items()) if k not in ("func", "manifest", "config") and not callable(v)
    }
    manifest = {
        "tool": "mixzone",
        "version": __version__,
        "command": args.command if args.command != "synth" else f"synth {args.kind}",
        "argv": list(argv),
        "cwd": os.getcwd(),
        "config": config,
        "seed": args.seed,
        "kernel_backend": kernels.BACKEND,
        "inputs": {p: _sha256(p) for p in inputs if p},
        "outputs": {p: _sha256(p) for p in outputs if p},
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


# ---------------------------------------------------------------------------
# subcommands; each returns (inputs, outputs)


def _fmt_chi(value):
    return "UNDEFINED" if value is None else repr(float(value))


def cmd_chi(args):
    pop = read_particles_csv(args.particles)
    groupings = list(PRESETS) if args.all_groupings else [args.grouping]
    rows = []
    for g in groupings:
        res = mixing_state_index(pop, load_grouping(g))
        rows.append(
            {
                "grouping": g,
                "groups": list(res.group_names),
                "d_alpha": res.d_alpha,
                "d_gamma": res.d_gamma,
                "chi": res.chi_value(args.undefined),
            }
        )
    if args.json:
        print(json.dumps(rows if args.all_groupings else rows[0], indent=2))
    else:
        for r in rows:
            print(f"grouping={r['grouping']} groups={len(r['groups'])}")
            print(f"d_alpha={r['d_alpha']!r}")
            print(f"d_gamma={r['d_gamma']!r}")
            print(f"chi={_fmt_chi(r['chi'])}")
    return [args.particles], []


def cmd_features(args):
    _check_paths([args.series], [args.out])
    series = ingest_index_series(args.series)
    fs = build_features(series, args.missing)
    write_features_csv(args.out, fs)
    print(f"cells={fs.n_cells} valid={fs.n_valid}")
    return [args.series], [args.out]


def cmd_cluster(args):
    config = _kmeans_config(args)
    if args.from_curve:
        _check_paths([args.from_curve], [args.curve_out])
        curve = read_curve_csv(args.from_curve)
        k, warn = select_from_curve(curve, config.tau, config.k_max, config.select)
        if args.curve_out:
            write_curve_csv(args.curve_out, curve, k)
        print(f"selected_k={k}")
        if warn:
            print(f"warning: no relative drop <= tau={config.tau} up to k_max; using k_max", file=sys.stderr)
        return [args.from_curve], [args.curve_out]
    if not args.features:
        raise ConfigError("cluster needs a feature CSV (or --from-curve)")
    if not args.labels_out:
        raise ConfigError("cluster needs --labels-out")
    _check_paths([args.features], [args.labels_out, args.curve_out])
    fs = read_features_csv(args.features)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        result = regionalize(fs, config)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    write_labels_csv(args.labels_out, fs, labels_for_cells(result, fs.n_cells))
    if args.curve_out:
        curve = result.variance_curve or [(result.k, result.variance)]
        write_curve_csv(args.curve_out, curve, result.k)
    print(
        f"k={result.k} variance={result.variance!r} iterations={result.iterations} "
        f"restart={result.restart} cells={result.assignments.size}"
    )
    return [args.features], [args.labels_out, args.curve_out]


def cmd_stats(args):
    _check_paths([args.features, args.labels, args.composition], [args.summary_out, args.map_out])
    fs = read_features_csv(args.features)
    ids, lat, lon, regions = read_labels_csv(args.labels)
    if not np.array_equal(ids, fs.cell_ids):
        raise ConfigError("labels and features describe different cells")
    summaries = region_monthly_means(fs, regions)
    if args.composition:
        cids, species, fractions, weights = read_composition_csv(args.composition, args.composition_weight)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            comp, missing = region_composition(ids, regions, cids, species, fractions, weights)
        if missing:
            print(f"warning: MissingComposition: {len(missing)} cells, first {missing[0]}", file=sys.stderr)
        for s in summaries:
            s.composition = comp.get(s.region_id)
    if args.summary_out:
        write_summary_json(args.summary_out, summaries)
    if args.map_out:
        write_map_csv(args.map_out, export_region_map(lat, lon, regions, args.nlat, args.nlon))
    if args.report or not (args.summary_out or args.map_out):
        sys.stdout.write(format_report(summaries, args.unit))
    return [args.features, args.labels, args.composition], [args.summary_out, args.map_out]


def cmd_synth_blobs(args):
    _check_paths([], [args.out, args.truth])
    shape = None
    if args.grid:
        try:
            shape = tuple(int(v) for v in args.grid.lower().split("x"))
            assert len(shape) == 2
        except (ValueError, AssertionError):
            raise ConfigError(f"--grid must look like 192x288, got {args.grid!r}") from None
    spec = BlobSpec(
        n_cells=args.cells,
        n_clusters=args.clusters,
        sigma=args.sigma,
        seed=args.seed,
        min_separation=args.separation,
        grid_shape=shape,
    )
    fs, truth = generate_blobs(spec)
    write_features_csv(args.out, fs)
    if args.truth:
        write_labels_csv(args.truth, fs, truth)
    print(f"cells={fs.n_cells} clusters={args.clusters}")
    return [], [args.out, args.truth]


def cmd_synth_pop(args):
    _check_paths([], [args.out])
    pop = generate_population(args.particles, args.species, args.seed, args.sparsity)
    write_particles_csv(args.out, pop)
    print(f"particles={pop.n_particles} species={pop.n_species}")
    return [], [args.out]


def cmd_replay(args):
    try:
        with open(args.manifest_path) as fh:
            manifest = json.load(fh)
        argv = manifest["argv"]
        expected = manifest["outputs"]
        cwd = manifest.get("cwd", os.getcwd())
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise ConfigError(f"unreadable manifest {args.manifest_path}: {exc}") from None
    here = os.getcwd()
    os.chdir(cwd)
    try:
        status = main(argv)
        if status != EXIT_OK:
            return status
        mismatched = [p for p, digest in expected.items() if _sha256(p) != digest]
    finally:
        os.chdir(here)
    if mismatched:
        print(f"mixzone: error: ReplayMismatch: {', '.join(mismatched)}", file=sys.stderr)
        return 1
    print(f"reproduced {len(expected)} output(s)")
    return None


# ---------------------------------------------------------------------------


def _load_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    unknown = sorted(set(cfg) - CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys {unknown}")
    return cfg


def _subparser_for(parser, args):
    action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    p = action.choices[args.command]
    if args.command == "synth":
        inner = next(a for a in p._actions if isinstance(a, argparse._SubParsersAction))
        p = inner.choices[args.kind]
    return p


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "config", None):
            cfg = _load_config(args.config)
            sp = _subparser_for(parser, args)
            dests = {a.dest for a in sp._actions}
            sp.set_defaults(**{k: v for k, v in cfg.items() if k in dests})
            args = parser.parse_args(argv)
        if getattr(args, "threads", None):
            set_num_threads(args.threads)
        if args.command == "replay":
            status = args.func(args)
            return EXIT_OK if status is None else status
        inputs, outputs = args.func(args)
        _write_manifest(args, argv, inputs, [p for p in outputs if p])
    except MixzoneError as exc:
        print(f"mixzone: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"mixzone: error: ConfigError: no such file {exc.filename}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"mixzone: error: ConfigError: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
