"""Command-line driver: ``ralpde generate | identify | bench | differentiate``.

Every subcommand accepts ``--config FILE`` with flat ``key = value`` lines
(keys are flag names without the leading dashes); flags given on the command
line win.  A JSON manifest written by an earlier run is accepted as a config
file too.  Exit codes: 0 ok, 1 runtime error, 2 validation error.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import math
import platform
import sys
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .core import FieldFormatError, SparseModel, field_read, field_write
from .datagen import SYSTEMS, SystemSpec, default_library, generate, inject_noise
from .library import LibrarySpec, assemble
from .smoothdiff import ORDER_MARGIN, compute_derivatives

log = logging.getLogger("ralpde")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Invalid configuration; reported with exit code 2."""


# ----------------------------------------------------------------------------
# config files and manifests


def read_config(path: str | Path) -> dict[str, str]:
    """Parse a flat ``key = value`` file (``#`` comments) or a run manifest."""
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {p}")
    text = p.read_text()
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {p}: invalid JSON: {exc}") from None
        data = data.get("config", data)
        return {k: _config_str(v) for k, v in data.items() if v is not None}
    out: dict[str, str] = {}
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"config {p}:{i}: expected key = value, got {raw!r}")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _config_str(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, list):
        return ",".join(_config_str(x) for x in v)
    return str(v)


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"expected a boolean, got {text!r}")


def _apply_config(sub: argparse.ArgumentParser, argv: Sequence[str], cfg: dict[str, str]) -> argparse.Namespace:
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    defaults: dict[str, Any] = {}
    for key, value in cfg.items():
        if key in ("command", "config"):
            continue
        if key not in actions:
            raise UsageError(f"unknown config key {key!r} for '{sub.prog}'")
        act = actions[key]
        try:
            if isinstance(act, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
                defaults[key] = _parse_bool(value)
            elif isinstance(act, argparse._CountAction):
                defaults[key] = int(value)
            elif isinstance(act, argparse._AppendAction):
                conv = act.type or str
                defaults[key] = [conv(v.strip()) for v in value.split(",") if v.strip()]
            else:
                conv = act.type or str
                defaults[key] = conv(value)
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise UsageError(f"config key {key!r}: {exc}") from None
    sub.set_defaults(**defaults)
    return sub.parse_args(argv)


def _jsonable(v: Any) -> Any:
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, Path):
        return str(v)
    return v


_PAIR_KEYS = ("param", "field")


def write_manifest(path: Path, command: str, args: argparse.Namespace, outputs: list[Path],
                   extra: dict[str, Any] | None = None) -> None:
    """Full resolved config plus versions; rerun with ``--config <manifest>``."""
    config = {}
    for k, v in sorted(vars(args).items()):
        if k in ("command", "config", "func"):
            continue
        if k in _PAIR_KEYS and v is not None:
            v = [f"{a}={b}" for a, b in v]
        config[k] = _jsonable(v)
    manifest = {
        "tool": "ralpde",
        "version": __version__,
        "command": command,
        "config": config,
        "seed": config.get("seed"),
        "outputs": [str(p) for p in outputs],
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    if extra:
        manifest.update(extra)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=False) + "\n")


def _stem(path: Path) -> Path:
    return path.with_suffix("") if path.suffix else path


def _sibling(base: Path, suffix: str) -> Path:
    """``base`` with ``suffix`` appended to its name (dots in the name kept)."""
    return base.with_name(base.name + suffix)


def _check_out_dir(path: Path) -> None:
    parent = path.parent if str(path.parent) else Path(".")
    if not parent.is_dir():
        raise UsageError(f"output directory does not exist: {parent}")


def _key_value(text: str) -> tuple[str, float]:
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    return key.strip(), float(value)


def _name_path(text: str) -> tuple[str, str]:
    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        raise argparse.ArgumentTypeError(f"expected NAME=PATH, got {text!r}")
    return key.strip(), value.strip()


def _csv_list(conv: Callable[[str], Any]) -> Callable[[str], tuple]:
    def parse(text: str) -> tuple:
        try:
            return tuple(conv(v.strip()) for v in text.split(",") if v.strip())
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    return parse


def _read_field(path: str, strict: bool = True):
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"input file not found: {p}")
    return field_read(p, strict=strict)


# ----------------------------------------------------------------------------
# generate


def cmd_generate(args: argparse.Namespace) -> int:
    if not args.system:
        raise UsageError("--system is required")
    params = dict(args.param or [])
    if args.sigma is not None:
        params["sigma"] = args.sigma
    try:
        spec = SystemSpec(args.system, tuple(params.items()), args.seed)
        spec.resolved()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out) if args.out else Path(f"{spec.system}.fld")
    _check_out_dir(out)
    try:
        fld, truth = generate(spec)
        if args.snr is not None:
            fld = inject_noise(fld, args.snr, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    field_write(fld, out)
    truth_path = _sibling(_stem(out), ".truth.json")
    truth_path.write_text(json.dumps(
        {"system": spec.system, "params": spec.resolved(), "seed": spec.seed,
         "snr_db": _jsonable(args.snr), "terms": truth.to_dict()}, indent=2) + "\n")
    manifest = _sibling(_stem(out), ".manifest.json")
    write_manifest(manifest, "generate", args, [out, truth_path],
                   {"shape": list(fld.shape)})
    print(f"wrote {out} shape={'x'.join(map(str, fld.shape))}")
    if truth.terms:
        eq = SparseModel(dict(truth.terms), 0.0, 0, 0.0, "truth").equation(digits=6)
        print(f"ground truth: {eq}")
        for name, coef in truth.terms.items():
            print(f"  {name}\t{coef:g}")
    else:
        print("ground truth: none (pure noise)")
    return EXIT_OK


# ----------------------------------------------------------------------------
# identify


def _library_from_args(args: argparse.Namespace, fields: tuple[str, ...], n_spatial: int) -> LibrarySpec:
    try:
        return LibrarySpec(
            d_max=args.d_max, r_max=args.r_max, include_constant=not args.no_constant,
            fields=fields, n_spatial=n_spatial, coordinates=tuple(args.coordinates or ()),
            coord_degree=args.coord_degree,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_identify(args: argparse.Namespace) -> int:
    from .regress import identify

    if not args.input:
        raise UsageError("an input FLD1 file is required")
    if args.method.lower() not in ("ral", "stridge"):
        raise UsageError(f"unknown method {args.method!r}")
    if not args.dtol > 0:
        raise UsageError("--dtol must be positive")
    if args.order_margin < 0:
        raise UsageError("--order-margin must be >= 0")
    extra = dict(args.field or [])
    if args.target in extra:
        raise UsageError(f"field name {args.target!r} given twice")
    for p in [args.input, *extra.values()]:
        if not Path(p).is_file():
            raise UsageError(f"input file not found: {p}")
    out = Path(args.out) if args.out else _sibling(_stem(Path(args.input)), ".model.json")
    _check_out_dir(out)
    if args.design_csv:
        _check_out_dir(Path(args.design_csv))

    fields = {args.target: _read_field(args.input, not args.allow_nonfinite)}
    for name, path in extra.items():
        fields[name] = _read_field(path, not args.allow_nonfinite)
    ref = fields[args.target]
    lib = _library_from_args(args, tuple(fields), ref.n_spatial)
    derivs = {
        name: compute_derivatives(f, max_x_order=lib.r_max, include_t=(name == args.target),
                                  order_margin=args.order_margin)
        for name, f in fields.items()
    }
    dm = assemble(derivs, lib, target=args.target, trim_edges=not args.keep_edges)
    if args.design_csv:
        from .library import complexify
        (complexify(dm) if dm.is_complex else dm).to_csv(args.design_csv)
    model = identify(dm, args.method, args.dtol)
    order = [t.name for t in dm.terms]
    if dm.is_complex:
        order = [f"{n}.{part}" for n in order for part in ("re", "im")]
    model.info.setdefault("library", lib.to_dict())
    model.info["rows"] = dm.n_rows
    model.info["edge_rows_trimmed"] = dm.meta.get("edge_rows_trimmed", 0)
    model.info["dropped_rows"] = dm.dropped_rows
    model.info["tuned"] = {name: {ax: list(v) for ax, v in d.tuned.items()} for name, d in derivs.items()}
    out.write_text(model.to_json(include_trace=args.trace) + "\n")
    outputs = [out] + ([Path(args.design_csv)] if args.design_csv else [])
    write_manifest(_sibling(_stem(out), ".manifest.json"), "identify", args, outputs)
    if model.null:
        print("error: no terms identified (null model)", file=sys.stderr)
        return EXIT_RUNTIME
    print(model.equation(order=order))
    log.info("rss=%g aic=%g rows=%d", model.rss, model.aic, model.n_rows)
    return EXIT_OK


# ----------------------------------------------------------------------------
# differentiate


def cmd_differentiate(args: argparse.Namespace) -> int:
    if not args.input:
        raise UsageError("an input FLD1 file is required")
    if not 1 <= args.max_order <= 5:
        raise UsageError("--max-order must be in 1..5")
    if args.order_margin < 0:
        raise UsageError("--order-margin must be >= 0")
    if not Path(args.input).is_file():
        raise UsageError(f"input file not found: {args.input}")
    outdir = Path(args.outdir) if args.outdir else Path(f"{_stem(Path(args.input))}_derivs")
    _check_out_dir(outdir)
    fld = _read_field(args.input, not args.allow_nonfinite)
    ds = compute_derivatives(fld, max_x_order=args.max_order, include_t=not args.no_t,
                             order_margin=args.order_margin)
    outdir.mkdir(exist_ok=True)
    name = args.name
    written = [outdir / f"{name}_smoothed.fld"]
    field_write(ds.smoothed, written[0])
    for (axis, k), d in sorted(ds.derivs.items()):
        p = outdir / f"{name}_{axis * k}.fld"
        field_write(d, p)
        written.append(p)
    info = {
        "tuned": {ax: {"order": o, "window": l} for ax, (o, l) in ds.tuned.items()},
        "filters": {f"{ax}{k}": {"order": c.order, "window": c.window}
                    for (ax, k), c in sorted(ds.configs.items())},
        "margins": ds.margins,
    }
    filters = outdir / "filters.json"
    filters.write_text(json.dumps(info, indent=2) + "\n")
    written.append(filters)
    write_manifest(outdir / "manifest.json", "differentiate", args, written)
    for p in written:
        print(p)
    return EXIT_OK


# ----------------------------------------------------------------------------
# bench


def cmd_bench(args: argparse.Namespace) -> int:
    from . import bench

    if not args.sweep:
        raise UsageError("--sweep is required")
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    if args.sweep == "whitenoise":
        return _bench_whitenoise(args)
    if not args.system:
        raise UsageError("--system is required for snr and samplesize sweeps")
    try:
        if args.grid:
            grid = bench.parse_grid(args.grid, args.sweep)
        elif args.sweep == "snr":
            grid = bench.snr_grid(full=args.full_grid)
        else:
            grid = bench.parse_grid("1e2:1e4", "samplesize")
        library = None
        if args.d_max is not None or args.r_max is not None:
            base = default_library(args.system)
            library = LibrarySpec(
                d_max=args.d_max or base.d_max, r_max=args.r_max or base.r_max,
                coordinates=base.coordinates, coord_degree=base.coord_degree,
            )
        spec = bench.ExperimentSpec(
            system=args.system, sweep=args.sweep, grid=grid, trials=args.trials,
            base_seed=args.seed, method=args.method, d_tol=args.dtol, library=library,
            params=tuple(dict(args.param or []).items()),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    prefix = Path(args.out) if args.out else Path(f"bench_{args.sweep}_{spec.system}_{spec.method}")
    _check_out_dir(prefix)
    table = bench.run_sweep(spec, n_jobs=args.jobs)
    csv_path, svg_path = _sibling(prefix, ".csv"), _sibling(prefix, ".svg")
    table.to_csv(csv_path)
    bench.write_chart([table], svg_path, title=f"{spec.system}, {spec.method}")
    timings = {f"{r.grid_value:g}/{r.trial}": round(r.wall_time, 3) for r in table.records}
    write_manifest(_sibling(prefix, ".manifest.json"), "bench", args, [csv_path, svg_path],
                   {"experiment": _jsonable_tree(spec.to_dict()), "wall_time": timings})
    label = "SNR (dB)" if spec.sweep == "snr" else "N"
    print(f"{label}\teta\tsuccess/trials")
    for s in table.summary():
        failed = f"\t({s.failures} failed)" if s.failures else ""
        print(f"{s.grid_value:g}\t{s.eta:.2f}\t{s.successes}/{s.trials}{failed}")
    print(f"wrote {csv_path} and {svg_path}")
    return EXIT_OK


def _jsonable_tree(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: _jsonable_tree(v) for k, v in obj.items()}
    return _jsonable(obj)


def _bench_whitenoise(args: argparse.Namespace) -> int:
    from . import bench

    sigmas = args.sigma if args.sigma else (0.1, 1.0, 10.0)
    try:
        methods = args.methods if args.methods else bench.METHODS
        table_args = dict(
            sigmas=tuple(sigmas), libraries=tuple(args.libraries or bench.TABLE1_LIBRARIES),
            methods=tuple(methods), trials=args.trials, base_seed=args.seed, desk=args.desk,
            d_tol=args.dtol, n_jobs=args.jobs,
        )
        # validate before running
        if any(not s > 0 for s in table_args["sigmas"]):
            raise ValueError("sigma values must be positive")
        for m in table_args["methods"]:
            bench._normalize_method(m)
        if any(d not in (1, 2, 3, 4, 5) for d in table_args["libraries"]):
            raise ValueError("library degree must be in 1..5")
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    prefix = Path(args.out) if args.out else Path("bench_whitenoise")
    _check_out_dir(prefix)
    table = bench.whitenoise_study(**table_args)
    csv_path = _sibling(prefix, ".csv")
    table.to_csv(csv_path)
    write_manifest(_sibling(prefix, ".manifest.json"), "bench", args, [csv_path],
                   {"experiment": table.config})
    print("sigma\tlibrary\tmethod\tNonParsimonious%\tnull%\tparsimonious%")
    for r in table.rows:
        pars = sum(r.percent(c) for c in ("ODE", "Transport", "Heat", "OtherParsimonious"))
        print(f"{r.sigma:g}\td=r={r.library}\t{r.method}\t{r.percent('NonParsimonious'):.0f}"
              f"\t{r.percent('null'):.0f}\t{pars:.0f}")
    print(f"wrote {csv_path}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value file (or a run manifest)")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-vv for debug)")


def _library_flags(p: argparse.ArgumentParser, defaults: bool = True) -> None:
    p.add_argument("--d-max", type=int, default=3 if defaults else None, help="max monomial degree")
    p.add_argument("--r-max", type=int, default=3 if defaults else None, help="max derivative order")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="ralpde", description="Identify governing PDEs from spatiotemporal data.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subs = parser.add_subparsers(dest="command", metavar="{generate,identify,bench,differentiate}")
    table: dict[str, argparse.ArgumentParser] = {}

    g = subs.add_parser("generate", help="write a benchmark dataset as an FLD1 file")
    _common(g)
    g.add_argument("--system", choices=SYSTEMS + ("kdv",), help="benchmark system")
    g.add_argument("--out", help="output FLD1 path (default <system>.fld)")
    g.add_argument("--seed", type=int, default=0, help="seed for noise and white-noise fields")
    g.add_argument("--sigma", type=float, help="white-noise standard deviation")
    g.add_argument("--snr", type=float, help="add Gaussian noise at this SNR in dB")
    g.add_argument("--param", type=_key_value, action="append", metavar="KEY=VALUE",
                   help="override a system parameter (repeatable)")
    g.set_defaults(func=cmd_generate)
    table["generate"] = g

    i = subs.add_parser("identify", help="identify the PDE behind an FLD1 field")
    _common(i)
    i.add_argument("input", nargs="?", help="FLD1 file of the target field")
    i.add_argument("--target", default="u", help="name of the target field (default u)")
    i.add_argument("--field", type=_name_path, action="append", metavar="NAME=PATH",
                   help="additional field entering the library (repeatable)")
    i.add_argument("--method", default="ral", help="ral or stridge")
    i.add_argument("--dtol", type=float, default=2.0, help="STRidge threshold")
    _library_flags(i)
    i.add_argument("--no-constant", action="store_true", help="leave the constant term out")
    i.add_argument("--coordinates", type=_csv_list(str), help="coordinate factors, e.g. x")
    i.add_argument("--coord-degree", type=int, default=2, help="max coordinate degree")
    i.add_argument("--order-margin", type=int, default=ORDER_MARGIN,
                   help="fit degree above derivative order (0 = tuned order only)")
    i.add_argument("--keep-edges", action="store_true", help="keep rows near the grid edges")
    i.add_argument("--allow-nonfinite", action="store_true", help="drop rows with NaN/inf samples")
    i.add_argument("--out", help="model JSON path (default <input>.model.json)")
    i.add_argument("--design-csv", help="also export the design matrix as CSV")
    i.add_argument("--trace", action="store_true", help="include the RAL trace in the JSON")
    i.set_defaults(func=cmd_identify)
    table["identify"] = i

    b = subs.add_parser("bench", help="success-rate sweeps and the white-noise study")
    _common(b)
    b.add_argument("--sweep", choices=("snr", "samplesize", "whitenoise"))
    b.add_argument("--system", help="benchmark system (snr / samplesize sweeps)")
    b.add_argument("--trials", type=int, default=10, help="trials per grid point")
    b.add_argument("--seed", type=int, default=0, help="base seed")
    b.add_argument("--method", default="RAL", help="RAL or STRidge")
    b.add_argument("--dtol", type=float, default=2.0, help="STRidge threshold")
    b.add_argument("--grid", help="comma list (inf allowed) or lo:hi for sample sizes")
    b.add_argument("--full-grid", action="store_true", help="SNR grid 0, 2, ..., 60, inf")
    _library_flags(b, defaults=False)
    b.add_argument("--param", type=_key_value, action="append", metavar="KEY=VALUE",
                   help="override a system parameter (repeatable)")
    b.add_argument("--sigma", type=_csv_list(float), help="white-noise sigmas, comma list")
    b.add_argument("--libraries", type=_csv_list(int), help="white-noise library degrees")
    b.add_argument("--methods", type=_csv_list(str), help="white-noise methods, comma list")
    b.add_argument("--desk", action="store_true", help="500 x 250 white-noise grids")
    b.add_argument("--jobs", type=int, default=1, help="worker processes")
    b.add_argument("--out", help="output prefix for .csv/.svg/.manifest.json")
    b.set_defaults(func=cmd_bench)
    table["bench"] = b

    d = subs.add_parser("differentiate", help="dump smoothed field and derivatives as FLD1")
    _common(d)
    d.add_argument("input", nargs="?", help="FLD1 file")
    d.add_argument("--outdir", help="output directory (default <input>_derivs)")
    d.add_argument("--name", default="u", help="field name used in file names")
    d.add_argument("--max-order", type=int, default=3, help="highest spatial derivative")
    d.add_argument("--order-margin", type=int, default=ORDER_MARGIN,
                   help="fit degree above derivative order")
    d.add_argument("--no-t", action="store_true", help="skip the time derivative")
    d.add_argument("--allow-nonfinite", action="store_true", help="accept NaN/inf samples")
    d.set_defaults(func=cmd_differentiate)
    table["differentiate"] = d
    return parser, table


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subs = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("ralpde: error: a subcommand is required", file=sys.stderr)
        return EXIT_USAGE
    sub = subs[args.command]
    try:
        if args.config:
            cfg = read_config(args.config)
            sub_argv = argv[argv.index(args.command) + 1:]
            command = args.command
            args = _apply_config(sub, sub_argv, cfg)
            args.command = command
    except UsageError as exc:
        sub.print_usage(sys.stderr)
        print(f"ralpde {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        sub.print_usage(sys.stderr)
        print(f"ralpde {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FieldFormatError as exc:
        print(f"ralpde {args.command}: format error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:
        log.debug("failure", exc_info=True)
        print(f"ralpde {args.command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
