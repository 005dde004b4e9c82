"""
Command-line front end.

Every command reads a key-value config (a path or a shipped preset name),
applies flag overrides on top of it and writes its outputs plus a
``manifest.json`` into ``--output-dir``. Precedence, lowest first: built-in
defaults, config file, ``GQNET_SEED``, command-line flags.

Exit codes: 0 ok, 1 configuration error, 2 physics infeasibility, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from . import estimation as est
from .config import ConfigError, RunConfig, config_from_dict, load_config
from .gaussian import GaussianError, NLAInfeasibleError, NormalFormTriplet
from .keyrate import RateError, rate_report
from .network import ChainError, chain_cm_recursive, to_equivalent_channel
from .optimizer import (
    SWEEP_COLUMNS,
    SWEEP_EXTRA,
    OptimizationError,
    OptimizationSpec,
    chain_rate,
    optimize_mu_g,
    rate_from_triplet,
    sweep,
)

log = logging.getLogger("gqnet")

EXIT_OK, EXIT_CONFIG, EXIT_PHYSICS, EXIT_IO = 0, 1, 2, 3
MANIFEST = "manifest.json"

# flag dest -> config key
OVERRIDES = {
    "depth_m": int,
    "mu": float,
    "gain_g": float,
    "eta_B": float,
    "xi": float,
    "distance_km": float,
    "N": float,
    "seed": int,
}


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _clean(value):
    """JSON-safe copy: NaN/inf become null, numpy scalars become Python numbers."""
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def dump_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def _cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _range_values(spec: dict) -> list[float]:
    if spec.get("values") is not None:
        return [float(v) for v in spec["values"]]
    start, stop, num = spec["start"], spec["stop"], int(spec["num"])
    if num < 1:
        return []
    if spec.get("log"):
        if start <= 0 or stop <= 0:
            raise ConfigError("log-spaced ranges need positive bounds")
        return [float(v) for v in np.geomspace(start, stop, num)]
    return [float(v) for v in np.linspace(start, stop, num)]


# command implementations: (cfg, options, threads) -> {filename: text}, stdout text


def run_chain(cfg: RunConfig, options: dict, threads: int):
    t = chain_cm_recursive(cfg.chain)
    eq = to_equivalent_channel(t)
    report = {
        "a": t.a,
        "b": t.b,
        "c": t.c,
        "mu_eq": eq.mu_eq,
        "eta_eq": eq.eta_eq,
        "xi_eq": eq.xi_eq,
        "bona_fide": eq.is_bona_fide(),
    }
    text = dump_json(report)
    return {"chain.json": text}, text


def run_rate(cfg: RunConfig, options: dict, threads: int):
    protocol, eps = cfg.protocol_params(), cfg.security()
    if options.get("triplet") is not None:
        tri = options["triplet"]
        rep = rate_from_triplet(NormalFormTriplet(tri["a"], tri["b"], tri["c"]), cfg.chain, protocol, eps)
    else:
        rep = chain_rate(cfg.chain, protocol, eps)
    text = dump_json(rep.to_dict())
    return {"rate.json": text}, text


def run_estimate(cfg: RunConfig, options: dict, threads: int):
    n = int(options["samples"])
    if n < 10:
        raise ConfigError(f"need at least 10 samples, got {n}")
    m_pe = max(2, int(round(cfg.protocol.pe_fraction * n)))
    batch = est.sample_network_data(cfg.chain, n, cfg.seed, threads)
    result = est.estimate_from_batch(batch, m_pe, cfg.epsilons.eps_pe, cfg.seed, options.get("strict", False))

    header = ["j"] + batch.columns()
    data = batch.matrix()
    samples = dump_csv(header, ([j] + [float(x) for x in row] for j, row in enumerate(data)))

    v_wc = est.classical_to_quantum(result.worst.sigma_wc)
    rep = rate_report(v_wc, cfg.protocol_params(), cfg.security(), cfg.chain.total_eta, hops=2)
    report = result.worst.to_dict()
    report.update(
        samples=n,
        seed=cfg.seed,
        weights={k: {"u": w.u, "v": w.v, "regularized": w.regularized} for k, w in result.weights.items()},
        rate=rep.to_dict(),
    )
    text = dump_json(report)
    return {"samples.csv": samples, "worst_case.json": text}, text


def _sweep_rows(cfg: RunConfig, options: dict, threads: int, chain=None):
    chain = chain or cfg.chain
    values = _range_values(options["range"])
    curves = options.get("eta_B_curves") or [chain.eta_B]
    rows = []
    for eta_b in curves:
        rows += sweep(
            options["variable"],
            values,
            chain.with_(eta_B=eta_b),
            cfg.protocol_params(),
            cfg.security(),
            cfg.protocol.pe_fraction,
            threads,
        )
    return rows


X_COLUMN = {"N": 1, "distance": 10, "eta_B": 9, "depth": 11}


def plot_script(csv_name: str, variable: str, curves) -> str:
    x = X_COLUMN[variable]
    lines = [
        "# gnuplot script; reads only " + csv_name,
        'set datafile separator ","',
        "set logscale y",
        "set format y \"10^{%L}\"",
        f'set xlabel "{variable}"',
        'set ylabel "key rate (bits/use)"',
        "set key bottom left",
    ]
    if variable == "N":
        lines.append("set logscale x")
    plots = []
    for i, eta_b in enumerate(curves):
        dt = i % 4 + 1
        plots.append(
            f'"{csv_name}" skip 1 using {x}:(abs($9-{eta_b!r})<1e-12 && $2>0 ? $2 : 1/0) '
            f'with linespoints dt {dt} title "eta_B={eta_b!r}"'
        )
    plots.append(f'"{csv_name}" skip 1 using {x}:6 with lines lc rgb "black" title "PLOB"')
    plots.append(f'"{csv_name}" skip 1 using {x}:7 with lines lc rgb "gray" title "repeater capacity"')
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


def _sweep_outputs(rows, variable, curves):
    header = SWEEP_COLUMNS + SWEEP_EXTRA
    return {
        "sweep.csv": dump_csv(header, ([r[k] for k in header] for r in rows)),
        "sweep.gp": plot_script("sweep.csv", variable, curves),
    }


def run_sweep(cfg: RunConfig, options: dict, threads: int):
    rows = _sweep_rows(cfg, options, threads)
    curves = options.get("eta_B_curves") or [cfg.chain.eta_B]
    files = _sweep_outputs(rows, options["variable"], curves)
    return files, ""


def run_optimize(cfg: RunConfig, options: dict, threads: int):
    spec = OptimizationSpec(
        tuple(options["mu_grid"]),
        tuple(options["g_grid"]),
        cfg.chain,
        cfg.protocol_params(),
        cfg.security(),
        options.get("objective", "composable_rate"),
    )
    res = optimize_mu_g(spec, threads)
    grid_header = ["mu", "g", "K", "feasible"]
    optimum = {
        "mu": res.mu,
        "g": res.g,
        "K": res.K,
        "objective": spec.objective,
        "squeezing_db": res.squeezing_db,
    }
    files = {
        "grid.csv": dump_csv(grid_header, ([r[k] for k in grid_header] for r in res.table)),
        "grid_refined.csv": dump_csv(grid_header, ([r[k] for k in grid_header] for r in res.refined_table)),
        "optimum.json": dump_json(optimum),
    }
    sweep_opts = {
        "variable": "N",
        "range": options.get("sweep_range") or {"start": 1e5, "stop": 1e12, "num": 15, "log": True},
        "eta_B_curves": options.get("eta_B_curves"),
    }
    chain = cfg.chain.with_(mu=res.mu, gain_g=res.g)
    rows = _sweep_rows(cfg, sweep_opts, threads, chain)
    files.update(_sweep_outputs(rows, "N", sweep_opts["eta_B_curves"] or [chain.eta_B]))
    return files, files["optimum.json"]


COMMANDS = {
    "chain": run_chain,
    "rate": run_rate,
    "estimate": run_estimate,
    "sweep": run_sweep,
    "optimize": run_optimize,
}


def execute(command: str, cfg: RunConfig, options: dict, output_dir: Path, threads: int = 1) -> str:
    """Run one command, write its files and the manifest; returns text for stdout."""
    files, stdout = COMMANDS[command](cfg, options, threads)
    output_dir.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (output_dir / name).write_text(text)
    manifest = {
        "tool": "gqnet",
        "version": tool_version(),
        "command": command,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "options": options,
        "outputs": sorted(files),
    }
    (output_dir / MANIFEST).write_text(dump_json(manifest))
    return stdout


def _triple(text: str) -> list:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected lo,hi,steps, got {text!r}")
    return [float(parts[0]), float(parts[1]), int(parts[2])]


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors; exit code 2 is reserved for physics
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gqnet", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--version", action="version", version=f"gqnet {tool_version()}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="config file or preset name (fig4_m1, fig4_m2)")
        p.add_argument("--output-dir", default="gqnet-out")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--depth-m", dest="depth_m", type=int)
        p.add_argument("--mu", type=float)
        p.add_argument("--gain-g", dest="gain_g", type=float)
        p.add_argument("--eta-B", dest="eta_B", type=float)
        p.add_argument("--xi", type=float)
        p.add_argument("--distance-km", dest="distance_km", type=float)
        p.add_argument("--block-size", dest="N", type=float, help="total block size N")
        p.add_argument("--seed", type=int)
        return p

    common(sub.add_parser("chain", help="end-to-end triplet and equivalent channel"))

    p = common(sub.add_parser("rate", help="composable rate report"))
    p.add_argument("--from-triplet", metavar="FILE", help="JSON with keys a, b, c ('-' for stdin)")

    p = common(sub.add_parser("estimate", help="simulate raw data and estimate the worst-case CM"))
    p.add_argument("--samples", type=int, required=True, help="number of simulated rounds")
    p.add_argument("--strict", action="store_true", help="keep O(1/m_pe) terms in the worst case")

    def ranged(p):
        p.add_argument("--eta-B-curves", dest="eta_B_curves", type=_float_list)
        return p

    p = ranged(common(sub.add_parser("sweep", help="rate table along one variable")))
    p.add_argument("--variable", choices=["N", "distance", "eta_B", "depth"], default="N")
    p.add_argument("--start", type=float, default=1e5)
    p.add_argument("--stop", type=float, default=1e12)
    p.add_argument("--num", type=int, default=15)
    p.add_argument("--log", action="store_true", help="geometric spacing")
    p.add_argument("--values", type=_float_list, help="explicit comma-separated values")

    p = ranged(common(sub.add_parser("optimize", help="(mu, g) grid optimization then an N sweep")))
    p.add_argument("--mu-grid", type=_triple, default=[1.5, 12.0, 22])
    p.add_argument("--g-grid", type=_triple, default=[1.0, 8.0, 29])
    p.add_argument("--objective", choices=["composable_rate", "asymptotic_rate"], default="composable_rate")

    p = sub.add_parser("rerun", help="re-execute a manifest")
    p.add_argument("manifest")
    p.add_argument("--output-dir", default="gqnet-rerun")
    p.add_argument("--threads", type=int, default=1)
    return parser


def _options(args) -> dict:
    if args.command == "rate":
        if args.from_triplet is None:
            return {}
        raw = sys.stdin.read() if args.from_triplet == "-" else Path(args.from_triplet).read_text()
        try:
            data = json.loads(raw)
            return {"triplet": {k: float(data[k]) for k in ("a", "b", "c")}}
        except (ValueError, KeyError, TypeError) as err:
            raise ConfigError(f"bad triplet input: {err}") from None
    if args.command == "estimate":
        return {"samples": args.samples, "strict": args.strict}
    if args.command == "sweep":
        rng = {"start": args.start, "stop": args.stop, "num": args.num, "log": args.log, "values": args.values}
        return {"variable": args.variable, "range": rng, "eta_B_curves": args.eta_B_curves}
    if args.command == "optimize":
        return {
            "mu_grid": args.mu_grid,
            "g_grid": args.g_grid,
            "objective": args.objective,
            "eta_B_curves": args.eta_B_curves,
        }
    return {}


def _dispatch(args) -> int:
    if args.command == "rerun":
        manifest = json.loads(Path(args.manifest).read_text())
        if manifest.get("command") not in COMMANDS:
            raise ConfigError(f"manifest names unknown command {manifest.get('command')!r}")
        cfg = config_from_dict(manifest["config"])
        out = execute(manifest["command"], cfg, manifest["options"], Path(args.output_dir), args.threads)
    else:
        cfg = load_config(args.config)
        cfg = cfg.with_overrides(**{k: getattr(args, k) for k in OVERRIDES})
        out = execute(args.command, cfg, _options(args), Path(args.output_dir), args.threads)
    if out:
        sys.stdout.write(out)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return _dispatch(args)
    except NLAInfeasibleError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_PHYSICS
    except (ChainError, GaussianError) as err:
        print(f"error: physics: {err}", file=sys.stderr)
        return EXIT_PHYSICS
    except (ConfigError, OptimizationError, est.EstimationError, RateError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
