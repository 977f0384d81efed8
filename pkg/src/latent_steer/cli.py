"""Command-line entry point: gen-data, train, baseline, eval, compare."""
from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import io
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .autodiff import DomainError
from .baselines import BaselineDirections, random_directions, sefa_directions, variance_directions
from .config import ConfigError, RunConfig, load_config
from .dgm import SyntheticDgm, factor_labels, read_dataset, write_dataset
from .disent import evaluate_disentanglement, write_matrix_csv
from .editing import DirectionModel, dump_json, load_json
from .rng import stream
from .structure import SmrReport, evaluate_smr, write_sequences_csv
from .train import InvalidConfig, train, write_trace

log = logging.getLogger("latent_steer")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

# comparison layout: top-K blocks, then gamma, then tau
COMPARE_COLUMNS = [(k, g, t) for k in (1, 3) for g in (3, 4) for t in (0.0, 0.2)]


class SchemaMismatch(ValueError):
    pass


class GridMismatch(ValueError):
    pass


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _now() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = dt.datetime.fromtimestamp(int(epoch), dt.timezone.utc) if epoch else dt.datetime.now(dt.timezone.utc)
    return t.isoformat(timespec="seconds")


def write_manifest(out_dir: Path, command: str, cfg: RunConfig | None, inputs: list[Path],
                   outputs: list[Path], started: str) -> Path:
    manifest = {
        "command": command,
        "config_hash": cfg.digest() if cfg is not None else None,
        "tool_version": __version__,
        "timestamps": {"started": started, "finished": _now()},
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {p.name: _sha256(p) for p in outputs},
    }
    path = out_dir / f"{command}.manifest.json"
    dump_json(manifest, path)
    return path


def verify_manifest(path: str | Path) -> bool:
    """True if every output digest listed in the manifest matches the file next to it."""
    path = Path(path)
    m = load_json(path)
    return all(_sha256(path.parent / name) == digest for name, digest in m["outputs"].items())


def _dgm(cfg: RunConfig) -> SyntheticDgm:
    return SyntheticDgm(cfg.K, cfg.F, cfg.T_max, cfg.a, cfg.b, seed=cfg.seed, rotate=cfg.rotate)


def _out_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _read_latents(path: str, cfg: RunConfig):
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"dataset not found: {p}")
    try:
        z, objs = read_dataset(p, cfg.T_max)
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise SchemaMismatch(f"{p}: malformed dataset ({exc})") from None
    if len(z) and z.shape[1] != cfg.K:
        raise SchemaMismatch(f"{p}: latent dim {z.shape[1]} != K={cfg.K}")
    return z, objs


def _load_editor(path: str):
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"model not found: {p}")
    d = load_json(p)
    try:
        if d.get("variant") == "baseline":
            return BaselineDirections.from_dict(d), d["method"]
        model = DirectionModel.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaMismatch(f"{p}: not a direction model ({exc})") from None
    return model, f"learned-{model.variant}"


def cmd_gen_data(args, cfg: RunConfig) -> int:
    started = _now()
    out = _out_dir(args, cfg)
    n = cfg.n_latents if args.n is None else args.n
    if n < 0:
        raise ConfigError("n must be non-negative")
    dgm = _dgm(cfg)
    data_seed = int(stream(cfg.seed, "data").integers(2**63))
    z = dgm.sample_prior(n, data_seed)
    path = out / "dataset.jsonl"
    write_dataset(path, z, dgm.decode_batch(z) if n else [])
    dgm_path = out / "dgm.json"
    dump_json(dgm.to_dict(), dgm_path)
    write_manifest(out, "gen-data", cfg, [], [path, dgm_path], started)
    print(f"wrote {n} objects to {path}")
    return EXIT_OK


def cmd_train(args, cfg: RunConfig) -> int:
    started = _now()
    tcfg = cfg.train_config().validate()
    z, _ = _read_latents(args.data, cfg)
    out = _out_dir(args, cfg)
    result = train(tcfg, z)
    model_path = out / "model.json"
    dump_json(result.model.to_dict(), model_path)
    trace_path = out / "loss_trace.csv"
    write_trace(result.trace, trace_path)
    write_manifest(out, "train", cfg, [Path(args.data)], [model_path, trace_path], started)
    first, last = result.trace[0].mean_loss, result.trace[-1].mean_loss
    print(f"trained {tcfg.n_directions} directions: loss {first:.4f} -> {last:.4f}")
    return EXIT_OK


def cmd_baseline(args, cfg: RunConfig) -> int:
    started = _now()
    if cfg.D < 1:
        raise ConfigError("D must be >= 1")
    inputs = []
    if args.method == "random":
        dirs = random_directions(cfg.K, cfg.D, int(stream(cfg.seed, "init").integers(2**63)))
    else:
        if args.data is None:
            raise ConfigError(f"baseline {args.method} needs --data")
        z, _ = _read_latents(args.data, cfg)
        inputs.append(Path(args.data))
        fn = variance_directions if args.method == "variance" else sefa_directions
        dirs = fn(z, cfg.D)
    out = _out_dir(args, cfg)
    path = out / f"baseline_{args.method}.json"
    dump_json(dirs.to_dict(), path)
    write_manifest(out, f"baseline-{args.method}", cfg, inputs, [path], started)
    print(f"wrote {args.method} directions to {path}")
    return EXIT_OK


def _threads() -> int:
    raw = os.environ.get("LATENT_STEER_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"LATENT_STEER_THREADS must be an integer, got {raw!r}") from None


def cmd_eval(args, cfg: RunConfig) -> int:
    started = _now()
    editor, method = _load_editor(args.model)
    if args.label:
        method = args.label
    if editor.latent_dim != cfg.K:
        raise SchemaMismatch(f"model latent dim {editor.latent_dim} != K={cfg.K}")
    if max(cfg.top_ks) > editor.n_directions:
        raise ConfigError(f"top_ks exceed the model's {editor.n_directions} directions")
    z, objs = _read_latents(args.data, cfg)
    out = _out_dir(args, cfg)
    dgm = _dgm(cfg)
    anchors = stream(cfg.seed, "eval").standard_normal((cfg.M, cfg.K))
    threads = _threads()
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            rep, seqs = evaluate_smr(dgm, editor, anchors, method, cfg.gammas, cfg.taus, cfg.top_ks, executor=pool)
    else:
        rep, seqs = evaluate_smr(dgm, editor, anchors, method, cfg.gammas, cfg.taus, cfg.top_ks)
    rep.config_hash = cfg.digest()
    rep.seed = cfg.seed
    outputs = []
    smr_path = out / "smr_report.json"
    dump_json(rep.to_dict(), smr_path)
    seq_path = out / "sequences.csv"
    write_sequences_csv(seq_path, seqs)
    outputs += [smr_path, seq_path]
    if len(z) >= 2:
        metric_seed = int(stream(cfg.seed, "metrics").integers(2**63))
        counts = np.array([o.motif_counts for o in objs])
        dis = evaluate_disentanglement(z, factor_labels(counts), metric_seed, cfg.bins, cfg.trials)
        dis.config.update({"config_hash": cfg.digest()})
        dis_path = out / "disent_report.json"
        dump_json(dis.to_dict(), dis_path)
        mi_path, imp_path = out / "mi_matrix.csv", out / "importance_matrix.csv"
        write_matrix_csv(mi_path, dis.mi)
        write_matrix_csv(imp_path, dis.importance)
        outputs += [dis_path, mi_path, imp_path]
    write_manifest(out, "eval", cfg, [Path(args.model), Path(args.data)], outputs, started)
    print(f"{method}: top-1 SMR(gamma={cfg.gammas[0]}, tau={cfg.taus[0]}) = "
          f"{rep.top(cfg.gammas[0], float(cfg.taus[0]), 1):.3f}")
    return EXIT_OK


def pct(x: float) -> str:
    return f"{100.0 * x:.1f}"


def compare_table(reports: list[SmrReport]) -> tuple[list[str], list[list[str]]]:
    if len(reports) < 2:
        raise GridMismatch("compare needs at least two reports")
    grid = (reports[0].gammas, reports[0].taus, reports[0].top_ks)
    for r in reports[1:]:
        if (r.gammas, r.taus, r.top_ks) != grid:
            raise GridMismatch(f"report {r.method!r} uses a different grid")
    for k, g, t in COMPARE_COLUMNS:
        if g not in grid[0] or t not in grid[1] or k not in grid[2]:
            raise GridMismatch(f"reports lack column top-{k} gamma={g} tau={t}")
    header = ["method"] + [f"top{k}_gamma{g}_tau{t:g}" for k, g, t in COMPARE_COLUMNS]
    rows = [[r.method] + [pct(r.top(g, t, k)) for k, g, t in COMPARE_COLUMNS] for r in reports]
    return header, rows


def cmd_compare(args, cfg: RunConfig | None) -> int:
    started = _now()
    reports = []
    for p in args.reports:
        path = Path(p)
        if not path.is_file():
            raise FileNotFoundError(f"report not found: {path}")
        try:
            reports.append(SmrReport.from_dict(load_json(path)))
        except (KeyError, TypeError, IndexError) as exc:
            raise SchemaMismatch(f"{path}: not an SMR report ({exc})") from None
    header, rows = compare_table(reports)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    out = Path(args.out) if args.out else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        path = out / "comparison.csv"
        path.write_text(buf.getvalue(), encoding="utf-8")
        write_manifest(out, "compare", cfg, [Path(p) for p in args.reports], [path], started)
    widths = [max(len(header[c]), *(len(r[c]) for r in rows)) for c in range(len(header))]
    for line in [header] + rows:
        print("  ".join(cell.ljust(wd) for cell, wd in zip(line, widths)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="latent-steer", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat TOML config file")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value (repeatable)")
    common.add_argument("--out", help="output directory (defaults to output_dir)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="sample latents and decode a dataset")
    p.add_argument("--n", type=int, help="number of objects (defaults to n_latents)")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", parents=[common], help="learn directions on a dataset")
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("baseline", parents=[common], help="compute baseline directions")
    p.add_argument("method", choices=["random", "variance", "sefa"])
    p.add_argument("--data")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("eval", parents=[common], help="score a model or baseline")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--label", help="method name stored in the report")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", parents=[common], help="tabulate SMR reports")
    p.add_argument("reports", nargs="+")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.overrides)
        return args.func(args, cfg)
    except (ConfigError, InvalidConfig, GridMismatch) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, SchemaMismatch) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DomainError, ArithmeticError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
