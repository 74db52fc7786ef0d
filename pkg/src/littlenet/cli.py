"""Command-line entry point: validate | estimate | train.

Configs are flat ``key = value`` text files (``#`` starts a comment); unknown
keys are rejected so typos fail fast.  Every CSV written is paired with a
JSON manifest recording the resolved config, the seed, and the RNG algorithm;
re-running from a manifest reproduces the CSV byte for byte.

Exit codes: 0 success, 1 validation failure, 2 usage/config error, 3 I/O
error.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .estimators import EstimatorConfig, replicate_spmvd
from .net import NetworkParams
from .oracle import exact_gradient
from .rng import RNG_ALGORITHM, UniformStream
from .train import TrainConfig, load_idx, make_synthetic_dataset, sgd_train
from .validate import run_all


class ConfigError(ValueError):
    """A config file is malformed or fails validation."""


# schema: key -> (type tag, default); "int_list" accepts comma-separated sweeps
ESTIMATE_SCHEMA = {
    "network": ("str", "reference"),
    "n": ("int", 1),
    "cost": ("str", "first_bit"),
    "m0": ("int", 100),
    "m1": ("int", 100),
    "include_t0": ("bool", True),
    "replications": ("int", 1000),
    "init_range": ("float", 0.01),
    "seed": ("int", 0),
}

TRAIN_SCHEMA = {
    "dataset": ("str", "stripes"),
    "size": ("int", 2),
    "n_input": ("int", 4),
    "n_output": ("int", 2),
    "n_hidden": ("int", 0),
    "flip_prob": ("float", 0.0),
    "idx_images": ("str", ""),
    "idx_labels": ("str", ""),
    "idx_limit": ("int", 0),
    "step_size": ("float", 0.01),
    "updates": ("int", 3000),
    "report_every": ("int", 500),
    "m0": ("int", 10),
    "m1": ("int_list", (10,)),
    "include_t0": ("bool", True),
    "init_range": ("float", 0.01),
    "eval_chains": ("int", 8),
    "seed": ("int", 0),
}


def _parse_value(key, raw, kind):
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if kind == "int_list":
            return tuple(int(tok) for tok in raw.split(","))
        return raw
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: cannot parse {raw!r} as {kind}") from exc


def parse_config(path, schema):
    """Read a flat key = value file against a schema; unknown keys fail."""
    cfg = {key: default for key, (_, default) in schema.items()}
    seen = set()
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in text.split("=", 1))
        if key not in schema:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        seen.add(key)
        cfg[key] = _parse_value(key, raw, schema[key][0])
    return cfg


def write_config(cfg, schema):
    """Render a config dict back to the flat text format (round-trips)."""
    lines = []
    for key in schema:
        value = cfg[key]
        if schema[key][0] == "int_list":
            value = ",".join(str(v) for v in value)
        elif schema[key][0] == "bool":
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def _fmt(x):
    return repr(float(x))


def _manifest(command, cfg, seed, out_path, started):
    return {
        "command": command,
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in cfg.items()},
        "seed": seed,
        "rng_algorithm": RNG_ALGORITHM,
        "package_version": __version__,
        "started_utc": started,
        "finished_utc": datetime.now(timezone.utc).isoformat(),
        "output": Path(out_path).name,
    }


def _write_with_manifest(out_path, text, command, cfg, seed, started):
    out_path = Path(out_path)
    out_path.write_text(text)
    manifest = _manifest(command, cfg, seed, out_path, started)
    Path(str(out_path) + ".manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n"
    )


_COSTS = {
    "first_bit": lambda x: np.asarray(x)[..., 0].astype(np.float64),
    "ones_count": lambda x: np.asarray(x).sum(axis=-1).astype(np.float64),
    "zero": lambda x: np.zeros(np.asarray(x).shape[:-1]),
}


def _estimate_network(cfg, seed):
    if cfg["network"] == "reference":
        if cfg["n"] != 1:
            raise ConfigError("the reference network has n = 1")
        return NetworkParams([[0.0]], [np.log(3.0)])
    if cfg["network"] == "random":
        stream = UniformStream(seed).spawn(1)[0]
        n, r = cfg["n"], cfg["init_range"]
        w = (2.0 * stream.uniforms((n, n)) - 1.0) * r
        b = (2.0 * stream.uniforms(n) - 1.0) * r
        return NetworkParams(w, b)
    raise ConfigError(f"unknown network {cfg['network']!r}")


def estimate_csv(cfg, seed, with_oracle=False):
    """Run replicated SPMVD estimates and render the results as CSV text."""
    if cfg["cost"] not in _COSTS:
        raise ConfigError(f"unknown cost {cfg['cost']!r}")
    params = _estimate_network(cfg, seed)
    cost = _COSTS[cfg["cost"]]
    try:
        est_cfg = EstimatorConfig(
            m0=cfg["m0"], m1=cfg["m1"], include_t0=cfg["include_t0"],
            replications=cfg["replications"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    batch = replicate_spmvd(params, cost, None, est_cfg, UniformStream(seed))

    n = params.n
    coords = [f"w[{i}][{j}]" for i in range(n) for j in range(n)]
    coords += [f"b[{i}]" for i in range(n)]
    est_flat = np.concatenate(
        [batch.d_weights.reshape(batch.replications, -1), batch.d_biases], axis=1
    )
    dir_flat = np.concatenate(
        [batch.dir_weights.reshape(batch.replications, -1), batch.dir_biases], axis=1
    )
    oracle_col = None
    if with_oracle:
        if n > 12:
            raise ConfigError("--oracle requires n <= 12")
        dw, db = exact_gradient(params, cost)
        oracle_col = np.concatenate([dw.ravel(), db])

    header = "replication,coordinate,estimate,direction"
    lines = [header + (",oracle" if with_oracle else "")]
    for r in range(batch.replications):
        for k, coord in enumerate(coords):
            row = f"{r},{coord},{_fmt(est_flat[r, k])},{int(dir_flat[r, k])}"
            if with_oracle:
                row += f",{_fmt(oracle_col[k])}"
            lines.append(row)
    mean = est_flat.mean(axis=0)
    se = est_flat.std(axis=0, ddof=1) / np.sqrt(batch.replications)
    for k, coord in enumerate(coords):
        row = f"mean,{coord},{_fmt(mean[k])},"
        if with_oracle:
            row += f",{_fmt(oracle_col[k])}"
        lines.append(row)
    for k, coord in enumerate(coords):
        row = f"stderr,{coord},{_fmt(se[k])},"
        if with_oracle:
            row += ","
        lines.append(row)
    return "\n".join(lines) + "\n"


def _train_dataset(cfg, seed):
    kind = cfg["dataset"]
    if kind == "idx":
        if not cfg["idx_images"] or not cfg["idx_labels"]:
            raise ConfigError("dataset = idx requires idx_images and idx_labels")
        limit = cfg["idx_limit"] or None
        return load_idx(cfg["idx_images"], cfg["idx_labels"], limit)
    if kind in ("stripes", "parity"):
        return make_synthetic_dataset(
            kind, cfg["size"], UniformStream(seed).spawn(1)[0],
            n_input=cfg["n_input"], n_classes=cfg["n_output"],
            flip_prob=cfg["flip_prob"],
        )
    raise ConfigError(f"unknown dataset {kind!r}")


def train_csv(cfg, seed, m1):
    """Train with one m1 setting and render the trajectory as CSV text."""
    dataset = _train_dataset(cfg, seed)
    n_input = dataset[0].input_bits.size
    n_output = dataset[0].label_bits.size
    try:
        tc = TrainConfig(
            n_input=n_input, n_output=n_output, n_hidden=cfg["n_hidden"],
            step_size=cfg["step_size"], updates=cfg["updates"],
            report_every=cfg["report_every"], m0=cfg["m0"], m1=m1,
            include_t0=cfg["include_t0"], init_range=cfg["init_range"],
            seed=seed, eval_chains=cfg["eval_chains"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    traj = sgd_train(tc, dataset)
    lines = ["update,empirical_error"]
    lines += [f"{u},{_fmt(e)}" for u, e in zip(traj.updates, traj.errors)]
    return "\n".join(lines) + "\n"


def cmd_validate(args):
    results = run_all(args.scale)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def cmd_estimate(args):
    cfg = parse_config(args.config, ESTIMATE_SCHEMA)
    seed = args.seed if args.seed is not None else cfg["seed"]
    started = datetime.now(timezone.utc).isoformat()
    text = estimate_csv(cfg, seed, with_oracle=args.oracle)
    command = "estimate" + ("-oracle" if args.oracle else "")
    _write_with_manifest(args.out, text, command, cfg, seed, started)
    print(f"wrote {args.out} ({cfg['replications']} replications)")
    return 0


def cmd_train(args):
    cfg = parse_config(args.config, TRAIN_SCHEMA)
    seed = args.seed if args.seed is not None else cfg["seed"]
    sweep = cfg["m1"]
    out = Path(args.out)
    for m1 in sweep:
        path = out if len(sweep) == 1 else out.with_name(
            f"{out.stem}_m1_{m1}{out.suffix}"
        )
        started = datetime.now(timezone.utc).isoformat()
        one = dict(cfg)
        one["m1"] = (m1,)
        text = train_csv(cfg, seed, m1)
        _write_with_manifest(path, text, "train", one, seed, started)
        print(f"wrote {path}")
    return 0


def run_from_manifest(manifest_path, out_path):
    """Re-execute the run described by a manifest; writes a fresh CSV."""
    manifest = json.loads(Path(manifest_path).read_text())
    cfg = {
        k: (tuple(v) if isinstance(v, list) else v)
        for k, v in manifest["config"].items()
    }
    seed = manifest["seed"]
    command = manifest["command"]
    started = datetime.now(timezone.utc).isoformat()
    if command.startswith("estimate"):
        text = estimate_csv(cfg, seed, with_oracle=command.endswith("oracle"))
    elif command == "train":
        text = train_csv(cfg, seed, cfg["m1"][0])
    else:
        raise ConfigError(f"manifest command {command!r} not reproducible")
    _write_with_manifest(out_path, text, command, cfg, seed, started)
    return out_path


def build_parser():
    parser = argparse.ArgumentParser(
        prog="littlenet",
        description="Stochastic threshold networks and measure-valued gradient estimation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="run the verification suites")
    v.add_argument("--scale", choices=("small", "full"), default="small")
    v.set_defaults(func=cmd_validate)

    e = sub.add_parser("estimate", help="replicated gradient estimates to CSV")
    e.add_argument("--config", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--seed", type=int, default=None)
    e.add_argument("--oracle", action="store_true",
                   help="append exact-gradient columns (n <= 12)")
    e.set_defaults(func=cmd_estimate)

    t = sub.add_parser("train", help="gradient-descent training to CSV")
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int, default=None)
    t.set_defaults(func=cmd_train)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
