"""Command-line entry points: certify a dataset, emit bound curves, and
generate synthetic datasets with analytic ground truth.

Exit codes: 0 success, 2 configuration error, 3 oracle failure, 4 report
I/O failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from smoothcert.oracle import (
    LinearModel,
    LinearOracle,
    OracleEndpoint,
    OracleError,
    external_oracle,
    nearest_centroid_oracle,
)
from smoothcert.report import (
    SIGMA_PROFILES,
    DatasetFile,
    bound_curve,
    evaluate_dataset,
    load_dataset,
    save_dataset,
    write_bound_curve,
    write_report,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ORACLE = 3
EXIT_REPORT = 4


class ConfigError(Exception):
    pass


def load_linear_model(path) -> LinearModel:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ConfigError(f"model file {path}: first line must be 'K D'")
        k, d = int(header[0]), int(header[1])
        rows = []
        for _ in range(k):
            vals = [float(v) for v in fh.readline().split()]
            if len(vals) != d + 1:
                raise ConfigError(f"model file {path}: each row needs D+1 floats")
            rows.append(vals)
    arr = np.asarray(rows)
    return LinearModel(weights=arr[:, :d], bias=arr[:, d])


def save_linear_model(path, model: LinearModel) -> None:
    with open(path, "w") as fh:
        fh.write(f"{model.num_classes} {model.input_dim}\n")
        for row, b in zip(model.weights, model.bias):
            fh.write(" ".join(repr(float(v)) for v in row) + f" {float(b)!r}\n")


def load_centroids(path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ConfigError(f"centroid file {path}: first line must be 'K D'")
        k, d = int(header[0]), int(header[1])
        rows = []
        for _ in range(k):
            vals = [float(v) for v in fh.readline().split()]
            if len(vals) != d:
                raise ConfigError(f"centroid file {path}: each row needs D floats")
            rows.append(vals)
    return np.asarray(rows)


def save_centroids(path, centroids: np.ndarray) -> None:
    k, d = centroids.shape
    with open(path, "w") as fh:
        fh.write(f"{k} {d}\n")
        for row in centroids:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def build_oracle(spec: str):
    """Construct an oracle from a URI: linear:PATH, centroid:PATH, exec:CMD,
    or tcp:HOST:PORT."""
    if spec.startswith("linear:"):
        return LinearOracle(load_linear_model(spec[len("linear:"):]))
    if spec.startswith("centroid:"):
        return nearest_centroid_oracle(load_centroids(spec[len("centroid:"):]))
    if spec.startswith("exec:") or spec.startswith("tcp:"):
        return external_oracle(OracleEndpoint(transport=spec))
    raise ConfigError(f"unknown oracle spec {spec!r}")


def parse_radius_grid(text: str):
    try:
        grid = tuple(float(v) for v in text.split(",") if v.strip() != "")
    except ValueError as exc:
        raise ConfigError(f"bad radius grid {text!r}: {exc}") from exc
    if not grid:
        raise ConfigError("radius grid is empty")
    return grid


def parse_d_range(text: str):
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"d range must be start:stop:step, got {text!r}")
    try:
        start, stop, step = (int(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"bad d range {text!r}: {exc}") from exc
    if step < 1 or start < 2 or stop < start:
        raise ConfigError(f"bad d range {text!r}")
    values = list(range(start, stop + 1, step))
    if any(d % 2 for d in values):
        raise ConfigError("d range must contain only even dimensions (m = n = d/2)")
    return values


def out_paths(out: str) -> tuple[str, str]:
    if out.endswith(".csv"):
        return out, out[:-4] + ".json"
    return out + ".csv", out + ".json"


def cmd_certify(args) -> int:
    if (args.sigma is None) == (args.sigma_profile is None) and args.mode != "drs-asym":
        raise ConfigError("exactly one of --sigma or --sigma-profile is required")
    sigma = args.sigma
    if args.sigma_profile is not None:
        if args.sigma_profile not in SIGMA_PROFILES:
            raise ConfigError(
                f"unknown profile {args.sigma_profile!r}; choose from {sorted(SIGMA_PROFILES)}"
            )
        sigma = SIGMA_PROFILES[args.sigma_profile]
    sigma_r = None
    if args.mode == "drs-asym":
        if args.sigma_l is None or args.sigma_r is None:
            raise ConfigError("--mode drs-asym requires --sigma-l and --sigma-r")
        sigma, sigma_r = args.sigma_l, args.sigma_r
    elif sigma is None:
        raise ConfigError("--sigma is required")

    dataset = load_dataset(args.dataset)
    oracle = build_oracle(args.oracle)
    oracle_right = build_oracle(args.oracle_right) if args.oracle_right else None
    try:
        report = evaluate_dataset(
            oracle,
            oracle_right,
            dataset,
            mode=args.mode,
            sigma=sigma,
            sigma_r=sigma_r,
            n0=args.n0,
            n=args.n,
            alpha=args.alpha,
            seed=args.seed,
            stride=args.stride,
            radius_grid=parse_radius_grid(args.radius_grid),
            interp=args.interp,
            workers=args.workers,
            timing=args.timing,
        )
    finally:
        oracle.close()
        if oracle_right is not None:
            oracle_right.close()
    csv_path, json_path = out_paths(args.out)
    try:
        write_report(report.rows, report.summary, csv_path, json_path)
    except OSError as exc:
        print(f"error: cannot write report: {exc}", file=sys.stderr)
        return EXIT_REPORT
    return EXIT_OK


def cmd_bounds(args) -> int:
    points = bound_curve(parse_d_range(args.d_range), p=args.p, sigma_rule=args.sigma_rule)
    try:
        write_bound_curve(points, args.out)
    except OSError as exc:
        print(f"error: cannot write bound curve: {exc}", file=sys.stderr)
        return EXIT_REPORT
    return EXIT_OK


def cmd_gen_synthetic(args) -> int:
    if args.count < 1:
        raise ConfigError("--count must be >= 1")
    if args.d < 2:
        raise ConfigError("--d must be >= 2")
    rng = np.random.default_rng(args.seed)
    # lay the flat dimension out as a 2-row image with an even number of
    # columns, so the diagonal split halves it with no padding
    if args.d % 4:
        raise ConfigError("--d must be divisible by 4")
    h, w = 2, args.d // 2
    data = rng.uniform(0.0, 1.0, size=(args.count, 1, h, w)).astype(np.float64)

    if args.kind == "linear-margin":
        model = LinearModel(
            weights=rng.normal(size=(args.classes, args.d)),
            bias=rng.normal(size=args.classes) * 0.1,
        )
        labels = np.argmax(data.reshape(args.count, -1) @ model.weights.T + model.bias, axis=1)
        save_linear_model(args.out + ".model", model)
    elif args.kind == "gaussian-blobs":
        centroids = rng.uniform(0.3, 0.7, size=(args.classes, args.d))
        labels = rng.integers(0, args.classes, size=args.count)
        spread = 0.08
        data = centroids[labels].reshape(args.count, 1, h, w) + rng.normal(
            scale=spread, size=(args.count, 1, h, w)
        )
        data = np.clip(data, 0.0, 1.0)
        save_centroids(args.out + ".model", centroids)
    else:
        raise ConfigError(f"unknown kind {args.kind!r}")

    save_dataset(args.out, DatasetFile(data=data, labels=labels.astype(np.int64)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="smoothcert")
    sub = ap.add_subparsers(dest="command", required=True)

    cert = sub.add_parser("certify", help="certify a dataset and write reports")
    cert.add_argument("--mode", choices=["rs", "drs", "drs-asym"], default="drs")
    cert.add_argument("--sigma", type=float, default=None)
    cert.add_argument("--sigma-profile", default=None,
                      help=f"named noise preset: {sorted(SIGMA_PROFILES)}")
    cert.add_argument("--sigma-l", type=float, default=None)
    cert.add_argument("--sigma-r", type=float, default=None)
    cert.add_argument("--n0", type=int, default=100)
    cert.add_argument("--n", type=int, default=100_000)
    cert.add_argument("--alpha", type=float, default=0.001)
    cert.add_argument("--seed", type=int, default=0)
    cert.add_argument("--stride", type=int, default=1)
    cert.add_argument("--dataset", required=True)
    cert.add_argument("--oracle", required=True,
                      help="linear:PATH | centroid:PATH | exec:CMD | tcp:HOST:PORT")
    cert.add_argument("--oracle-right", default=None,
                      help="optional distinct oracle for the right branch")
    cert.add_argument("--out", required=True)
    cert.add_argument("--interp", choices=["bilinear", "nearest"], default="bilinear")
    cert.add_argument("--radius-grid", default="0.0,0.25,0.5,0.75,1.0,1.25,1.5,2.0")
    cert.add_argument("--workers", type=int, default=None)
    cert.add_argument("--timing", action="store_true",
                      help="record wall-clock per sample (breaks byte-identical reruns)")
    cert.set_defaults(func=cmd_certify)

    bounds = sub.add_parser("bounds", help="emit the radius upper-bound curve CSV")
    bounds.add_argument("--d-range", default="2:4096:2")
    bounds.add_argument("--p", type=float, default=0.999)
    bounds.add_argument("--sigma-rule", default="one-over-sqrt-d",
                        help="one-over-sqrt-d | fixed:VALUE")
    bounds.add_argument("--out", required=True)
    bounds.set_defaults(func=cmd_bounds)

    gen = sub.add_parser("gen-synthetic", help="generate a synthetic dataset + model")
    gen.add_argument("--kind", choices=["gaussian-blobs", "linear-margin"], required=True)
    gen.add_argument("--d", type=int, required=True)
    gen.add_argument("--classes", type=int, default=2)
    gen.add_argument("--count", type=int, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_gen_synthetic)

    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OracleError as exc:
        print(f"oracle failure: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
