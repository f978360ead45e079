"""Command-line entry point.

Subcommands: gen, segment, pointcloud, unsup, oracle, report.  Every run is
reproducible from its --seed plus the config echo written to the output
directory.  Errors map to exit codes: 1 configuration, 2 data,
3 solver/spectral non-convergence, 4 infeasible sizes.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import datasets, evaluation, regions, unsupervised
from .config import load_config, merge, parse_value, write_config
from .errors import ConfigError, DataError, GraphsegError
from .graph import WeightSpec, boost_supervised_edges, build_knn_graph, \
    pointcloud_weights
from .presets import preset
from .solver import SizeSpec, SolverParams, assemble_costs, \
    brute_force_oracle, read_labels_csv, solve, write_labels_csv, \
    write_trace_csv


def _threads(args) -> int:
    if getattr(args, "deterministic", False):
        return 1
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("GRAPHSEG_THREADS")
    return int(env) if env else 1


def _out_dir(args) -> str:
    out = args.out_dir
    os.makedirs(out, exist_ok=True)
    return out


def _layered_config(args, flag_map: dict) -> dict:
    """preset < config file < explicit flags."""
    layers = []
    if getattr(args, "preset", None):
        layers.append(preset(args.preset))
    if getattr(args, "config", None):
        layers.append(load_config(args.config))
    layers.append({k: v for k, v in flag_map.items() if v is not None})
    return merge(*layers)


def _weight_spec(cfg) -> WeightSpec:
    kind = cfg.get("weight.kind", "gaussian")
    if kind == "gaussian":
        if "weight.sigma" not in cfg:
            raise ConfigError("gaussian weights need weight.sigma")
        return WeightSpec.gaussian(float(cfg["weight.sigma"]))
    if kind == "zmp":
        M = cfg.get("weight.M", cfg.get("graph.k"))
        if M is None:
            raise ConfigError("zmp weights need weight.M")
        return WeightSpec.zmp(int(M))
    if kind == "pointcloud":
        sigma = cfg.get("weight.sigma", 1.0)
        return WeightSpec.pointcloud(float(sigma),
                                     float(cfg.get("weight.gamma_conv", 0.0)))
    raise ConfigError(f"unknown weight kind {kind!r}")


def _as_size_list(v):
    if isinstance(v, str):
        v = parse_value(v)
    if isinstance(v, (int, float)):
        return [v]
    return v


def _size_spec(cfg) -> SizeSpec:
    mode = cfg.get("size.mode", "none")
    if mode == "none":
        return SizeSpec.none()
    lower = cfg.get("size.lower")
    upper = cfg.get("size.upper")
    as_list = _as_size_list
    if mode == "exact":
        if lower is None:
            raise ConfigError("size.mode=exact needs size.lower")
        return SizeSpec.exact(as_list(lower))
    if mode == "interval":
        if lower is None or upper is None:
            raise ConfigError("size.mode=interval needs size.lower and size.upper")
        return SizeSpec.interval(as_list(lower), as_list(upper))
    if mode == "penalty":
        gamma = cfg.get("size.gamma")
        if lower is None or upper is None or gamma is None:
            raise ConfigError("size.mode=penalty needs lower, upper and gamma")
        return SizeSpec.penalty(as_list(lower), as_list(upper), float(gamma))
    raise ConfigError(f"unknown size.mode {mode!r}")


def _solver_params(cfg) -> SolverParams:
    return SolverParams(
        c=float(cfg.get("solver.c", 0.1)),
        delta=float(cfg.get("solver.delta", 1e-10)),
        max_iters=int(cfg.get("solver.max_iters", 10000)),
        inner_q_steps=int(cfg.get("solver.inner_q_steps", 1)),
        record_trace=bool(cfg.get("solver.trace", True)),
        trace_every=int(cfg.get("solver.trace_every", 1)),
    )


def _load_truth(path):
    return None if path is None else read_labels_csv(path)


def _write_outputs(out, result, truth, g, cfg, trace=False):
    write_labels_csv(result.labels, os.path.join(out, "labels.csv"))
    rep = evaluation.report(result, truth, g)
    evaluation.write_report_txt(rep, os.path.join(out, "report.txt"))
    evaluation.write_report_csv(rep, os.path.join(out, "report.csv"))
    if trace and result.trace["iter"].size:
        write_trace_csv(result.trace, os.path.join(out, "trace.csv"))
    write_config(cfg, os.path.join(out, "config.txt"))
    return rep


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    out = _out_dir(args)
    if args.dataset == "three-moons":
        noise = 0.14 if args.noise is None else args.noise
        ds = datasets.three_moons(args.n_per_class, args.dims, noise,
                                  args.seed)
    elif args.dataset == "two-moons":
        noise = 0.08 if args.noise is None else args.noise
        ds = datasets.two_moons(args.n_per_class, args.dims, noise,
                                args.seed)
    elif args.dataset == "scene":
        ds = datasets.synth_scene(datasets.SceneSpec(), args.n_points,
                                  seed=args.seed)
        datasets.write_xyz(ds.features, os.path.join(out, "points.xyz"))
    else:
        raise ConfigError(f"unknown dataset {args.dataset!r}")

    datasets.write_features_csv(ds.features, os.path.join(out, "features.csv"))
    write_labels_csv(ds.labels, os.path.join(out, "labels.csv"))
    if args.supervised is not None:
        nodes = datasets.sample_supervision(ds, args.supervised, seed=args.seed)
        with open(os.path.join(out, "supervised.csv"), "w") as fh:
            fh.write("node_index,label\n")
            for x in nodes:
                fh.write(f"{x},{ds.labels[x]}\n")
    print(f"wrote {ds.n_nodes} points to {out}")
    return 0


def _read_supervised_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
    return {int(r[0]): int(r[1]) for r in data}


# ---------------------------------------------------------------------------
# segment
# ---------------------------------------------------------------------------

def cmd_segment(args) -> int:
    out = _out_dir(args)
    cfg = _layered_config(args, {
        "graph.k": args.k, "weight.kind": args.weight, "weight.M": args.M,
        "weight.sigma": args.sigma, "solver.c": args.c,
        "solver.eta": args.eta, "solver.delta": args.delta,
        "solver.max_iters": args.max_iters, "size.mode": args.size_mode,
        "size.lower": args.size_lower, "size.upper": args.size_upper,
        "size.gamma": args.size_gamma, "supervision.boost": args.boost,
    })
    features = datasets.read_features_csv(args.features)
    truth = _load_truth(args.labels)

    if args.supervised_file:
        supervised = _read_supervised_csv(args.supervised_file)
    elif args.supervised is not None:
        if truth is None:
            raise ConfigError("--supervised FRACTION needs --labels")
        ds = datasets.Dataset(features, truth)
        nodes = datasets.sample_supervision(ds, args.supervised,
                                            seed=args.seed)
        supervised = datasets.supervision_dict(ds, nodes)
    else:
        raise ConfigError("segment needs --supervised-file or --supervised")

    n_classes = args.classes or (int(truth.max()) if truth is not None
                                 else max(supervised.values()))
    g = build_knn_graph(features, int(cfg.get("graph.k", 10)),
                        _weight_spec(cfg), workers=_threads(args))
    boost = int(cfg.get("supervision.boost", 1))
    if boost > 1:
        g = boost_supervised_edges(g, list(supervised), boost)

    costs = assemble_costs(supervised, float(cfg.get("solver.eta", 500.0)),
                           n_nodes=g.n_nodes, n_classes=n_classes)
    t0 = time.time()
    result = solve(g, costs, _size_spec(cfg), _solver_params(cfg))
    rep = _write_outputs(out, result, truth, g, cfg, trace=args.trace)
    print(f"segment: {result.iterations} iterations "
          f"({time.time() - t0:.2f}s), converged={result.converged}, "
          f"accuracy={rep.accuracy:.4f}" if truth is not None else
          f"segment: {result.iterations} iterations, "
          f"converged={result.converged}")
    return 0


# ---------------------------------------------------------------------------
# pointcloud
# ---------------------------------------------------------------------------

def cmd_pointcloud(args) -> int:
    out = _out_dir(args)
    cfg = _layered_config(args, {
        "graph.k": args.k, "weight.sigma": args.sigma,
        "weight.gamma_conv": args.gamma_conv, "weight.max": args.max_weight,
        "solver.c": args.c,
        "solver.delta": args.delta, "solver.max_iters": args.max_iters,
        "region.c_mix": args.c_mix, "region.theta": args.theta,
        "region.weight": args.region_weight,
        "region.lambda_g": args.lambda_g, "region.lambda_h": args.lambda_h,
        "region.lambda_v": args.lambda_v,
    })
    points = datasets.read_xyz(args.xyz)
    truth = _load_truth(args.labels)
    k = int(cfg.get("graph.k", 20))

    g = build_knn_graph(points, k, WeightSpec.gaussian(1.0),
                        workers=_threads(args))
    dbar = regions.mean_neighbor_distance(g)
    sigma = cfg.get("weight.sigma", "auto")
    sigma = 2.0 * dbar if sigma in ("auto", None) else float(sigma)
    cfg["weight.sigma"] = sigma

    geom = regions.local_pca(points, g)
    base = 0.002 * dbar * dbar
    rcfg = regions.RegionTermConfig(
        lambda_g=float(cfg.get("region.lambda_g", base)),
        lambda_h=float(cfg.get("region.lambda_h", base)),
        lambda_v=float(cfg.get("region.lambda_v", 10 * base)),
        c_mix=float(cfg.get("region.c_mix", 0.1)),
        theta=float(cfg.get("region.theta", 1.0)),
    )
    classes = tuple(args.classes.split(","))
    region = regions.class_region_terms(geom, rcfg, classes)
    region = region * float(cfg.get("region.weight", 1.0))

    g = pointcloud_weights(g, points, geom.v1, sigma,
                           float(cfg.get("weight.gamma_conv", 0.0)),
                           max_weight=float(cfg.get("weight.max", np.inf)))
    costs = assemble_costs(region=region)
    result = solve(g, costs, params=_solver_params(cfg))

    rep = _write_outputs(out, result, truth, g, cfg, trace=args.trace)
    regions.write_feature_csv(points, geom, os.path.join(out, "features.csv"))
    with open(os.path.join(out, "labeled.xyz"), "w") as fh:
        for p, lab in zip(points, result.labels):
            fh.write(f"{p[0]:.8g} {p[1]:.8g} {p[2]:.8g} {lab}\n")
    msg = f"pointcloud: {result.iterations} iterations, sizes=" \
          f"{','.join(str(int(s)) for s in rep.class_sizes)}"
    if truth is not None:
        msg += f", accuracy={rep.accuracy:.4f}"
    print(msg)
    return 0


# ---------------------------------------------------------------------------
# unsup
# ---------------------------------------------------------------------------

def cmd_unsup(args) -> int:
    out = _out_dir(args)
    cfg = _layered_config(args, {
        "graph.k": args.k, "weight.kind": args.weight, "weight.M": args.M,
        "weight.sigma": args.sigma, "solver.c": args.c,
        "solver.delta": args.delta, "solver.max_iters": args.max_iters,
        "unsup.alpha": args.alpha, "unsup.p": args.p,
        "unsup.outer_iters": args.outer_iters,
        "unsup.laplacian": args.laplacian,
    })
    features = datasets.read_features_csv(args.features)
    truth = _load_truth(args.labels)
    g = build_knn_graph(features, int(cfg.get("graph.k", 10)),
                        _weight_spec(cfg), workers=_threads(args))

    norm = {"rw": "random_walk", "unnorm": "unnormalized"}.get(
        cfg.get("unsup.laplacian", "random_walk"),
        cfg.get("unsup.laplacian", "random_walk"))
    field = unsupervised.second_eigenvector(g, norm, seed=args.seed)
    if not field.connected:
        print("warning: graph is disconnected; eigenvector separates "
              "components", file=sys.stderr)

    ures = unsupervised.alternating_segmentation(
        g, field.phi, float(cfg.get("unsup.alpha", 500.0)),
        params=_solver_params(cfg),
        max_outer=int(cfg.get("unsup.outer_iters", 20)),
        p_exp=int(cfg.get("unsup.p", 2)))

    write_labels_csv(ures.labels, os.path.join(out, "labels.csv"))
    np.savetxt(os.path.join(out, "phi.csv"), field.phi, fmt="%.17g")
    rep = evaluation.report(ures.result, None, g)
    if truth is not None:
        rep.accuracy = evaluation.accuracy(ures.labels, truth, permute=True)
    evaluation.write_report_txt(rep, os.path.join(out, "report.txt"))
    evaluation.write_report_csv(rep, os.path.join(out, "report.csv"))
    write_config(cfg, os.path.join(out, "config.txt"))
    msg = (f"unsup: {ures.outer_iterations} outer iterations, "
           f"centroids=({ures.c1:.4f},{ures.c2:.4f})")
    if truth is not None:
        msg += f", accuracy={rep.accuracy:.4f}"
    print(msg)
    return 0


# ---------------------------------------------------------------------------
# oracle / report
# ---------------------------------------------------------------------------

def cmd_oracle(args) -> int:
    out = _out_dir(args)
    features = datasets.read_features_csv(args.features)
    supervised = _read_supervised_csv(args.supervised_file)
    n_classes = args.classes or max(supervised.values())
    cfg = _layered_config(args, {
        "graph.k": args.k, "weight.kind": args.weight,
        "weight.sigma": args.sigma, "weight.M": args.M,
        "size.mode": args.size_mode, "size.lower": args.size_lower,
        "size.upper": args.size_upper, "size.gamma": args.size_gamma,
    })
    g = build_knn_graph(features, int(cfg.get("graph.k", 2)), _weight_spec(cfg))
    costs = assemble_costs(supervised, float(args.eta),
                           n_nodes=g.n_nodes, n_classes=n_classes)
    labels, energy = brute_force_oracle(g, costs, _size_spec(cfg))
    write_labels_csv(labels, os.path.join(out, "labels.csv"))
    with open(os.path.join(out, "energy.txt"), "w") as fh:
        fh.write("%.17g\n" % energy)
    print(f"oracle: energy {energy:.10g}")
    return 0


def cmd_report(args) -> int:
    labels = read_labels_csv(args.predicted)
    truth = read_labels_csv(args.truth)
    acc = evaluation.accuracy(labels, truth, permute=args.permute)
    per = evaluation.per_class_accuracy(labels, truth)
    print(f"accuracy {acc:.6f}")
    for i, a in enumerate(per, start=1):
        print(f"class {i} recall {a:.6f}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--config", default=None, help="key = value file")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default $GRAPHSEG_THREADS or 1)")
    p.add_argument("--deterministic", action="store_true",
                   help="force sequential execution")


def _add_graph_flags(p, default_weight=None):
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--weight", choices=["gaussian", "zmp"],
                   default=default_weight)
    p.add_argument("--M", type=int, default=None)
    p.add_argument("--sigma", type=float, default=None)


def _add_solver_flags(p):
    p.add_argument("--c", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--trace", action="store_true",
                   help="write per-iteration trace.csv")


def _add_size_flags(p):
    p.add_argument("--size-mode",
                   choices=["none", "exact", "interval", "penalty"],
                   default=None)
    p.add_argument("--size-lower", default=None,
                   help="comma list of per-class lower bounds / exact sizes")
    p.add_argument("--size-upper", default=None)
    p.add_argument("--size-gamma", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="graphseg",
        description="Convex multiclass segmentation on weighted graphs")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate synthetic datasets")
    p.add_argument("dataset", choices=["three-moons", "two-moons", "scene"])
    p.add_argument("--n-per-class", type=int, default=1000)
    p.add_argument("--dims", type=int, default=100)
    p.add_argument("--noise", type=float, default=None,
                   help="noise std (default 0.14 three-moons, 0.08 two-moons)")
    p.add_argument("--n-points", type=int, default=20000)
    p.add_argument("--supervised", type=float, default=None,
                   help="also sample this supervision fraction")
    _add_common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("segment", help="semi-supervised segmentation")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", default=None, help="ground-truth labels CSV")
    p.add_argument("--supervised", type=float, default=None,
                   help="supervision fraction (stratified, needs --labels)")
    p.add_argument("--supervised-file", default=None,
                   help="CSV node_index,label of supervised nodes")
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--preset", default=None)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--boost", type=int, default=None,
                   help="supervised neighborhood widening factor")
    _add_graph_flags(p)
    _add_solver_flags(p)
    _add_size_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("pointcloud", help="3D cloud with region terms")
    p.add_argument("--xyz", required=True, help="whitespace XYZ text file")
    p.add_argument("--labels", default=None)
    p.add_argument("--preset", default=None)
    p.add_argument("--classes", default="ground,human,vegetation")
    p.add_argument("--gamma-conv", type=float, default=None)
    p.add_argument("--max-weight", type=float, default=None,
                   help="clip convexity-boosted weights at this value")
    p.add_argument("--c-mix", type=float, default=None)
    p.add_argument("--theta", type=float, default=None)
    p.add_argument("--region-weight", type=float, default=None)
    p.add_argument("--lambda-g", type=float, default=None)
    p.add_argument("--lambda-h", type=float, default=None)
    p.add_argument("--lambda-v", type=float, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--sigma", default=None,
                   help="Gaussian scale, or 'auto' (2x mean NN distance)")
    _add_solver_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_pointcloud)

    p = sub.add_parser("unsup", help="unsupervised two-class segmentation")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", default=None)
    p.add_argument("--preset", default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--p", type=int, choices=[1, 2], default=None)
    p.add_argument("--outer-iters", type=int, default=None)
    p.add_argument("--laplacian", choices=["rw", "unnorm"], default=None)
    _add_graph_flags(p, default_weight=None)
    _add_solver_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_unsup)

    p = sub.add_parser("oracle", help="exhaustive optimum on tiny instances")
    p.add_argument("--features", required=True)
    p.add_argument("--supervised-file", required=True)
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--eta", type=float, default=500.0)
    _add_graph_flags(p, default_weight="gaussian")
    _add_size_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("report", help="accuracy of a stored labeling")
    p.add_argument("--predicted", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--permute", action="store_true")
    p.set_defaults(func=cmd_report)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except GraphsegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
