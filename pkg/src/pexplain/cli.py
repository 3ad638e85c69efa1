"""Command-line driver.

Subcommands: probe-train, explain, shapley, eval-aopc, ablate, bench,
bench-backend. Exit codes: 0 success, 1 validation error (bad flags,
malformed or invariant-violating files), 2 I/O error (missing or
unreadable paths).

Option precedence: explicit flag > --config JSON file > built-in default.
PE_SEED in the environment overrides the default seed.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
import zlib
from pathlib import Path

import numpy as np

from . import evaluation, fileio, hierarchy, kernels, probes
from .attribution import (ToyOracle, exact_shapley, full_mask, mc_shapley,
                          occlusion)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2


class _UsageError(SystemExit):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise _UsageError(EXIT_VALIDATION)


def _default_seed() -> int:
    env = os.environ.get("PE_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ValueError(f"PE_SEED must be an integer, got {env!r}")
    return 0


def _resolve(args, config, key, default):
    val = getattr(args, key.replace("-", "_"), None)
    if val is not None:
        return val
    if key in config:
        return config[key]
    return default


def _load_config(args) -> dict:
    path = getattr(args, "config", None)
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict):
        raise fileio.FormatError(path, "top level", "config must be an object")
    return obj


def _parse_int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ValueError(f"expected comma-separated integers, got {text!r}")


def _parse_float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ValueError(f"expected comma-separated numbers, got {text!r}")


def deterministic_toy_oracle(example_id: str, n: int, seed: int,
                             strategy: str = "del") -> ToyOracle:
    """Per-example toy classifier derived stably from (seed, example id)."""
    key = zlib.crc32(example_id.encode("utf-8"))
    rng = np.random.default_rng([seed, key, n])
    weights = rng.normal(0.0, 1.5 / np.sqrt(n), n)
    pairs = []
    for _ in range(max(1, n // 3)):
        i, j = rng.choice(n, size=2, replace=False)
        pairs.append((int(i), int(j), float(rng.normal(0.0, 0.3))))
    return ToyOracle(weights, pairs, strategy)


def _oracle_for(record, kind: str, cache_dir, seed: int, strategy: str):
    if kind == "toy":
        oracle = deterministic_toy_oracle(record.id, record.n, seed, strategy)
    elif kind == "cache":
        if cache_dir is None:
            raise ValueError("--oracle cache requires --cache DIR")
        oracle = fileio.load_cache(Path(cache_dir) / f"{record.id}.cache.json")
        if oracle.n != record.n:
            raise ValueError(
                f"cache for {record.id} has {oracle.n} tokens, record {record.n}")
    else:
        raise ValueError(f"unknown oracle kind {kind!r}")
    got = oracle.query(full_mask(record.n))
    if abs(got - record.predicted_prob) > 1e-6:
        raise ValueError(
            f"{record.id}: oracle full-mask prob {got:.8f} != stored "
            f"{record.predicted_prob:.8f}")
    return oracle


def _load_probes(probes_dir):
    probes_dir = Path(probes_dir)
    sem = fileio.load_probe(probes_dir / "semantic.json")
    syn = fileio.load_probe(probes_dir / "syntax.json")
    if not isinstance(sem, probes.SemanticProbe):
        raise ValueError(f"{probes_dir}/semantic.json is not a semantic probe")
    if not isinstance(syn, probes.SyntaxProbe):
        raise ValueError(f"{probes_dir}/syntax.json is not a syntax probe")
    return sem, syn


def _gather_examples(data_path, emb_dir, oracle_kind, cache_dir, seed,
                     strategy):
    records = fileio.load_dataset(data_path)
    out = []
    for rec in records:
        p = Path(emb_dir) / f"{rec.id}.emb"
        _, toks = fileio.load_embeddings(p)
        if toks.shape[0] != rec.n:
            raise fileio.FormatError(p, "byte 8",
                                     f"{toks.shape[0]} rows != {rec.n} tokens")
        oracle = _oracle_for(rec, oracle_kind, cache_dir, seed, strategy)
        out.append((rec, toks, oracle))
    return out


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def _cmd_probe_train(args):
    config = _load_config(args)
    kind = args.kind
    seed = int(_resolve(args, config, "seed", _default_seed()))
    lr = float(_resolve(args, config, "lr", 1e-3))
    d_out = int(_resolve(args, config, "dim", 64))
    batch = int(_resolve(args, config, "batch", 32))
    epochs = int(_resolve(args, config, "epochs", 5 if kind == "semantic" else 40))
    cfg = probes.TrainConfig(epochs=epochs, lr=lr, batch_size=batch,
                             seed=seed, d_out=d_out)
    if kind == "semantic":
        probe, log = probes.train_semantic(args.data, cfg)
    else:
        probe, log = probes.train_syntax(args.data, cfg)
    fileio.save_probe(probe, args.out)
    for epoch, loss in enumerate(log, start=1):
        print(f"epoch {epoch}: loss {loss:.6f}")
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_explain(args):
    config = _load_config(args)
    seed = int(_resolve(args, config, "seed", _default_seed()))
    alpha1 = float(_resolve(args, config, "alpha1", 0.0))
    alpha2 = float(_resolve(args, config, "alpha2", 0.0))
    strategy = _resolve(args, config, "strategy", "del")
    sem, syn = _load_probes(args.probes)
    rows = _gather_examples(args.data, args.embeddings, args.oracle,
                            args.cache, seed, strategy)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    dot_dir = None
    if args.dot is not None:
        dot_dir = Path(args.dot)
        dot_dir.mkdir(parents=True, exist_ok=True)
    for rec, toks, oracle in rows:
        points = probes.embed_tokens(sem.matrix, toks)
        depths = kernels.dist_to_origin(probes.embed_tokens(syn.matrix, toks))
        res = hierarchy.build_pe_tree(points, depths, oracle, alpha1, alpha2)
        text = fileio.export_tree(res.tree, "json", rec.id, alpha1, alpha2)
        (out_dir / f"{rec.id}.json").write_text(text, encoding="utf-8")
        if dot_dir is not None:
            dot = fileio.export_tree(res.tree, "dot", rec.id, alpha1, alpha2)
            (dot_dir / f"{rec.id}.dot").write_text(dot, encoding="utf-8")
        print(f"{rec.id}: {rec.n} tokens, {len(res.tree.merges)} merges, "
              f"{res.stats.seconds:.4f}s")
    return EXIT_OK


def _make_shapley_oracle(args, seed):
    if args.oracle == "cache":
        if args.cache is None:
            raise ValueError("--oracle cache requires --cache FILE")
        return fileio.load_cache(args.cache)
    if args.weights is None:
        raise ValueError("--oracle toy requires --weights")
    weights = _parse_float_list(args.weights)
    pairs = []
    if args.interactions:
        for chunk in args.interactions.split(";"):
            if not chunk.strip():
                continue
            i, j, b = chunk.split(",")
            pairs.append((int(i), int(j), float(b)))
    return ToyOracle(weights, pairs)


def _cmd_shapley(args):
    config = _load_config(args)
    seed = int(_resolve(args, config, "seed", _default_seed()))
    samples = int(_resolve(args, config, "samples", 2000))
    oracle = _make_shapley_oracle(args, seed)
    if args.mode == "exact":
        result = exact_shapley(oracle)
        payload = {"mode": "exact", "values": result.values.tolist()}
    elif args.mode == "mc":
        result = mc_shapley(oracle, samples, seed)
        payload = {"mode": "mc", "samples": samples, "seed": seed,
                   "values": result.values.tolist()}
    else:
        if args.coalition is None:
            raise ValueError("--mode occlusion requires --coalition")
        coalition = _parse_int_list(args.coalition)
        payload = {"mode": "occlusion", "coalition": coalition,
                   "value": occlusion(oracle, coalition)}
    print(json.dumps(payload, sort_keys=True))
    return EXIT_OK


def _report_outputs(report, out_prefix, meta):
    obj = dict(meta)
    obj.update(report.as_dict())
    json_path = Path(str(out_prefix) + ".json")
    csv_path = Path(str(out_prefix) + ".csv")
    json_path.parent.mkdir(parents=True, exist_ok=True)
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")
    lines = ["example_id,n,k_percent,drop,seconds"]
    for ex in report.per_example:
        for k in sorted(ex.drops):
            lines.append(f"{ex.example_id},{ex.n},{k:g},{ex.drops[k]!r},"
                         f"{ex.seconds:.6f}")
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return json_path, csv_path


def _run_aopc(args, mode):
    config = _load_config(args)
    seed = int(_resolve(args, config, "seed", _default_seed()))
    beta1 = float(_resolve(args, config, "beta1", 0.0))
    beta2 = float(_resolve(args, config, "beta2", 0.0))
    strategy = _resolve(args, config, "strategy", "del")
    k_percents = tuple(_parse_float_list(
        _resolve(args, config, "k", "10,20")))
    cfg = evaluation.ScoreConfig(beta1=beta1, beta2=beta2, strategy=strategy,
                                 k_percents=k_percents)
    sem, syn = _load_probes(args.probes)
    rows = _gather_examples(args.data, args.embeddings, args.oracle,
                            args.cache, seed, strategy)
    examples = [(rec.id, toks, rec.predicted_label, oracle)
                for rec, toks, oracle in rows]
    report = evaluation.ablate(mode, examples, sem, syn, cfg)
    meta = {"mode": mode, "beta1": beta1, "beta2": beta2,
            "strategy": strategy, "seed": seed}
    json_path, csv_path = _report_outputs(report, args.out, meta)
    print(f"AOPC ({mode}): " +
          " ".join(f"{k:g}%={v:.4f}" for k, v in report.per_k.items()) +
          f" avg={report.average:.4f}")
    print(f"wrote {json_path} and {csv_path}")
    return EXIT_OK


def _cmd_eval_aopc(args):
    return _run_aopc(args, "full")


def _cmd_ablate(args):
    return _run_aopc(args, args.mode)


def _cmd_bench(args):
    config = _load_config(args)
    seed = int(_resolve(args, config, "seed", _default_seed()))
    reps = int(_resolve(args, config, "reps", 3))
    ns = _parse_int_list(args.n)
    report = evaluation.bench(args.method, ns, reps, seed)
    csv = evaluation.bench_csv(report)
    if args.out:
        Path(args.out).write_text(csv, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(csv)
    print(f"method={report.method} backend={report.backend} "
          f"count_slope={report.count_slope:.3f} "
          f"time_slope={report.time_slope:.3f} "
          f"ci=({report.time_slope_ci[0]:.3f},{report.time_slope_ci[1]:.3f})")
    return EXIT_OK


def _cmd_bench_backend(args):
    ns = _parse_int_list(args.n)
    reps = int(args.reps)
    rng = np.random.default_rng(0)
    variants = {"numpy": kernels.NUMPY_KERNELS}
    if kernels.HAVE_NUMBA:
        variants["numba"] = kernels.build_numba_kernels()
    rows = ["kernel,n,backend,seconds"]
    results = {}
    for n in ns:
        P = rng.normal(0.0, 0.2, (n, 8))
        T = np.abs(rng.normal(2.0, 1.0, (n, n)))
        T = (T + T.T) / 2.0
        DEP = np.abs(rng.normal(1.0, 0.5, n))
        wsum = rng.normal(0.0, 0.1, n)
        tsum = np.abs(rng.normal(0.0, 0.1, n))
        xmat = np.zeros((n, n))
        for name, impl in variants.items():
            cases = {
                "dist_matrix": lambda f=impl["dist_matrix"]: f(P),
                "syntax_terms": lambda f=impl["syntax_terms"]:
                    f(P, T, DEP, 1.0 / n ** 2, 1.0 / n),
                "toy_weight_matrix": lambda f=impl["toy_weight_matrix"]:
                    f(wsum, tsum, xmat, P, DEP, 0.5, 0.3, 0.3),
            }
            for kernel_name, call in cases.items():
                call()  # warm up / JIT compile
                t0 = time.perf_counter()
                for _ in range(reps):
                    call()
                dt = (time.perf_counter() - t0) / reps
                rows.append(f"{kernel_name},{n},{name},{dt:.6f}")
                results[(kernel_name, n, name)] = dt
    if kernels.HAVE_NUMBA:
        for (kname, n, backend), dt in sorted(results.items()):
            if backend == "numpy":
                nb = results[(kname, n, "numba")]
                print(f"{kname} n={n}: numpy {dt:.6f}s numba {nb:.6f}s "
                      f"speedup {dt / max(nb, 1e-12):.1f}x")
    csv = "\n".join(rows) + "\n"
    if args.out:
        Path(args.out).write_text(csv, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(csv)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="pe", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int)

    p = sub.add_parser("probe-train", help="train a probe from files")
    add_common(p)
    p.add_argument("--kind", choices=("semantic", "syntax"), required=True)
    p.add_argument("--data", required=True,
                   help="directory with dataset.jsonl, embeddings/, parses.conllu")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--dim", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_probe_train)

    p = sub.add_parser("explain", help="build attribution trees")
    add_common(p)
    p.add_argument("--data", required=True, help="dataset.jsonl path")
    p.add_argument("--embeddings", required=True, help="directory of .emb files")
    p.add_argument("--probes", required=True,
                   help="directory with semantic.json and syntax.json")
    p.add_argument("--oracle", choices=("toy", "cache"), default="toy")
    p.add_argument("--cache", help="directory of <id>.cache.json files")
    p.add_argument("--alpha1", type=float)
    p.add_argument("--alpha2", type=float)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--dot", help="also write DOT files to this directory")
    p.set_defaults(func=_cmd_explain)

    p = sub.add_parser("shapley", help="token contributions for one oracle")
    add_common(p)
    p.add_argument("--mode", choices=("exact", "mc", "occlusion"),
                   required=True)
    p.add_argument("--samples", type=int)
    p.add_argument("--oracle", choices=("toy", "cache"), default="toy")
    p.add_argument("--cache", help="probability cache file")
    p.add_argument("--weights", help="comma-separated toy token weights")
    p.add_argument("--interactions",
                   help="semicolon-separated i,j,bonus triples")
    p.add_argument("--coalition", help="comma-separated token indices")
    p.set_defaults(func=_cmd_shapley)

    p = sub.add_parser("eval-aopc", help="AOPC evaluation of word scores")
    add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--probes", required=True)
    p.add_argument("--oracle", choices=("toy", "cache"), default="toy")
    p.add_argument("--cache")
    p.add_argument("--beta1", type=float)
    p.add_argument("--beta2", type=float)
    p.add_argument("--k", help="comma-separated K percentages (default 10,20)")
    p.add_argument("--strategy", choices=("del", "pad"))
    p.add_argument("--out", required=True, help="output prefix (.json/.csv)")
    p.set_defaults(func=_cmd_eval_aopc)

    p = sub.add_parser("ablate", help="AOPC with one scoring term zeroed")
    add_common(p)
    p.add_argument("--mode", choices=evaluation.ABLATION_MODES, required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--probes", required=True)
    p.add_argument("--oracle", choices=("toy", "cache"), default="toy")
    p.add_argument("--cache")
    p.add_argument("--beta1", type=float)
    p.add_argument("--beta2", type=float)
    p.add_argument("--k")
    p.add_argument("--strategy", choices=("del", "pad"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("bench", help="builder scaling measurements")
    add_common(p)
    p.add_argument("--method", choices=("pe", "greedy"), required=True)
    p.add_argument("--n", required=True, help="comma-separated sizes")
    p.add_argument("--reps", type=int)
    p.add_argument("--out", help="CSV output path (default stdout)")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("bench-backend",
                       help="time numba vs numpy kernel variants")
    p.add_argument("--n", default="64,128,256")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--out", help="CSV output path (default stdout)")
    p.set_defaults(func=_cmd_bench_backend)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        return int(e.code)
    try:
        return args.func(args)
    except FileNotFoundError as e:
        print(f"error: missing file: {e.filename or e}", file=sys.stderr)
        return EXIT_IO
    except IsADirectoryError as e:
        print(f"error: expected a file: {e}", file=sys.stderr)
        return EXIT_IO
    except PermissionError as e:
        print(f"error: permission denied: {e}", file=sys.stderr)
        return EXIT_IO
    except OSError as e:
        print(f"error: I/O failure: {e}", file=sys.stderr)
        return EXIT_IO
    except (fileio.FormatError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
