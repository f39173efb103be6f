"""Batch command line: run searches, decode vectors, inspect artifacts.

Exit codes: 0 success, 1 usage error, 2 configuration error (message carries
a JSON-pointer path into the config document), 3 evaluator failure.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys

import numpy as np

from . import encoding, evolution, optimizer
from .evaluator import EvaluatorError, builtin_names, make_problem
from .optimizer import SearchConfig
from .store import SampleDatabase

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_EVALUATOR = 3

ABLATIONS = ("hf-only", "lf-only", "discrete-encoding")


class ConfigError(Exception):
    """Configuration rejected; the message names the offending JSON path."""


# ---------------------------------------------------------------------------
# config schema (hand-rolled: the checks are simple and the error paths
# matter more than draft-07 compliance)

_INT = ("integer", lambda v: isinstance(v, int) and not isinstance(v, bool))
_NUM = ("number", lambda v: isinstance(v, (int, float))
        and not isinstance(v, bool))
_STR = ("string", lambda v: isinstance(v, str))
_BOOL = ("boolean", lambda v: isinstance(v, bool))
_DICT = ("object", lambda v: isinstance(v, dict))

CONFIG_FIELDS = {
    "problem": (_STR, "built-in problem name (see `mfmo run --list`)"),
    "problem_args": (_DICT, "keyword arguments for the problem factory"),
    "mode": (_STR, "mf | hf-only | lf-only"),
    "seed": (_INT, "master seed; all random streams derive from it"),
    "nfe_max_hf": (_INT, "hard cap on HF evaluations, initial design "
                         "included"),
    "nfe_max_lf": (_INT, "LF evaluation cap in mf mode (default 2x HF cap)"),
    "n_s_hf": (_INT, "initial HF design size"),
    "n_s_lf": (_INT, "initial LF design size (default 2x n_s_hf)"),
    "n_p": (_INT, "parent population size"),
    "F": (_NUM, "differential weight of the six offspring strategies"),
    "p_c": (_NUM, "binomial crossover probability"),
    "K": (_INT, "cluster count for local infill"),
    "n_near": (_INT, "local neighborhood: n_near HF and 2*n_near LF points"),
    "ei_pop": (_INT, "population of the expected-improvement NSGA-II"),
    "ei_gens": (_INT, "generations of the expected-improvement NSGA-II"),
    "fit_pop": (_INT, "population of the likelihood search"),
    "fit_gens": (_INT, "generations of the likelihood search (cold start)"),
    "fit_warm_gens": (_INT, "generations for warm-started refits"),
    "lhd_restarts": (_INT, "restarts of the maximin Latin hypercube"),
    "dedup_eps": (_NUM, "duplicate threshold in normalized max-norm"),
    "trust_region": (_BOOL, "restrict EI search to the inflated bounding "
                            "box of the local neighbors"),
    "trust_region_inflate": (_NUM, "trust-region inflation factor"),
    "lf_only_budget": (_INT, "LF evaluation cap in lf-only mode"),
    "lf_only_initial": (_INT, "initial LF design size in lf-only mode"),
    "lf_only_window": (_INT, "model window (most recent LF records) in "
                             "lf-only mode"),
    "hv_reference": (("array of two numbers",
                      lambda v: isinstance(v, list) and len(v) == 2
                      and all(_NUM[1](e) for e in v)),
                     "hypervolume reference point in normalized space"),
}

EVALUATOR_FIELDS = {
    "command": (_STR, "child command line (overridden by MFMO_EVAL_CMD)"),
    "timeouts": (_DICT, "per-fidelity timeout seconds, e.g. "
                        "{\"LF\": 600, \"HF\": 3600}"),
    "max_inflight": (_INT, "outstanding requests to the child process"),
}

OPTIONAL_NULLABLE = {"nfe_max_lf", "n_s_lf", "fit_warm_gens"}


def config_schema() -> dict:
    fields = {}
    for key, ((typename, _check), doc) in CONFIG_FIELDS.items():
        default = getattr(SearchConfig(), key, None)
        if isinstance(default, tuple):
            default = list(default)
        fields[key] = {"type": typename, "doc": doc, "default": default}
    return {
        "title": "mfmo run configuration",
        "type": "object",
        "fields": fields,
        "evaluator": {
            key: {"type": typename, "doc": doc}
            for key, ((typename, _check), doc) in EVALUATOR_FIELDS.items()},
        "notes": [
            "unknown top-level keys are rejected",
            "nfe_max_lf, n_s_lf and fit_warm_gens accept null for their "
            "mode-dependent defaults",
            "the optional `evaluator` object configures external child "
            "processes for NAS problems",
        ],
    }


def _check_fields(obj: dict, fields: dict, base: str) -> None:
    for key, value in obj.items():
        if key not in fields:
            raise ConfigError(
                f"{base}/{key}: unknown key; known keys: "
                f"{', '.join(sorted(fields))}")
        (typename, check), _doc = fields[key]
        if value is None and key in OPTIONAL_NULLABLE:
            continue
        if not check(value):
            raise ConfigError(f"{base}/{key}: expected {typename}, "
                              f"got {json.dumps(value)}")


def parse_config(doc: dict) -> SearchConfig:
    """Validate a JSON config document and build a SearchConfig."""
    if not isinstance(doc, dict):
        raise ConfigError("/: the config must be a JSON object")
    doc = dict(doc)
    evaluator_block = doc.pop("evaluator", None)
    _check_fields(doc, CONFIG_FIELDS, "")
    if evaluator_block is not None:
        if not isinstance(evaluator_block, dict):
            raise ConfigError("/evaluator: expected object")
        _check_fields(evaluator_block, EVALUATOR_FIELDS, "/evaluator")
    if "hv_reference" in doc:
        doc["hv_reference"] = tuple(doc["hv_reference"])
    try:
        cfg = SearchConfig.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"/: {exc}") from None
    if evaluator_block:
        args = dict(cfg.problem_args)
        if "command" in evaluator_block:
            args.setdefault("command", evaluator_block["command"])
        if "timeouts" in evaluator_block:
            args.setdefault("timeouts", evaluator_block["timeouts"])
        if "max_inflight" in evaluator_block:
            args.setdefault("max_inflight", evaluator_block["max_inflight"])
        cfg.problem_args = args
    return cfg


def load_config(path: str | None) -> SearchConfig:
    if path is None:
        return SearchConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None
    return parse_config(doc)


def apply_ablation(cfg: SearchConfig, ablation: str | None) -> SearchConfig:
    if ablation is None:
        return cfg
    if ablation in ("hf-only", "lf-only"):
        cfg.mode = ablation
    elif ablation == "discrete-encoding":
        if cfg.problem.startswith("unet-nas"):
            args = dict(cfg.problem_args)
            args["arch_encoding"] = "discrete"
            cfg.problem_args = args
        elif not cfg.problem.endswith("-paired"):
            cfg.problem = cfg.problem + "-paired"
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# subcommands

def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        cfg = apply_ablation(cfg, args.ablation)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        problem = make_problem(cfg.problem, **cfg.problem_args)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EvaluatorError as exc:
        print(f"evaluator error: {exc}", file=sys.stderr)
        return EXIT_EVALUATOR
    out_dir = args.out or "mfmo-run"
    opt = optimizer.Optimizer(cfg, problem)
    opt.on_iteration = lambda rep: print(
        f"iteration {rep.iteration}: HF {rep.hf_count}/{cfg.nfe_max_hf}, "
        f"LF {rep.lf_count}/{cfg.lf_budget}", file=sys.stderr)
    try:
        result = opt.run()
    finally:
        problem.close()
    paths = optimizer.write_run_artifacts(out_dir, cfg, result)
    if not result.completed:
        print(f"evaluator error: {result.error} (partial results in "
              f"{out_dir})", file=sys.stderr)
        return EXIT_EVALUATOR
    print(f"done: {result.database.count('HF')} HF / "
          f"{result.database.count('LF')} LF evaluations, "
          f"final normalized HV {result.final_hv:.6f}")
    for name, path in paths.items():
        print(f"  {name}: {path}")
    return EXIT_OK


def _cmd_seeds(args) -> int:
    try:
        base = load_config(args.config)
        base = apply_ablation(base, args.ablation)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.count < 1:
        print("usage error: --count must be positive", file=sys.stderr)
        return EXIT_USAGE
    out_dir = args.out or "mfmo-seeds"
    os.makedirs(out_dir, exist_ok=True)
    started = datetime.datetime.now(datetime.timezone.utc).isoformat()
    seeds = [base.seed + i for i in range(args.count)]
    results, inventory = [], {}
    for seed in seeds:
        cfg = SearchConfig.from_dict({**base.to_dict(), "seed": seed})
        try:
            problem = make_problem(cfg.problem, **cfg.problem_args)
        except (ValueError, EvaluatorError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"seed {seed}: running", file=sys.stderr)
        opt = optimizer.Optimizer(cfg, problem)
        try:
            result = opt.run()
        finally:
            problem.close()
        seed_dir = os.path.join(out_dir, f"seed-{seed}")
        inventory[f"seed-{seed}"] = optimizer.write_run_artifacts(
            seed_dir, cfg, result)
        results.append(result)
        if not result.completed:
            print(f"evaluator error on seed {seed}: {result.error}",
                  file=sys.stderr)
            return EXIT_EVALUATOR

    # cross-run comparability: one shared normalization over all runs
    all_hf = [r.database.f_of("HF") for r in results]
    lo, hi = optimizer.union_extremes(all_hf)
    ref = tuple(base.hv_reference)
    finals = [optimizer.normalized_hv(r.pareto_f, lo, hi, ref)
              for r in results]
    trace_path = os.path.join(out_dir, "hv_traces.csv")
    with open(trace_path, "w", encoding="utf-8") as fh:
        fh.write("seed,iteration,hf_count,hv\n")
        for seed, result in zip(seeds, results):
            recs = result.database.records_of("HF")
            for rep in result.trace:
                sub = np.array([r.f for r in recs
                                if r.iteration <= rep.iteration])
                hv = optimizer.normalized_hv(sub, lo, hi, ref) \
                    if len(sub) else 0.0
                fh.write(f"{seed},{rep.iteration},{rep.hf_count},"
                         f"{repr(float(hv))}\n")
    summary = {
        "seeds": seeds,
        "normalization": optimizer.NORMALIZATION_RECIPE,
        "union_min": [float(v) for v in lo],
        "union_max": [float(v) for v in hi],
        "hv_reference": list(ref),
        "per_seed_final_hv": {str(s): float(v)
                              for s, v in zip(seeds, finals)},
        "median_hv": float(np.median(finals)),
        "std_hv": float(np.std(finals)),
    }
    summary_path = os.path.join(out_dir, "summary.json")
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    manifest = {
        "config": args.config,
        "output_dir": out_dir,
        "seeds": seeds,
        "started": started,
        "finished": datetime.datetime.now(
            datetime.timezone.utc).isoformat(),
        "artifacts": {**inventory, "hv_traces": trace_path,
                      "summary": summary_path},
    }
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    print(f"median final HV {summary['median_hv']:.6f} "
          f"(std {summary['std_hv']:.6f}) over {len(seeds)} seeds")
    print(f"  summary: {summary_path}")
    print(f"  manifest: {manifest_path}")
    return EXIT_OK


def _space_from_args(args) -> encoding.SpaceConfig:
    if args.space:
        with open(args.space, encoding="utf-8") as fh:
            doc = json.load(fh)
        try:
            return encoding.SpaceConfig(**doc)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"/space: {exc}") from None
    return encoding.SpaceConfig()


def _cmd_decode(args) -> int:
    try:
        space = _space_from_args(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        vector = np.array([float(v) for v in args.vector.replace(
            ",", " ").split()])
    except ValueError:
        print("usage error: --vector must be a comma- or space-separated "
              "list of numbers", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.encoding == "continuous":
            down, up = encoding.decode(space, vector)
        else:
            down, up = encoding.decode_rounded(space, vector)
        spec = encoding.assemble_architecture(down, up, space)
        doc = encoding.export_architecture(
            spec, {"encoding": args.encoding,
                   "vector": [float(v) for v in vector]})
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if space.shared_cells:
        listing = [("down (shared)", down[0]), ("up (shared)", up[0])]
    else:
        listing = [(f"down{k + 1}", g) for k, g in enumerate(down)]
        listing += [(f"up{j + 1}", g) for j, g in enumerate(up)]
    print("# cell graphs")
    for label, graph in listing:
        print(f"{label}:")
        for ni, node in enumerate(graph.nodes, start=1):
            parts = []
            for slot in node.slots:
                src = (f"input{slot.pred}" if slot.pred <= 2
                       else f"node{slot.pred - 2}")
                parts.append(f"{src}->{slot.op}")
            print(f"  node{ni}: " + "  +  ".join(parts))
    print(f"# FLOPs total: {doc['flops']['total']:,} "
          f"({doc['flops']['total'] / 1e9:.3f} GFLOPs)")
    print("# architecture document")
    print(json.dumps(doc, indent=2))
    return EXIT_OK


def _cmd_hv(args) -> int:
    try:
        ref = tuple(float(v) for v in args.ref.split(","))
        if len(ref) != 2:
            raise ValueError
    except ValueError:
        print("usage error: --ref must be two comma-separated numbers",
              file=sys.stderr)
        return EXIT_USAGE
    try:
        rows = np.genfromtxt(args.front, delimiter=",", names=True)
    except OSError as exc:
        print(f"usage error: cannot read {args.front}: {exc}",
              file=sys.stderr)
        return EXIT_USAGE
    if rows.dtype.names is None or not {"f1", "f2"} <= set(rows.dtype.names):
        print("usage error: the front file needs f1 and f2 columns",
              file=sys.stderr)
        return EXIT_USAGE
    front = np.column_stack([np.atleast_1d(rows["f1"]),
                             np.atleast_1d(rows["f2"])])
    result = evolution.hypervolume_2d(front, ref)
    print(repr(float(result.value)))
    return EXIT_OK


def _cmd_front(args) -> int:
    try:
        db = SampleDatabase.load(args.db)
    except (OSError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        records = db.pareto("HF")
    except LookupError:
        print("usage error: the database holds no HF records",
              file=sys.stderr)
        return EXIT_USAGE
    pareto_x = np.array([r.x for r in records])
    pareto_f = np.array([r.f for r in records])
    if args.out:
        optimizer.write_front_csv(args.out, pareto_x, pareto_f)
        print(args.out)
    else:
        order = np.lexsort((pareto_f[:, 1], pareto_f[:, 0]))
        dim = pareto_x.shape[1]
        print(",".join(["f1", "f2"] + [f"x{i + 1}" for i in range(dim)]))
        for i in order:
            vals = [pareto_f[i, 0], pareto_f[i, 1], *pareto_x[i]]
            print(",".join(repr(float(v)) for v in vals))
    return EXIT_OK


# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage problems; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mfmo",
                     description="multi-fidelity multi-objective search")
    parser.add_argument("--print-config-schema", action="store_true",
                        help="print the run-config JSON schema and exit")
    sub = parser.add_subparsers(dest="command")

    p_run = sub.add_parser("run", help="run one optimization")
    p_run.add_argument("--config", help="JSON run configuration")
    p_run.add_argument("--out", help="output directory (default mfmo-run)")
    p_run.add_argument("--seed", type=int, help="override the config seed")
    p_run.add_argument("--ablation", choices=ABLATIONS,
                       help="switch on an ablation protocol")
    p_run.set_defaults(fn=_cmd_run)

    p_seeds = sub.add_parser("seeds", help="multi-seed batch with summary")
    p_seeds.add_argument("--count", type=int, required=True,
                         help="number of consecutive seeds")
    p_seeds.add_argument("--config", help="JSON run configuration")
    p_seeds.add_argument("--out", help="output directory (default "
                                       "mfmo-seeds)")
    p_seeds.add_argument("--ablation", choices=ABLATIONS)
    p_seeds.set_defaults(fn=_cmd_seeds)

    p_dec = sub.add_parser("decode", help="decode a design vector")
    p_dec.add_argument("--vector", required=True,
                       help="comma- or space-separated values")
    p_dec.add_argument("--space", help="JSON file of search-space settings")
    p_dec.add_argument("--encoding", choices=("continuous", "discrete"),
                       default="continuous")
    p_dec.set_defaults(fn=_cmd_decode)

    p_hv = sub.add_parser("hv", help="hypervolume of a front CSV")
    p_hv.add_argument("--front", required=True, help="CSV with f1,f2 columns")
    p_hv.add_argument("--ref", required=True, help="reference point a,b")
    p_hv.set_defaults(fn=_cmd_hv)

    p_front = sub.add_parser("front", help="extract the HF Pareto front "
                                           "from a database")
    p_front.add_argument("--db", required=True, help="database NDJSON file")
    p_front.add_argument("--out", help="write CSV here instead of stdout")
    p_front.set_defaults(fn=_cmd_front)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.print_config_schema:
            print(json.dumps(config_schema(), indent=2))
            return EXIT_OK
        if not getattr(args, "command", None):
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        return args.fn(args)
    except BrokenPipeError:
        # downstream reader (e.g. `head`) closed the pipe; suppress the
        # interpreter's close-time flush error and exit quietly
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
