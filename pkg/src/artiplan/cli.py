"""Command-line front end: gen, label, select-arms, rank, plan, bench, report, validate."""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path


from . import bench, strategy
from .config import RunConfig, derive_seed, load_config
from .robot import JointConfig, default_model
from .scene import KINDS, SceneError, generate_instances, load_scene_document, save_scene, scenes_of
from .seqik import trajectory_to_text

SUITE_VERSION = 1


class UsageError(Exception):
    """Bad arguments or configuration: exit code 2."""


class DomainFailure(Exception):
    """The computation ran but produced no result (e.g. no plan): exit code 1."""


def write_atomic(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read(path):
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc


def echo_config(out_dir, cfg: RunConfig, args):
    doc = {"config": cfg.to_dict(), "command": {k: v for k, v in sorted(vars(args).items()) if k != "func"}}
    write_atomic(Path(out_dir) / "config.json", json.dumps(doc, indent=1, sort_keys=True, default=str) + "\n")


# ---------------------------------------------------------------------------
# suites, arms, labels on disk


def save_suite(out_dir, instances):
    out_dir = Path(out_dir)
    files = []
    for scene, insts in scenes_of(instances):
        name = f"{scene.scene_id}.json"
        write_atomic(out_dir / name, save_scene(scene, insts))
        files.append(name)
    doc = {"schema_version": SUITE_VERSION, "scenes": files}
    write_atomic(out_dir / "suite.json", json.dumps(doc, indent=1) + "\n")


def load_suite(path, split=None):
    path = Path(path)
    if path.is_dir():
        path = path / "suite.json"
    try:
        doc = json.loads(_read(path))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: not a suite file ({exc})") from exc
    if doc.get("schema_version") != SUITE_VERSION:
        raise UsageError(f"{path}: unsupported suite version {doc.get('schema_version')}")
    out = []
    for name in doc["scenes"]:
        try:
            _, insts = load_scene_document((path.parent / name).read_bytes())
        except (OSError, SceneError) as exc:
            raise UsageError(f"{path.parent / name}: {exc}") from exc
        out += insts
    if split is not None:
        out = [i for i in out if i.split == split]
    return out


def save_arms(path, configs, **extra):
    doc = {"configs": [c.angles.tolist() for c in configs]}
    doc.update(extra)
    write_atomic(path, json.dumps(doc, indent=1) + "\n")


def load_arms(path):
    try:
        doc = json.loads(_read(path))
        return tuple(JointConfig(c) for c in doc["configs"]), doc
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise UsageError(f"{path}: bad arms file ({exc})") from exc


def load_label_dir(path):
    path = Path(path)
    files = sorted(path.glob("*.labels"))
    if not files:
        raise UsageError(f"no label files in {path}")
    try:
        return [strategy.labels_from_text(f.read_text()) for f in files]
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


# ---------------------------------------------------------------------------
# subcommands


def _parse_counts(text):
    out = {}
    for part in text.split(","):
        if not part.strip():
            continue
        k, _, v = part.partition("=")
        k = k.strip()
        if k not in KINDS:
            raise UsageError(f"unknown kind {k!r} in --counts (expected one of {', '.join(KINDS)})")
        try:
            out[k] = int(v)
        except ValueError as exc:
            raise UsageError(f"bad count {v!r} for {k}") from exc
    return out


def cmd_gen(args, cfg: RunConfig):
    gen = cfg.generator
    kw = {}
    if args.counts:
        kw["counts"] = _parse_counts(args.counts)
    if args.clutter is not None:
        kw["clutter_density"] = args.clutter
    if args.lids is not None:
        kw["lids"] = args.lids
    if args.handle_height:
        lo, hi = (float(x) for x in args.handle_height.split(","))
        kw["handle_height"] = (lo, hi)
    gen = dataclasses.replace(gen, **kw)
    try:
        gen.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    cfg = dataclasses.replace(cfg, generator=gen)
    insts = generate_instances(args.seed, gen)
    save_suite(args.out, insts)
    echo_config(args.out, cfg, args)
    print(f"wrote {len(insts)} instances to {args.out}")


def _label_job(task):
    inst, arms, cfg = task
    cands = strategy.CandidateSet.for_object(inst.obj, arms)
    return strategy.label_instance(inst, cands, default_model(), cfg.feasibility, cfg.ik)


def _map(fn, tasks, jobs):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, tasks))
    return [fn(t) for t in tasks]


def cmd_label(args, cfg: RunConfig):
    insts = load_suite(args.suite, args.split)
    if not insts:
        raise UsageError(f"no instances in split {args.split!r}")
    model = default_model()
    if args.arms:
        arms, _ = load_arms(args.arms)
        pool_seed = None
    else:
        pool_seed = derive_seed(cfg.seed, "arm-pool")
        arms = strategy.sample_arm_pool(model, pool_seed, cfg.pool_size)
    out = Path(args.out)
    sets = _map(_label_job, [(i, arms, cfg) for i in insts], args.jobs)
    for ls in sets:
        write_atomic(out / f"{ls.instance_id}.labels", strategy.labels_to_text(ls))
    save_arms(out / "arms.json", arms, pool_seed=pool_seed)
    echo_config(out, cfg, args)
    pos = sum(ls.n_positive > 0 for ls in sets)
    print(f"labeled {len(sets)} instances ({pos} with a positive) x {len(sets[0])} candidates")


def cmd_select_arms(args, cfg: RunConfig):
    sets = load_label_dir(args.labels)
    pool, doc = load_arms(Path(args.labels) / "arms.json")
    n = len(pool)
    if any(len(ls) % n for ls in sets):
        raise UsageError("label files do not match the pool size in arms.json")
    sel = strategy.select_arm_configs([], 0, n, args.keep, pool_labels=sets)
    # the pool is taken from the label directory, not resampled
    chosen = tuple(pool[i] for i in sel.selected)
    out = Path(args.out)
    save_arms(out / "arms.json", chosen, pool_indices=list(sel.selected), pool_scores=sel.scores.tolist(),
              pool_seed=doc.get("pool_seed"))
    for ls in sets:
        sub = strategy.restrict_labels(ls, n, sel.selected)
        write_atomic(out / "labels" / f"{ls.instance_id}.labels", strategy.labels_to_text(sub))
    echo_config(out, cfg, args)
    print("selected pool configs " + " ".join(str(i) for i in sel.selected))


def _ranker_from_args(args, n):
    if args.ranker == "random":
        return strategy.Ranker.random(args.seed)
    if args.ranker == "frequency":
        if args.table:
            try:
                table = strategy.frequency_from_csv(_read(args.table))
            except (ValueError, KeyError) as exc:
                raise UsageError(f"{args.table}: {exc}") from exc
        elif getattr(args, "labels", None):
            table = strategy.frequency_table(load_label_dir(args.labels))
        else:
            raise UsageError("frequency ranker needs --table or --labels")
        if len(table) != n:
            raise UsageError(f"frequency table has {len(table)} entries, expected {n}")
        return strategy.Ranker.frequency(table)
    if not args.scores:
        raise UsageError("external ranker needs --scores")
    try:
        return strategy.Ranker.external(strategy.load_scores(_read(args.scores), n))
    except ValueError as exc:
        raise UsageError(f"{args.scores}: {exc}") from exc


def cmd_rank(args, cfg: RunConfig):
    n = args.n_candidates
    out = Path(args.out)
    if args.ranker == "frequency" and args.labels and not args.table:
        table = strategy.frequency_table(load_label_dir(args.labels))
        n = len(table)
        write_atomic(out / "frequency.csv", strategy.frequency_to_csv(table))
    ranker = _ranker_from_args(args, n)
    order = strategy.rank(None, _Sized(n), ranker)
    write_atomic(out / "ranking.txt", "\n".join(str(int(i)) for i in order) + "\n")
    echo_config(out, cfg, args)
    print(f"ranked {n} candidates with the {args.ranker} ranker; first: {' '.join(map(str, order[:5]))}")


class _Sized:
    def __init__(self, n):
        self.n = n

    def __len__(self):
        return self.n


def _find_instance(args):
    insts = [i for i in load_suite(args.suite) if i.instance_id == args.instance]
    if not insts:
        raise UsageError(f"instance {args.instance!r} not in {args.suite}")
    return insts[0]


def cmd_plan(args, cfg: RunConfig):
    if args.budget is not None and args.budget < 1:
        raise UsageError("--budget must be at least 1")
    inst = _find_instance(args)
    arms, _ = load_arms(args.arms)
    cands = strategy.CandidateSet.for_object(inst.obj, arms)
    ranker = _ranker_from_args(args, len(cands))
    res = strategy.mpao_plan(inst, cands, ranker, args.budget, default_model(), cfg.feasibility, cfg.ik)
    out = Path(args.out)
    doc = {"instance_id": inst.instance_id, "success": res.success, "tries_used": res.tries_used,
           "failure_stages": res.histogram,
           "candidate": None if res.strategy is None else res.strategy.index}
    write_atomic(out / "plan.json", json.dumps(doc, indent=1, sort_keys=True) + "\n")
    echo_config(out, cfg, args)
    if not res.success:
        raise DomainFailure(f"no plan within {res.tries_used} tries; failures: {res.histogram}")
    write_atomic(out / "trajectory.txt", trajectory_to_text(res.plan, cfg.feasibility.max_interp_step))
    print(f"plan found after {res.tries_used} tries (candidate {res.strategy.index})")


def _parse_budgets(text):
    out = []
    for p in text.split(","):
        p = p.strip()
        if p in ("all", "inf"):
            out.append(None)
            continue
        try:
            b = int(p)
        except ValueError as exc:
            raise UsageError(f"bad budget {p!r}") from exc
        if b < 1:
            raise UsageError("budgets must be at least 1")
        out.append(b)
    return out


def cmd_bench(args, cfg: RunConfig):
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    unknown = [m for m in methods if m not in bench.METHODS]
    if unknown:
        raise UsageError(f"unknown methods {unknown}; choose from {', '.join(bench.METHODS)}")
    budgets = _parse_budgets(args.budgets)
    try:
        seeds = [int(s) for s in args.seeds.split(",")]
    except ValueError as exc:
        raise UsageError(f"bad --seeds {args.seeds!r}") from exc
    insts = load_suite(args.suite, args.split)
    if not insts:
        raise UsageError(f"no instances in split {args.split!r}")
    arms, _ = load_arms(args.arms)
    n = len(arms) * strategy.N_PLACEMENTS
    freq = scores = None
    if args.table:
        freq = strategy.frequency_from_csv(_read(args.table))
    elif args.labels:
        freq = strategy.frequency_table(load_label_dir(args.labels))
    if freq is not None and len(freq) != n:
        raise UsageError(f"frequency table has {len(freq)} entries, expected {n}")
    if args.scores:
        scores = strategy.load_scores(_read(args.scores), n)
    if "mpao_frequency" in methods and freq is None:
        raise UsageError("mpao_frequency needs --table or --labels")
    if "mpao_external" in methods and scores is None:
        raise UsageError("mpao_external needs --scores")
    ctx = bench.BenchContext(arms, freq, scores, cfg.feasibility, cfg.ik, cfg.planner, cfg.seed, args.timing)
    recs = bench.run_benchmark(insts, methods, budgets, seeds, ctx, args.jobs)
    out = Path(args.out)
    write_atomic(out / "records.csv", bench.records_to_csv(recs))
    echo_config(out, cfg, args)
    print(f"wrote {len(recs)} records to {out / 'records.csv'}")


def cmd_report(args, cfg: RunConfig):
    src = Path(args.input)
    recs = bench.records_from_csv(_read(src / "records.csv"))
    if not recs:
        raise DomainFailure("no records")
    summ = bench.summarize(recs)
    tries, dev = bench.curves_to_csv(summ)
    out = Path(args.out) if args.out else src
    text = bench.report_text(summ)
    write_atomic(out / "report.md", text)
    write_atomic(out / "curve_tries.csv", tries)
    write_atomic(out / "curve_deviation.csv", dev)
    print(text, end="")


def cmd_validate(args, cfg: RunConfig):
    path = Path(args.path)
    files = sorted(p for p in path.glob("*.json") if p.name not in ("suite.json", "config.json")) \
        if path.is_dir() else [path]
    if not files:
        raise UsageError(f"no scene files at {path}")
    bad = 0
    for f in files:
        try:
            _, insts = load_scene_document(f.read_bytes())
        except SceneError as exc:
            bad += 1
            print(f"{f}: {exc}", file=sys.stderr)
            continue
        except OSError as exc:
            raise UsageError(f"cannot read {f}: {exc.strerror}") from exc
        print(f"{f}: ok ({len(insts)} instances)")
    if bad:
        raise DomainFailure(f"{bad} of {len(files)} scene files invalid")


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="artiplan", description=__doc__)
    p.add_argument("--config", help="JSON run configuration; flags override its values")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker processes (default: all CPUs)")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic scene suite")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--counts", help="e.g. prismatic=10,hinge_left=5")
    g.add_argument("--clutter", type=float, help="clutter boxes per square metre")
    g.add_argument("--lids", type=int, help="extra lid (hinge_top) objects")
    g.add_argument("--handle-height", help="LO,HI in metres")
    g.set_defaults(func=cmd_gen)

    lb = sub.add_parser("label", help="ground-truth labels for every candidate of every instance")
    lb.add_argument("--suite", required=True)
    lb.add_argument("--split", default="train")
    lb.add_argument("--arms", help="arms file; default samples the configuration pool")
    lb.add_argument("--out", required=True)
    lb.set_defaults(func=cmd_label)

    sa = sub.add_parser("select-arms", help="keep the best pool configurations by label successes")
    sa.add_argument("--labels", required=True, help="directory written by `label` over the pool")
    sa.add_argument("--keep", type=int, default=10)
    sa.add_argument("--out", required=True)
    sa.set_defaults(func=cmd_select_arms)

    def ranker_args(q):
        q.add_argument("--ranker", choices=("random", "frequency", "external"), default="frequency")
        q.add_argument("--seed", type=int, default=0, help="random ranker seed")
        q.add_argument("--table", help="frequency table CSV")
        q.add_argument("--labels", help="label directory to build the frequency table from")
        q.add_argument("--scores", help="external scorer file, one score per line")

    rk = sub.add_parser("rank", help="rank the candidate set")
    ranker_args(rk)
    rk.add_argument("--n-candidates", type=int, default=strategy.N_PLACEMENTS * strategy.N_ARMS)
    rk.add_argument("--out", required=True)
    rk.set_defaults(func=cmd_rank)

    pl = sub.add_parser("plan", help="plan one instance with MPAO")
    pl.add_argument("--suite", required=True)
    pl.add_argument("--instance", required=True)
    pl.add_argument("--arms", required=True)
    pl.add_argument("--budget", type=int)
    ranker_args(pl)
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=cmd_plan)

    bn = sub.add_parser("bench", help="run the benchmark and write records.csv")
    bn.add_argument("--suite", required=True)
    bn.add_argument("--split", default="test")
    bn.add_argument("--methods", default="mpao_frequency,mpao_random")
    bn.add_argument("--budgets", default="1,2,5,10,20,50,100")
    bn.add_argument("--seeds", default="0")
    bn.add_argument("--arms", required=True)
    bn.add_argument("--table")
    bn.add_argument("--labels")
    bn.add_argument("--scores")
    bn.add_argument("--timing", action="store_true",
                    help="record wall time (outputs then differ between runs)")
    bn.add_argument("--out", required=True)
    bn.set_defaults(func=cmd_bench)

    rp = sub.add_parser("report", help="summary tables and curves from records.csv")
    rp.add_argument("--in", dest="input", required=True)
    rp.add_argument("--out")
    rp.set_defaults(func=cmd_report)

    va = sub.add_parser("validate", help="check scene files")
    va.add_argument("path")
    va.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.jobs < 1:
            raise UsageError("--jobs must be at least 1")
        try:
            cfg = load_config(args.config) if args.config else RunConfig()
        except (OSError, ValueError) as exc:
            raise UsageError(f"config: {exc}") from exc
        args.func(args, cfg)
        return 0
    except UsageError as exc:
        print(f"artiplan: error: {exc}", file=sys.stderr)
        return 2
    except DomainFailure as exc:
        print(f"artiplan: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
