"""Run the whole pipeline through the CLI: generate, label the arm pool, select arms, benchmark, report.

    python3 scripts/run_pipeline.py --out runs/smoke --smoke      # a minute or two
    python3 scripts/run_pipeline.py --out runs/full               # hours on one core

Every stage writes into its own subdirectory of --out, so a finished stage can be
inspected (or rerun with the CLI directly) without repeating the earlier ones.
"""

import argparse
import sys
from pathlib import Path

from artiplan.cli import main as cli

SMOKE = dict(counts="prismatic=4,hinge_left=2,hinge_top=1,hinge_bottom=1", clutter=0.3,
             methods="mpao_frequency,mpao_random,ik_init,rrt_connect,projected_rrt",
             budgets="1,2,5,10,all", seeds="0,1")
FULL = dict(counts="prismatic=30,hinge_left=15,hinge_right=15,hinge_top=15,hinge_bottom=15", clutter=0.5,
            methods="mpao_frequency,mpao_random,ik_init,rrt_connect,projected_rrt",
            budgets="1,2,5,10,20,50,100,all", seeds=",".join(str(s) for s in range(20)))


def step(*argv):
    argv = [str(a) for a in argv]
    print("$ artiplan " + " ".join(argv), flush=True)
    code = cli(argv)
    if code:
        sys.exit(code)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--smoke", action="store_true", help="tiny suite for a quick end-to-end check")
    ap.add_argument("--jobs", type=int, default=None)
    args = ap.parse_args()
    p = SMOKE if args.smoke else FULL
    out = Path(args.out)
    jobs = [] if args.jobs is None else ["--jobs", args.jobs]

    step(*jobs, "gen", "--seed", args.seed, "--out", out / "suite", "--counts", p["counts"], "--clutter", p["clutter"])
    step(*jobs, "validate", out / "suite")
    step(*jobs, "label", "--suite", out / "suite", "--split", "train", "--out", out / "pool")
    step(*jobs, "select-arms", "--labels", out / "pool", "--keep", 10, "--out", out / "arms")
    step(*jobs, "rank", "--ranker", "frequency", "--labels", out / "arms" / "labels", "--out", out / "rank")
    step(*jobs, "bench", "--suite", out / "suite", "--split", "test", "--arms", out / "arms" / "arms.json",
         "--table", out / "rank" / "frequency.csv", "--methods", p["methods"], "--budgets", p["budgets"],
         "--seeds", p["seeds"], "--out", out / "bench")
    step("report", "--in", out / "bench")


if __name__ == "__main__":
    main()
