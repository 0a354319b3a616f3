"""Search cluttered scenes for a strategy that passes the sensed check but collides in reality.

Writes the scene (with its instance) and the pinned strategy to tests/fixtures/occlusion/.
Usage: python3 scripts/find_occlusion_fixture.py [--start-seed N] [--max-seeds K]
"""

import argparse
import json
from pathlib import Path

import numpy as np

from artiplan import _pipeline, strategy
from artiplan.config import derive_seed
from artiplan.robot import default_model
from artiplan.scene import GeneratorConfig, generate_instances, save_scene

OUT = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "occlusion"


def search(start, count, density):
    model = default_model()
    arms = strategy.sample_arm_pool(model, derive_seed(0, "arm-pool"), 20)[:10]
    for seed in range(start, start + count):
        gen = GeneratorConfig(counts={"prismatic": 2, "hinge_left": 2}, clutter_density=density)
        for inst in generate_instances(seed, gen):
            if len(inst.scene.sensed()) == len(inst.scene.statics):
                continue    # nothing hidden
            cands = strategy.CandidateSet.for_object(inst.obj, arms)
            sensed, _ = strategy.decode_evaluate(model, inst, cands, sensed=True)
            full, _ = strategy.decode_evaluate(model, inst, cands, sensed=False)
            hit = np.flatnonzero((sensed == _pipeline.STAGE_NONE) & (full == _pipeline.STAGE_COLLISION))
            print(f"seed {seed} {inst.instance_id}: {len(inst.scene.statics) - len(inst.scene.sensed())} hidden, "
                  f"{len(hit)} gap candidates")
            if len(hit):
                return inst, cands, int(hit[0])
    return None


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--start-seed", type=int, default=0)
    ap.add_argument("--max-seeds", type=int, default=50)
    ap.add_argument("--density", type=float, default=3.0)
    args = ap.parse_args()
    found = search(args.start_seed, args.max_seeds, args.density)
    if found is None:
        raise SystemExit("no fixture found")
    inst, cands, idx = found
    st = cands.strategy(idx)
    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / "scene.json").write_bytes(save_scene(inst.scene, [inst]))
    doc = {"instance_id": inst.instance_id, "candidate": idx, "base": st.base.to_list(),
           "init": st.init.angles.tolist()}
    (OUT / "strategy.json").write_text(json.dumps(doc, indent=1) + "\n")
    print(f"stored {inst.instance_id} candidate {idx} in {OUT}")


if __name__ == "__main__":
    main()
