"""Score the evaluation pool with freshly initialised encoders (no training) over several init seeds."""
import argparse
from pathlib import Path

import numpy as np

from recole import pipeline as pl
from recole.config import load_config
from recole.synth import synth_dataset


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/untrained")
    ap.add_argument("--n", type=int, default=12)
    args = ap.parse_args()

    cfg = load_config(synth_dataset(Path(args.out))["config"])
    g, space, _ = pl.stage_cluster(cfg)
    res = []
    for s in range(args.n):
        c = cfg.updated(seed=s)
        model = pl.new_model(c, space.cluster_model, g.n_relations)
        rep, _ = pl.stage_evaluate(cfg, model, g.relation_vocab)  # same pool for every init
        res.append((rep.auc_pr, rep.hits_at_10))
        print(f"init seed {s:3d}  AUC-PR {rep.auc_pr:.4f}  Hits@10 {rep.hits_at_10:.4f}")
    a = np.array(res)
    print(f"mean AUC-PR {a[:, 0].mean():.4f} +- {a[:, 0].std():.4f}   "
          f"Hits@10 {a[:, 1].mean():.4f} +- {a[:, 1].std():.4f}")


if __name__ == "__main__":
    main()
