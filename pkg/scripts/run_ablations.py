#!/usr/bin/env python3
"""Train the full model and every ablated variant over several seeds and
write a seed-averaged EM/F1 table.

Usage:
    python3 scripts/run_ablations.py --out-dir runs/ablations \
        --sessions 5000 --epochs 5 --seeds 0 1 2
"""

import argparse
import logging
from pathlib import Path

from qtrack import data as D
from qtrack import model as M
from qtrack import training as TR
from qtrack.synthetic import default_schema, gen_synthetic


def parse_args():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--sessions", type=int, default=5000)
    p.add_argument("--vocab-size", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0,
                   help="Data generation/split seed.")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2],
                   help="Training seeds to average over.")
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--head-dim", type=int, default=16)
    p.add_argument("--embed-dim", type=int, default=64)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--lr", type=float, default=0.003)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--epochs", type=int, default=5)
    return p.parse_args()


def main():
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    args = parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)

    schema = default_schema(vocab_size=args.vocab_size, seed=args.seed)
    _, gold = gen_synthetic(schema, args.sessions)
    train_set, val_set, test_set = D.split_triplets(
        gold, (0.9, 0.05, 0.05), args.seed)

    hp = M.Hyperparams(n_heads=args.heads, head_dim=args.head_dim,
                       embed_dim=args.embed_dim, dropout_rate=args.dropout)
    cfg = TR.TrainConfig(lr=args.lr, batch_size=args.batch_size,
                         max_epochs=args.epochs, patience=args.epochs)
    rows = TR.run_ablations(train_set, val_set, test_set, cfg, hp,
                            seeds=args.seeds)
    TR.write_report_csv(args.out_dir / "ablations.csv", rows)
    (args.out_dir / "ablations.md").write_text(
        TR.ablation_markdown(rows) + "\n", encoding="utf-8")
    print(TR.ablation_markdown(rows))


if __name__ == "__main__":
    main()
