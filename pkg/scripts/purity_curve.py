#!/usr/bin/env python3
"""Track pseudo-label cluster purity and the loss terms across a default
training run, one row per epoch.

Usage:
    python3 scripts/purity_curve.py [--config PATH] [--seed N]
"""
import argparse
import sys

from remix.config import RunConfig, load_config
from remix.datamodel import synth_generate
from remix.trainer import train


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=None)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    cfg = load_config(args.config) if args.config else RunConfig().validate()
    cfg.seed = args.seed

    multi, corpus, _ = synth_generate(cfg.generator, cfg.seed)
    state = train(multi, corpus, cfg)

    print("epoch  purity  clusters  noise  L_total  L_ins  L_aug  L_cen  L_cc")
    for m in state.metrics:
        print(f"{m['epoch']:5d}  {m['purity']:.4f}  {m['pseudo_clusters']:8d}"
              f"  {m['pseudo_noise']:5d}  {m['loss_total']:7.4f}"
              f"  {m['loss_ins']:.3f}  {m['loss_aug']:.3f}"
              f"  {m['loss_cen']:.3f}  {m['loss_cc']:.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
