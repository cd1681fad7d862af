"""Robustness probes for a trained classifier: sign attack plus patch occlusion.

Trains one model per loss on the glyph dataset and writes the occlusion
accuracy curve and attack numbers as CSV rows for external plotting.

Usage: python scripts/robustness_curves.py [--out runs/robustness.csv]
"""

import argparse
from pathlib import Path

import numpy as np

from demix import data as dd
from demix import evaluation as deval
from demix import network as net
from demix.losses import DMConfig, LossSpec
from demix.mixers import MixConfig


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/robustness.csv")
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--epsilon", type=float, default=8 / 255)
    ap.add_argument("--mask-seeds", type=int, default=5)
    args = ap.parse_args()

    full = dd.make_image_classes(2000, noise=0.25, shift=3, seed=0)
    train, val = dd.split(full, (1000, 1000), 0)
    specs = net.make_mlp(784, 256, 10)
    ratios = (0.0, 0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875, 1.0)

    rows = ["loss,metric,param,value"]
    for kind, eta in (("mce", 0.0), ("dm_ce", 0.1)):
        cfg = net.TrainConfig(epochs=args.epochs, batch_size=100, seed=1)
        params, _ = net.train_supervised(
            train, val, specs, MixConfig("cutmix", 0.2), LossSpec(kind, DMConfig(eta)), cfg
        )
        clean = deval.top1_accuracy(params, val)
        acc, err = deval.fgsm_attack(params, val, deval.AttackConfig(args.epsilon))
        rows.append(f"{kind},clean_top1,,{clean:.6f}")
        rows.append(f"{kind},fgsm_top1,{args.epsilon:.6f},{acc:.6f}")
        rows.append(f"{kind},fgsm_error,{args.epsilon:.6f},{err:.6f}")
        curves = []
        for ms in range(args.mask_seeds):
            rng = np.random.default_rng(1000 + ms)
            curve = deval.occlusion_eval(params, val, deval.OcclusionConfig(4, ratios), rng)
            curves.append([a for _, a in curve])
        mean_curve = np.mean(curves, axis=0)
        for ratio, acc in zip(ratios, mean_curve):
            rows.append(f"{kind},occlusion_top1,{ratio:g},{acc:.6f}")
        print(f"{kind}: clean {clean:.4f}, attacked {rows[-len(ratios)-2].split(',')[-1]}, "
              f"occlusion {[round(float(v), 3) for v in mean_curve]}")

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(rows) + "\n")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
