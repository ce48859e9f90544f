"""Training loop and command-line entry point.

Reads TICD datasets, trains TICNet with Adam, writes a TICW weight file
and a loss-curve CSV (epoch, step, train_loss[, val_loss]).
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass, field

import numpy as np
import torch
from torch.utils.data import DataLoader

from .dataset import DatasetError, WindowDataset
from .loss import calibration_loss
from .model import TICNet
from .weights_io import save_ticw


@dataclass
class TrainConfig:
    data: list = field(default_factory=list)
    val: list = field(default_factory=list)
    out: str = "tic.ticw"
    loss_csv: str | None = None
    epochs: int = 10
    batch_size: int = 128
    lr: float = 1e-3
    seed: int = 0
    positional_encoding: bool = True
    pre_norm: bool = True


def evaluate(model: TICNet, loader) -> float:
    model.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for feats, ld, lo in loader:
            pd, po = model(feats)
            total += calibration_loss(pd, po, ld, lo).item() * feats.shape[0]
            count += feats.shape[0]
    model.train()
    return total / max(count, 1)


def train(cfg: TrainConfig, log=None) -> TICNet:
    torch.manual_seed(cfg.seed)
    ds = WindowDataset(cfg.data)
    model = TICNet(
        sensors=ds.sensors,
        positional_encoding=cfg.positional_encoding,
        pre_norm=cfg.pre_norm,
    )
    expected_feat = 12 * ds.sensors
    if ds.features.shape[-1] != expected_feat:
        raise DatasetError(f"dataset features {ds.features.shape[-1]} != {expected_feat}")
    val_loader = None
    if cfg.val:
        val_ds = WindowDataset(cfg.val)
        if val_ds.sensors != ds.sensors:
            raise DatasetError("validation sensor count differs from training set")
        val_loader = DataLoader(val_ds, batch_size=cfg.batch_size)
    loader = DataLoader(
        ds,
        batch_size=cfg.batch_size,
        shuffle=True,
        generator=torch.Generator().manual_seed(cfg.seed),
    )
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    rows = []
    step = 0
    for epoch in range(cfg.epochs):
        for feats, ld, lo in loader:
            opt.zero_grad()
            pd, po = model(feats)
            loss = calibration_loss(pd, po, ld, lo)
            loss.backward()
            opt.step()
            step += 1
            rows.append((epoch, step, loss.item(), ""))
        if val_loader is not None:
            vl = evaluate(model, val_loader)
            rows.append((epoch, step, "", vl))
            if log:
                log(f"epoch {epoch}: train {rows[-2][2]:.6f} val {vl:.6f}")
        elif log and rows:
            log(f"epoch {epoch}: train {rows[-1][2]:.6f}")
    save_ticw(
        model.export_tensors(),
        cfg.out,
        positional_encoding=cfg.positional_encoding,
        pre_norm=cfg.pre_norm,
    )
    if cfg.loss_csv:
        with open(cfg.loss_csv, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["epoch", "step", "train_loss", "val_loss"])
            w.writerows(rows)
    return model


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="tictrainer", description=__doc__)
    ap.add_argument("--data", nargs="+", required=True, help="TICD training file(s)")
    ap.add_argument("--val", nargs="*", default=[], help="TICD validation file(s)")
    ap.add_argument("--out", required=True, help="output TICW path")
    ap.add_argument("--loss-csv", default=None)
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--batch-size", type=int, default=128)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--no-positional-encoding", action="store_true")
    ap.add_argument("--post-norm", action="store_true")
    args = ap.parse_args(argv)
    cfg = TrainConfig(
        data=args.data,
        val=args.val,
        out=args.out,
        loss_csv=args.loss_csv,
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        seed=args.seed,
        positional_encoding=not args.no_positional_encoding,
        pre_norm=not args.post_norm,
    )
    try:
        train(cfg, log=lambda msg: print(msg, flush=True))
    except (DatasetError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
