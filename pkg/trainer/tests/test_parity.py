"""Cross-component parity: weights exported here must reproduce the same
forward outputs when reloaded by the inference-side implementation."""

import numpy as np
import torch

from conftest import make_ticd
from tictrainer.dataset import WindowDataset
from tictrainer.model import TICNet
from tictrainer.train import TrainConfig, train
from tictrainer.weights_io import save_ticw


def test_exported_weights_match_inference_side(tmp_path):
    from ticalib.synth import read_dataset
    from ticalib.ticnet import forward_6d
    from ticalib.weights import load_weights

    data = make_ticd(tmp_path / "train.ticd", 32, 100)
    held = make_ticd(tmp_path / "held.ticd", 10, 40000)
    cfg = TrainConfig(
        data=[data],
        out=str(tmp_path / "parity.ticw"),
        epochs=1,
        batch_size=16,
        seed=21,
    )
    model = train(cfg)
    model.eval()

    bundle = load_weights(cfg.out)
    assert bundle.positional_encoding and bundle.pre_norm

    ds = WindowDataset(held)
    samples, _, _ = read_dataset(held)
    worst = 0.0
    with torch.no_grad():
        pd, po = model(ds.features)
    for i, smp in enumerate(samples):
        d6, o6 = forward_6d(smp.orientations, smp.accels, bundle)
        worst = max(
            worst,
            np.abs(pd[i].numpy() - d6).max(),
            np.abs(po[i].numpy() - o6).max(),
        )
    print(f"[{'PASS' if worst < 1e-4 else 'FAIL'}] trainer parity: "
          f"max forward mismatch {worst:.2e} over 10 held-out windows")
    assert worst < 1e-4


def test_flag_parity_round_trip(tmp_path):
    from ticalib.weights import load_weights

    model = TICNet(6, positional_encoding=False, pre_norm=True)
    path = tmp_path / "flags.ticw"
    save_ticw(model.export_tensors(), path, positional_encoding=False, pre_norm=True)
    bundle = load_weights(path)
    assert bundle.positional_encoding is False and bundle.pre_norm is True
