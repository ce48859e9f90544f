"""Calibration loss: sum of per-head mean-squared errors on 6D outputs."""

from __future__ import annotations

import torch


def calibration_loss(pred_d, pred_o, label_d, label_o) -> torch.Tensor:
    """MSE(pred_d, label_d) + MSE(pred_o, label_o), shapes (..., S, 6)."""
    if pred_d.shape != label_d.shape or pred_o.shape != label_o.shape:
        raise ValueError("prediction/label shape mismatch")
    return torch.mean((pred_d - label_d) ** 2) + torch.mean((pred_o - label_o) ** 2)
