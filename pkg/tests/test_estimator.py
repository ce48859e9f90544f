import numpy as np
import numpy.testing as npt
import pytest

from ticalib import rotmath, synth, weights as weights_io
from ticalib.estimator import (
    FLAG_DEGENERATE,
    EstimateOut,
    OracleEstimator,
    ProcrustesEstimator,
    TICEstimator,
    Window,
    kabsch,
    oracle_estimate,
    procrustes_estimate,
    tic_forward,
)
from ticalib.sensor_model import GRAVITY, CalibState, apply_measurement_model, ImuFrame


def make_window(seed=0, duration=20.0, start=0, n=256, with_params=True, leakage=False):
    m = synth.gen_motion(synth.MotionSpec.active(duration_s=duration), seed)
    dist = synth.ParamDistribution()
    rng = np.random.default_rng(seed + 1000)
    drift = np.stack([synth.sample_params(dist, s == 5, rng)[0] for s in range(m.sensors)])
    offset = np.stack([synth.sample_params(dist, s == 5, rng)[1] for s in range(m.sensors)])
    if not with_params:
        drift = np.broadcast_to(np.eye(3), drift.shape).copy()
        offset = np.broadcast_to(np.eye(3), offset.shape).copy()
    ref_ori = m.orientations[start : start + n]
    ref_acc = m.accels[start : start + n]
    ori = np.einsum("sij,tsjk,skl->tsil", drift, ref_ori, offset)
    acc = np.einsum("sij,tsj->tsi", drift, ref_acc)
    if leakage:
        g = np.asarray(GRAVITY)
        acc = acc + (g[None, None, :] - np.einsum("sij,j->si", drift, g)[None])
    return Window(orientations=ori, accels=acc), ref_ori, ref_acc, drift, offset


def test_kabsch_projects_to_rotation():
    rng = np.random.default_rng(0)
    for _ in range(100):
        r = rotmath.random_rotation(rng)
        noisy = r + rng.normal(scale=0.05, size=(3, 3))
        proj = kabsch(noisy)
        assert rotmath.is_rotation(proj, tol=1e-9)
        assert rotmath.geodesic_deg(proj, r) < 15


def test_oracle_state_already_exact():
    win, ref_ori, ref_acc, drift, offset = make_window(1)
    gt = Window(orientations=ref_ori, accels=ref_acc, drift=drift, offset=offset)
    state = CalibState.identity(6)
    state.drift = drift.copy()
    state.offset = offset.copy()
    est = oracle_estimate(win, gt, state)
    npt.assert_allclose(rotmath.geodesic_deg(est.delta_drift, np.eye(3)), 0, atol=1e-9)
    npt.assert_allclose(rotmath.geodesic_deg(est.delta_offset, np.eye(3)), 0, atol=1e-9)


def test_oracle_identity_state_returns_truth():
    win, ref_ori, ref_acc, drift, offset = make_window(2)
    gt = Window(orientations=ref_ori, accels=ref_acc, drift=drift, offset=offset)
    est = oracle_estimate(win, gt, CalibState.identity(6))
    npt.assert_allclose(est.delta_drift, drift, atol=1e-12)
    npt.assert_allclose(est.delta_offset, offset, atol=1e-12)


def test_oracle_closed_loop_update_order():
    # applying drift <- drift @ delta and offset <- delta @ offset restores truth
    win, ref_ori, ref_acc, drift, offset = make_window(3)
    gt = Window(orientations=ref_ori, accels=ref_acc, drift=drift, offset=offset)
    rng = np.random.default_rng(99)
    state = CalibState.identity(6)
    state.drift = rotmath.random_rotations(rng, 6)
    state.offset = rotmath.random_rotations(rng, 6)
    est = oracle_estimate(win, gt, state)
    new_drift = np.einsum("sij,sjk->sik", state.drift, est.delta_drift)
    new_offset = np.einsum("sij,sjk->sik", est.delta_offset, state.offset)
    assert rotmath.geodesic_deg(new_drift, drift).max() < 1e-9
    assert rotmath.geodesic_deg(new_offset, offset).max() < 1e-9


def test_oracle_misaligned_window_errors():
    win, ref_ori, ref_acc, drift, offset = make_window(4)
    gt = Window(orientations=ref_ori[:100], accels=ref_acc[:100], drift=drift, offset=offset)
    with pytest.raises(ValueError, match="misaligned"):
        oracle_estimate(win, gt, CalibState.identity(6))
    gt2 = Window(orientations=ref_ori, accels=ref_acc)
    with pytest.raises(ValueError, match="labels"):
        oracle_estimate(win, gt2, CalibState.identity(6))


def test_procrustes_identity_on_clean_window():
    win, ref_ori, _, _, _ = make_window(5, with_params=False)
    est = procrustes_estimate(win, ref_ori)
    assert rotmath.geodesic_deg(est.delta_drift, np.eye(3)).max() < 1e-9
    assert rotmath.geodesic_deg(est.delta_offset, np.eye(3)).max() < 1e-9
    assert est.residuals.max() < 1e-12


def test_procrustes_recovery():
    win, ref_ori, _, drift, offset = make_window(6)
    est = procrustes_estimate(win, ref_ori)
    assert rotmath.geodesic_deg(est.delta_drift, drift).max() < 1e-6
    assert rotmath.geodesic_deg(est.delta_offset, offset).max() < 1e-6


def test_procrustes_monotone_residuals():
    win, ref_ori, _, _, _ = make_window(7)
    est = procrustes_estimate(win, ref_ori)
    for hist in est.extras["residual_history"]:
        assert (np.diff(hist) <= 1e-12).all()


def test_procrustes_degenerate_rd1():
    # constant orientation: solution family is non-unique
    rng = np.random.default_rng(8)
    pose = rotmath.random_rotation(rng)
    ref = np.broadcast_to(pose, (256, 1, 3, 3)).copy()
    drift = rotmath.random_rotation(rng)
    offset = rotmath.random_rotation(rng)
    meas = np.broadcast_to(drift @ pose @ offset, (256, 1, 3, 3)).copy()
    win = Window(orientations=meas, accels=np.zeros((256, 1, 3)))
    init_a = rotmath.random_rotation(rng)[None]
    init_b = rotmath.random_rotation(rng)[None]
    est_a = procrustes_estimate(win, ref, init_offset=init_a)
    est_b = procrustes_estimate(win, ref, init_offset=init_b)
    assert est_a.flags[0] == FLAG_DEGENERATE
    assert abs(est_a.residuals[0] - est_b.residuals[0]) < 1e-9
    apart = max(
        rotmath.geodesic_deg(est_a.delta_drift[0], est_b.delta_drift[0]),
        rotmath.geodesic_deg(est_a.delta_offset[0], est_b.delta_offset[0]),
    )
    assert apart > 5.0


def test_procrustes_gravity_refinement():
    win, ref_ori, ref_acc, drift, offset = make_window(9, leakage=True)
    est = procrustes_estimate(win, ref_ori, gravity_refine=True, ref_accels=ref_acc)
    tilt = est.extras["gravity_tilt_deg"]
    # recovered tilt must match each sensor's true drift tilt about gravity
    g = np.asarray(GRAVITY)
    for s in range(6):
        if np.isnan(tilt[s]):
            continue
        dg = drift[s] @ g
        true_tilt = np.degrees(np.arccos(np.clip(dg @ g / (g @ g), -1, 1)))
        assert abs(tilt[s] - true_tilt) < 0.5


def test_estimator_classes_share_interface():
    win, ref_ori, ref_acc, drift, offset = make_window(10)
    gt = Window(orientations=ref_ori, accels=ref_acc, drift=drift, offset=offset)
    state = CalibState.identity(6)
    for est in (OracleEstimator(), ProcrustesEstimator()):
        out = est.estimate(win, gt=gt, state=state)
        assert isinstance(out, EstimateOut)
        assert out.delta_drift.shape == (6, 3, 3)
        assert rotmath.is_rotation(out.delta_drift, tol=1e-6)


# ---------------------------------------------------------------------------
# TIC forward


def torch_forward_oracle(orientations, accels, bundle):
    """Independent forward implementation for the golden test."""
    import torch

    p = {k: torch.tensor(v, dtype=torch.float64) for k, v in bundle.tensors.items()}
    s = bundle.sensors
    n = accels.shape[0]
    acc = torch.tensor(accels / 30.0, dtype=torch.float64).reshape(n, 3 * s)
    rot = torch.tensor(orientations, dtype=torch.float64).reshape(n, 9 * s)
    x = torch.cat([acc, rot], dim=-1)
    h = torch.nn.functional.linear(x, p["embed.weight"], p["embed.bias"])
    if bundle.positional_encoding:
        dim = h.shape[-1]
        pos = torch.arange(n, dtype=torch.float64)[:, None]
        i = torch.arange(0, dim, 2, dtype=torch.float64)[None, :]
        ang = pos / torch.pow(torch.tensor(10000.0, dtype=torch.float64), i / dim)
        pe = torch.zeros(n, dim, dtype=torch.float64)
        pe[:, 0::2] = torch.sin(ang)
        pe[:, 1::2] = torch.cos(ang)
        h = h + pe

    def ln(t, prefix):
        return torch.nn.functional.layer_norm(
            t, (t.shape[-1],), p[f"{prefix}.gamma"], p[f"{prefix}.beta"], eps=1e-5
        )

    def attn(t, prefix):
        nn, d = t.shape
        heads, hd = 8, d // 8
        q = torch.nn.functional.linear(t, p[f"{prefix}.attn.q.weight"], p[f"{prefix}.attn.q.bias"])
        k = torch.nn.functional.linear(t, p[f"{prefix}.attn.k.weight"], p[f"{prefix}.attn.k.bias"])
        v = torch.nn.functional.linear(t, p[f"{prefix}.attn.v.weight"], p[f"{prefix}.attn.v.bias"])
        q = q.reshape(nn, heads, hd).permute(1, 0, 2)
        k = k.reshape(nn, heads, hd).permute(1, 0, 2)
        v = v.reshape(nn, heads, hd).permute(1, 0, 2)
        w = torch.softmax(q @ k.transpose(-2, -1) / hd**0.5, dim=-1)
        ctx = (w @ v).permute(1, 0, 2).reshape(nn, d)
        return torch.nn.functional.linear(ctx, p[f"{prefix}.attn.out.weight"], p[f"{prefix}.attn.out.bias"])

    def ffn(t, prefix):
        hmid = torch.nn.functional.gelu(
            torch.nn.functional.linear(t, p[f"{prefix}.ffn.w1"], p[f"{prefix}.ffn.b1"])
        )
        return torch.nn.functional.linear(hmid, p[f"{prefix}.ffn.w2"], p[f"{prefix}.ffn.b2"])

    def block(t, prefix):
        if bundle.pre_norm:
            t = t + attn(ln(t, f"{prefix}.ln1"), prefix)
            t = t + ffn(ln(t, f"{prefix}.ln2"), prefix)
        else:
            t = ln(t + attn(t, prefix), f"{prefix}.ln1")
            t = ln(t + ffn(t, prefix), f"{prefix}.ln2")
        return t

    for i in range(3):
        h = block(h, f"enc{i}")
    outs = []
    for head in ("tpm_d", "tpm_o"):
        g = block(h, f"{head}.enc")
        pooled = g.mean(dim=0)
        y = torch.nn.functional.linear(pooled, p[f"{head}.out.weight"], p[f"{head}.out.bias"])
        outs.append(y.reshape(s, 6).numpy())
    return outs[0], outs[1]


def test_tic_forward_golden_vs_torch():
    from ticalib.ticnet import forward_6d

    bundle = weights_io.seeded_bundle(42)
    m = synth.gen_motion(synth.MotionSpec.active(duration_s=10.0), 42)
    ori, acc = m.orientations[:256], m.accels[:256]
    got_d, got_o = forward_6d(ori, acc, bundle)
    exp_d, exp_o = torch_forward_oracle(ori, acc, bundle)
    npt.assert_allclose(got_d, exp_d, atol=1e-4)
    npt.assert_allclose(got_o, exp_o, atol=1e-4)


def test_tic_forward_output_rotations():
    bundle = weights_io.seeded_bundle(42)
    win, _, _, _, _ = make_window(11)
    est = tic_forward(win, bundle)
    for arr in (est.delta_drift, est.delta_offset):
        assert arr.shape == (6, 3, 3)
        err = np.abs(np.einsum("sij,skj->sik", arr, arr) - np.eye(3)[None])
        assert err.max() < 1e-5
        npt.assert_allclose(np.linalg.det(arr), 1.0, atol=1e-5)


def test_tic_forward_variable_length():
    bundle = weights_io.seeded_bundle(42)
    m = synth.gen_motion(synth.MotionSpec.active(duration_s=10.0), 12)
    for n in (128, 256):
        win = Window(orientations=m.orientations[:n], accels=m.accels[:n])
        est = tic_forward(win, bundle)
        assert est.delta_drift.shape == (6, 3, 3)


def test_tic_forward_deterministic():
    bundle = weights_io.seeded_bundle(42)
    win, _, _, _, _ = make_window(13)
    a = tic_forward(win, bundle)
    b = tic_forward(win, bundle)
    npt.assert_array_equal(a.delta_drift, b.delta_drift)
    npt.assert_array_equal(a.delta_offset, b.delta_offset)


def test_tic_estimator_class():
    bundle = weights_io.seeded_bundle(42)
    win, _, _, _, _ = make_window(14)
    out = TICEstimator(bundle).estimate(win)
    assert rotmath.is_rotation(out.delta_drift, tol=1e-5)


# ---------------------------------------------------------------------------
# Weight file IO


def test_weights_round_trip(tmp_path):
    bundle = weights_io.seeded_bundle(7)
    p = tmp_path / "w.ticw"
    weights_io.save_weights(bundle, p)
    back = weights_io.load_weights(p)
    assert back.positional_encoding == bundle.positional_encoding
    assert back.pre_norm == bundle.pre_norm
    assert set(back.tensors) == set(bundle.tensors)
    for k in bundle.tensors:
        npt.assert_array_equal(back.tensors[k], bundle.tensors[k])


def test_weights_missing_tensor(tmp_path):
    bundle = weights_io.seeded_bundle(7)
    del bundle.tensors["tpm_d.out.weight"]
    with pytest.raises(weights_io.WeightFormatError, match="tpm_d.out.weight"):
        bundle.validate()


def test_weights_bad_version(tmp_path):
    bundle = weights_io.seeded_bundle(7)
    p = tmp_path / "w.ticw"
    weights_io.save_weights(bundle, p)
    raw = bytearray(p.read_bytes())
    raw[4:8] = (99).to_bytes(4, "little")
    p.write_bytes(bytes(raw))
    with pytest.raises(weights_io.WeightFormatError, match="version"):
        weights_io.load_weights(p)


def test_weights_bad_magic(tmp_path):
    p = tmp_path / "w.ticw"
    p.write_bytes(b"NOPE" + bytes(16))
    with pytest.raises(weights_io.WeightFormatError, match="magic"):
        weights_io.load_weights(p)


def test_weights_shape_check():
    bundle = weights_io.seeded_bundle(7)
    bundle.tensors["embed.weight"] = bundle.tensors["embed.weight"][:, :10].copy()
    with pytest.raises(weights_io.WeightFormatError, match="embed.weight"):
        bundle.validate()
