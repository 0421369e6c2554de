"""Loss functions and the truncated-BPTT training loop.

The loss is computed every `loss_every` steps over that segment (L1 +
0.5 (1 - SSIM) reconstruction term plus flow-warped temporal consistency
from step `l0` on); gradients flow through the whole segment, then the
recurrent state is detached at the boundary.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import quality
from .autodiff import Tensor
from .errors import ConfigError, DivergenceError, ShapeError
from .events import EventWindow, encode_voxel_grid, normalize_nonzero, slice_temporal_bins
from .synthetic import generate_events


@dataclass
class TrainConfig:
    lr: float = 0.002
    batch: int = 2
    epochs: int = 100
    lambda_tc: float = 1.0
    l0: int = 2
    loss_every: int = 5
    seq_len: int = 40
    bins_per_window: int = 1
    seed: int = 0

    def __post_init__(self):
        for name in ("lr", "epochs", "batch", "loss_every", "seq_len", "bins_per_window"):
            if getattr(self, name) <= 0 and name != "lr":
                raise ConfigError(f"{name} must be positive")
        if self.lr < 0 or self.lambda_tc < 0 or self.l0 < 0:
            raise ConfigError("lr, lambda_tc, and l0 must be non-negative")


def _as_batch(x):
    if isinstance(x, Tensor):
        t = x
    else:
        t = Tensor(np.asarray(x, dtype=np.float64))
    if t.ndim == 2:
        t = ad.reshape(t, (1, 1) + t.shape)
    if t.ndim != 4:
        raise ShapeError(f"expected (N,1,H,W) or (H,W), got {t.shape}")
    return t


def _diff_histogram_normalize(pred):
    """Percentile rescale with the percentiles treated as constants, so
    the affine map stays differentiable."""
    p1, p99 = np.percentile(pred.data, [1, 99])
    if p99 <= p1:
        return pred * 0.0 + 0.5
    return ad.clip((pred - p1) * (1.0 / (p99 - p1)), 0.0, 1.0)


def _diff_ssim(a, b, window_size=11, sigma=1.5, k1=0.01, k2=0.03):
    win = Tensor(quality.gaussian_window(window_size, sigma)[None, None])

    def stats(x):
        return ad.conv2d(x, win)

    mu_a, mu_b = stats(a), stats(b)
    saa = stats(a * a) - mu_a * mu_a
    sbb = stats(b * b) - mu_b * mu_b
    sab = stats(a * b) - mu_a * mu_b
    c1, c2 = k1 ** 2, k2 ** 2
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * sab + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (saa + sbb + c2)
    return (num / den).mean()


def reconstruction_loss(pred, gt):
    """L1 + 0.5 (1 - SSIM) between the histogram-normalized prediction and
    the ground-truth frame (already in [0, 1])."""
    pred, gt = _as_batch(pred), _as_batch(gt)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} vs ground truth {gt.shape}")
    pred_n = _diff_histogram_normalize(pred)
    l1 = (pred_n - gt).abs().mean()
    return l1 + 0.5 * (1.0 - _diff_ssim(pred_n, gt))


def temporal_consistency_loss(i_k, i_prev, flow, mask=None):
    """Mean |I_k - warp(I_{k-1}, flow)| over valid pixels.

    `flow` is the known integer (dy, dx) translation mapping frame k-1
    onto frame k; warping is a wrap-around roll.
    """
    i_k, i_prev = _as_batch(i_k), _as_batch(i_prev)
    dy, dx = int(flow[0]), int(flow[1])
    warped = ad.roll(i_prev, (dy, dx), axis=(2, 3))
    diff = (i_k - warped).abs()
    if mask is None:
        return diff.mean()
    mask = np.asarray(mask, dtype=np.float64)
    return (diff * mask).sum() / max(mask.sum(), 1.0)


def total_loss(preds, gts, flows, cfg):
    """Sum of per-step reconstruction losses plus lambda-weighted temporal
    consistency from step l0 on (k indexes the lists from 0)."""
    if not (len(preds) == len(gts) == len(flows)):
        raise ShapeError("preds, gts, and flows must have equal length")
    loss = None
    for k, (pred, gt) in enumerate(zip(preds, gts)):
        term = reconstruction_loss(pred, gt)
        if k >= cfg.l0 and cfg.lambda_tc > 0:
            term = term + cfg.lambda_tc * temporal_consistency_loss(
                pred, preds[k - 1], flows[k])
        loss = term if loss is None else loss + term
    return loss if loss is not None else Tensor(0.0)


def scene_to_bins(scene, n_bins=1):
    """Events -> per-frame-interval voxel bins, nonzero-normalized.

    Returns (bins, gts, flows) aligned per network step: the bins of window
    s are followed by ground-truth frame s. With n_bins == 1 there is one
    step per frame interval.
    """
    events, frames, flows = generate_events(scene)
    h, w = scene.texture.shape
    bins, gts, step_flows = [], [], []
    for s in range(1, len(frames)):
        t0, t1 = (s - 1) * scene.dt, s * scene.dt
        in_window = [ev for ev in events if t0 < ev.t <= t1]
        window = EventWindow(in_window, t0, t1, h, w)
        grid = normalize_nonzero(encode_voxel_grid(window, n_bins))
        for plane in slice_temporal_bins(grid):
            bins.append(plane)
            gts.append(frames[s])
            step_flows.append(flows[s])
    return bins, gts, step_flows


def _batched_data(scenes, cfg):
    """Group per-scene step data into batches stacked along axis 0."""
    per_scene = [scene_to_bins(s, cfg.bins_per_window) for s in scenes]
    steps = min(len(d[0]) for d in per_scene)
    batches = []
    for start in range(0, len(per_scene), cfg.batch):
        group = per_scene[start:start + cfg.batch]
        bins = [np.stack([g[0][t] for g in group])[:, None] for t in range(steps)]
        gts = [np.stack([g[1][t] for g in group])[:, None] for t in range(steps)]
        flows = [group[0][2][t] for t in range(steps)]  # shared trajectory per batch
        batches.append((bins, gts, flows))
    return batches


def train(net, scenes, cfg, log_path=None, progress=None):
    """Truncated-BPTT training; returns the per-epoch metrics log.

    Batching stacks scenes along the batch axis, so scenes grouped into
    one batch must share a trajectory (single-scene batches always work).
    """
    rng = np.random.default_rng(cfg.seed)
    del rng  # seed reserved for future augmentation; data is deterministic
    batches = _batched_data(scenes, cfg)
    optimizer = ad.Adam(net.parameters(), lr=cfg.lr)
    history = []
    for epoch in range(cfg.epochs):
        epoch_loss = 0.0
        n_segments = 0
        spike_ones = 0.0
        spike_elems = 0
        last_preds, last_gts = [], []
        for bins, gts, flows in batches:
            net.train_mode(True)
            net.reset_state()
            prev_pred = None  # detached tail of the previous segment
            steps = min(len(bins), cfg.seq_len)
            for seg_start in range(0, steps, cfg.loss_every):
                seg = range(seg_start, min(seg_start + cfg.loss_every, steps))
                preds = []
                for k in seg:
                    monitor = {}
                    pred = net.forward_step(bins[k], monitor=monitor)
                    preds.append(pred)
                    for spikes in monitor.values():
                        spike_ones += float(spikes.sum())
                        spike_elems += spikes.size
                loss = None
                for idx, k in enumerate(seg):
                    term = reconstruction_loss(preds[idx], gts[k])
                    if k >= cfg.l0 and cfg.lambda_tc > 0:
                        prev = preds[idx - 1] if idx > 0 else prev_pred
                        if prev is not None:
                            term = term + cfg.lambda_tc * temporal_consistency_loss(
                                preds[idx], prev, flows[k])
                    loss = term if loss is None else loss + term
                value = loss.item()
                if not np.isfinite(value):
                    raise DivergenceError(
                        f"loss became {value} at epoch {epoch}, step {seg_start}")
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                net.detach_state()
                prev_pred = preds[-1].detach()
                epoch_loss += value
                n_segments += 1
                last_preds = [p.data for p in preds]
                last_gts = [gts[k] for k in seg]
        mse_val, ssim_val = _segment_metrics(last_preds, last_gts)
        record = {
            "epoch": epoch,
            "loss": epoch_loss / max(n_segments, 1),
            "mse": mse_val,
            "ssim": ssim_val,
            "spike_rate": spike_ones / max(spike_elems, 1),
        }
        history.append(record)
        if progress is not None:
            progress(record)
    net.train_mode(False)
    if log_path is not None:
        write_metrics_csv(log_path, history)
    return history


def _segment_metrics(preds, gts):
    if not preds:
        return float("nan"), float("nan")
    mses, ssims = [], []
    for pred, gt in zip(preds, gts):
        p = quality.histogram_normalize(pred[0, 0])
        g = gt[0, 0] if gt.ndim == 4 else gt
        mses.append(quality.mse(p, g))
        try:
            ssims.append(quality.ssim(p, g))
        except Exception:
            ssims.append(float("nan"))
    return float(np.mean(mses)), float(np.mean(ssims))


def write_metrics_csv(path, history):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "loss", "mse", "ssim", "spike_rate"])
        writer.writeheader()
        for row in history:
            writer.writerow(row)


def evaluate_reconstruction(net, bins, gts):
    """Histogram-normalized MSE/SSIM of a full forward pass vs ground truth."""
    images = net.forward_sequence(bins)
    mses, ssims = [], []
    for img, gt in zip(images, gts):
        p = quality.histogram_normalize(img)
        g = gt[0, 0] if np.asarray(gt).ndim == 4 else np.asarray(gt)
        mses.append(quality.mse(p, g))
        ssims.append(quality.ssim(p, g))
    return float(np.mean(mses)), float(np.mean(ssims))
