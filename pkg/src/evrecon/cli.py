"""Command-line pipeline: simulate scenes, voxelize event files, train,
reconstruct, probe the temporal receptive field, profile energy, and run
gradient checks. All outputs land under --out; runs are deterministic
given --seed."""

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import checkpoint as ckpt
from . import energy as energy_mod
from . import quality
from .errors import ConfigError, EvreconError
from .events import (EventWindow, encode_voxel_grid, load_events,
                     normalize_nonzero, save_events, slice_temporal_bins,
                     split_windows)
from .model import Network, NetworkSpec
from .neurons import NeuronConfig, lif_step, surrogate_grad
from .synthetic import SyntheticScene, generate_events, random_scene
from .training import TrainConfig, train


def write_pgm(path, img):
    """8-bit binary PGM; values in [0,1] scaled by 255, rounding half up."""
    data = np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ConfigError(f"{path}: not a binary PGM")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8, count=h * w).reshape(h, w) / 255.0


def _load_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _scene_from_config(cfg, seed):
    rng = np.random.default_rng(seed)
    height = cfg.get("height", 32)
    width = cfg.get("width", 32)
    steps = cfg.get("steps", 41)
    contrast = cfg.get("contrast", 0.15)
    if "motion" in cfg:
        dy, dx = cfg["motion"]
        scene = random_scene(height, width, steps, rng, contrast=contrast)
        scene.trajectory = [(dy, dx)] * (steps - 1)
    else:
        scene = random_scene(height, width, steps, rng, contrast=contrast,
                             max_shift=cfg.get("max_shift", 1))
    return scene


def _scene_from_meta(meta):
    return SyntheticScene(texture=np.array(meta["texture"]),
                          trajectory=[tuple(t) for t in meta["trajectory"]],
                          contrast=meta["contrast"], dt=meta["dt"])


def _events_to_bins(events, sensor, args):
    h, w = sensor
    if args.window_ms is not None:
        windows = split_windows(events, h, w, duration=args.window_ms / 1000.0)
    elif args.window_count is not None:
        windows = split_windows(events, h, w, count=args.window_count)
    else:
        raise ConfigError("give --window-ms or --window-count")
    bins = []
    for window in windows:
        grid = normalize_nonzero(encode_voxel_grid(window, args.bins))
        bins.extend(slice_temporal_bins(grid))
    return bins, windows


# -- commands ----------------------------------------------------------------

def cmd_simulate(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = _load_json(args.config) if args.config else {}
    scene = _scene_from_config(cfg, args.seed)
    events, frames, flows = generate_events(scene)
    h, w = scene.texture.shape
    save_events(out / "events.txt", events, sensor_h=h, sensor_w=w)
    for i, frame in enumerate(frames):
        write_pgm(out / f"gt_{i:04d}.pgm", frame)
    meta = {
        "height": h, "width": w, "steps": scene.steps, "dt": scene.dt,
        "contrast": scene.contrast, "trajectory": list(scene.trajectory),
        "flows": flows, "texture": scene.texture.tolist(), "seed": args.seed,
    }
    with open(out / "meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh)
    print(f"wrote {len(events)} events and {len(frames)} frames to {out}")
    return 0


def cmd_voxelize(args):
    events, sensor = load_events(args.events)
    if sensor is None:
        if args.height is None or args.width is None:
            raise ConfigError("event file has no size header; pass --height/--width")
        sensor = (args.height, args.width)
    h, w = sensor
    if args.window_ms is not None:
        windows = split_windows(events, h, w, duration=args.window_ms / 1000.0)
    elif args.window_count is not None:
        windows = split_windows(events, h, w, count=args.window_count)
    else:
        raise ConfigError("give --window-ms or --window-count")
    tensors = {}
    spans = []
    for i, window in enumerate(windows):
        grid = encode_voxel_grid(window, args.bins)
        tensors[f"grid_{i:04d}"] = grid.data
        spans.append([grid.t0, grid.t1])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    ckpt.save_tensors(out, tensors,
                      meta={"bins": args.bins, "height": h, "width": w, "spans": spans})
    print(f"wrote {len(windows)} voxel grids to {out}")
    return 0


def cmd_train(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = NetworkSpec(**_load_json(args.spec))
    cfg = TrainConfig(**_load_json(args.train_config)) if args.train_config else TrainConfig()
    if args.epochs is not None:
        cfg.epochs = args.epochs
    cfg.seed = args.seed
    meta = _load_json(Path(args.data) / "meta.json")
    scene = _scene_from_meta(meta)
    net = Network(spec, seed=args.seed)
    if cfg.epochs > 0:
        train(net, [scene], cfg, log_path=out / "metrics.csv",
              progress=lambda r: print(f"epoch {r['epoch']}: loss {r['loss']:.4f} "
                                       f"mse {r['mse']:.4f}"))
    else:
        with open(out / "metrics.csv", "w", newline="") as fh:
            csv.DictWriter(fh, fieldnames=["epoch", "loss", "mse", "ssim",
                                           "spike_rate"]).writeheader()
    net.save(out / "checkpoint.spkt")
    print(f"saved checkpoint to {out / 'checkpoint.spkt'}")
    return 0


def cmd_reconstruct(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    net = Network.load(args.checkpoint)
    events, sensor = load_events(args.events)
    if sensor is None:
        sensor = (net.spec.height, net.spec.width)
    bins, _ = _events_to_bins(events, sensor, args)
    images = net.forward_sequence(bins)
    for i, img in enumerate(images):
        write_pgm(out / f"recon_{i:04d}.pgm", quality.histogram_normalize(img))
    print(f"wrote {len(images)} reconstructions to {out}")
    return 0


def cmd_probe(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    net = Network.load(args.checkpoint)
    events, sensor = load_events(args.events)
    if sensor is None:
        sensor = (net.spec.height, net.spec.width)
    bins, _ = _events_to_bins(events, sensor, args)
    h, w = sensor
    empty = np.zeros((h, w))
    feed = [b if i < args.cutoff else empty for i, b in enumerate(bins)]
    gt_frames = None
    if args.gt:
        gt_dir = Path(args.gt)
        gt_frames = [read_pgm(p) for p in sorted(gt_dir.glob("gt_*.pgm"))]

    rows = []
    monitors = []
    images = net.forward_sequence(feed, monitor_list=monitors)
    for i, (img, monitor) in enumerate(zip(images, monitors)):
        ones = sum(float(s.sum()) for s in monitor.values())
        elems = sum(s.size for s in monitor.values())
        rate = ones / elems if elems else 0.0
        row = {"step": i, "mse": "", "ssim": "", "spike_rate": rate,
               "after_cutoff": int(i >= args.cutoff)}
        if gt_frames:
            # events of window i reconstruct frame i+1
            gt = gt_frames[min(i + 1, len(gt_frames) - 1)]
            p = quality.histogram_normalize(img)
            row["mse"] = quality.mse(p, gt)
            try:
                row["ssim"] = quality.ssim(p, gt)
            except EvreconError:
                pass
        rows.append(row)
    csv_path = out / "probe.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["step", "mse", "ssim",
                                                "spike_rate", "after_cutoff"])
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {csv_path}")
    return 0


def cmd_profile(args):
    if args.paper_rates:
        name = args.paper_rates
        if name not in energy_mod.PUBLISHED:
            raise ConfigError(f"unknown operating point {name!r}; "
                              f"choose from {sorted(energy_mod.PUBLISHED)}")
        p = energy_mod.PUBLISHED[name]
        joules = energy_mod.energy_from_totals(p["op_ann"], p["op_snn"], p["rate"])
        ref = energy_mod.PUBLISHED["e2vid-lstm"]
        ref_joules = energy_mod.energy_from_totals(ref["op_ann"], ref["op_snn"], ref["rate"])
        result = {"operating_point": name, "energy_joules": joules,
                  "normalized_energy": joules / ref_joules}
        if p["op_snn"] > 0:
            result["ann_snn_ratio"] = energy_mod.ann_snn_ratio(
                1.0, p["rate"], p["mp_fraction"])
        print(json.dumps(result, indent=2))
        return 0

    if args.checkpoint:
        net = Network.load(args.checkpoint)
        spec = net.spec
    elif args.spec:
        spec = NetworkSpec(**_load_json(args.spec))
        net = Network(spec, seed=args.seed)
    else:
        raise ConfigError("give --checkpoint, --spec, or --paper-rates")
    counts = energy_mod.count_ann_ops(spec)
    stats = None
    empty_rate = None
    if args.events:
        events, sensor = load_events(args.events)
        if sensor is None:
            sensor = (spec.height, spec.width)
        bins, _ = _events_to_bins(events, sensor, args)
        stats = energy_mod.measure_spike_rates(net, [bins], op_counts=counts)
        empty_bins = [np.zeros((spec.height, spec.width))] * 10
        empty_stats = energy_mod.measure_spike_rates(net, [empty_bins], op_counts=counts)
        empty_rate = empty_stats.overall_neuron_weighted
    report = energy_mod.estimate_energy(counts, stats, empty_input_rate=empty_rate)
    print(energy_mod.format_report(counts, report, stats))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "energy.json", "w", encoding="utf-8") as fh:
            fh.write(report.to_json())
    return 0


def cmd_gradcheck(args):
    rng = np.random.default_rng(args.seed)
    rows = []

    def check(name, f, x, tol=1e-4):
        err = ad.finite_difference_check(f, ad.Tensor(x))
        rows.append((name, err, tol, err < tol))

    x = rng.standard_normal((2, 3))
    check("sum_of_squares", lambda t: (t * t).sum(), x, tol=1e-6)
    check("sigmoid_mean", lambda t: ad.sigmoid(t).mean(), x)
    w = rng.standard_normal((2, 2, 3, 3)) * 0.5
    xin = rng.standard_normal((1, 2, 5, 5))
    check("conv_sigmoid", lambda t: ad.sigmoid(ad.conv2d(t, ad.Tensor(w), padding=1)).sum(), xin)
    check("upsample", lambda t: (ad.upsample_nearest2x(t) ** 2.0).sum(), xin)

    # all-MP toy chain (smooth end to end)
    def mp_chain(t):
        from .neurons import mp_step
        v = ad.Tensor(np.zeros(t.shape))
        loss = None
        for _ in range(3):
            out, v = mp_step(v, t, 2.0)
            term = (out * out).sum()
            loss = term if loss is None else loss + term
        return loss
    check("mp_lif_3step", mp_chain, rng.standard_normal(4))

    # frozen-spike-pattern analytic check on a 3-step scalar LIF chain
    from .neurons import lif_step as _lif
    ncfg = NeuronConfig(kind="LIF", tau=2.0)
    w0 = 0.7
    xs = [1.3, 0.2, 0.9]
    def lif_loss(wt):
        v = ad.Tensor(0.0)
        total = None
        for xv in xs:
            s, v = _lif(v, wt * xv, ncfg)
            total = s if total is None else total + s
        return total
    wt = ad.Tensor(np.array(w0), requires_grad=True)
    lif_loss(wt).backward()
    analytic = float(wt.grad)
    manual = _manual_lif_grad(w0, xs, ncfg)
    rows.append(("lif_3step_surrogate", abs(analytic - manual), 1e-10,
                 abs(analytic - manual) < 1e-10))

    check("constant_loss", lambda t: (t * 0.0).sum(), rng.standard_normal(3), tol=1e-8)

    ok = True
    print(f"{'check':<24}{'max_err':>12}{'tol':>10}  status")
    for name, err, tol, passed in rows:
        ok &= passed
        print(f"{name:<24}{err:>12.3e}{tol:>10.0e}  {'pass' if passed else 'FAIL'}")
    return 0 if ok else 1


def _manual_lif_grad(w, xs, cfg):
    """Hand-unrolled surrogate-chain gradient of sum of spikes w.r.t. w."""
    v = 0.0
    grad_total = 0.0
    dv_dw = 0.0
    for xv in xs:
        v_charge = v + (1.0 / cfg.tau) * (-(v - cfg.v_rest) + w * xv)
        dvc_dw = (1.0 - 1.0 / cfg.tau) * dv_dw + (1.0 / cfg.tau) * xv
        s = 1.0 if v_charge - cfg.v_th >= 0 else 0.0
        grad_total += surrogate_grad(v_charge - cfg.v_th) * dvc_dw
        # reset gate is constant during backward
        v = cfg.v_reset if s == 1.0 else v_charge
        dv_dw = 0.0 if s == 1.0 else dvc_dw
    return grad_total


# -- argument parsing --------------------------------------------------------

def _add_window_flags(p):
    p.add_argument("--bins", type=int, default=5)
    p.add_argument("--window-ms", type=float, default=None)
    p.add_argument("--window-count", type=int, default=None)


def build_parser():
    parser = argparse.ArgumentParser(prog="evrecon",
                                     description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic scene: events + frames")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("voxelize", help="encode an event file into voxel grids")
    p.add_argument("--events", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--height", type=int, default=None)
    p.add_argument("--width", type=int, default=None)
    _add_window_flags(p)
    p.set_defaults(func=cmd_voxelize)

    p = sub.add_parser("train", help="train a network on simulated data")
    p.add_argument("--spec", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--train-config", default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("reconstruct", help="run a checkpoint over an event file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--events", required=True)
    p.add_argument("--out", required=True)
    _add_window_flags(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("probe", help="empty-input probe of the temporal receptive field")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--events", required=True)
    p.add_argument("--cutoff", type=int, required=True)
    p.add_argument("--gt", default=None)
    p.add_argument("--out", required=True)
    _add_window_flags(p)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("profile", help="synaptic-op counts and energy estimate")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--spec", default=None)
    p.add_argument("--events", default=None)
    p.add_argument("--paper-rates", default=None,
                   help="published operating point: evsnn, pa-evsnn, e2vid-lstm, e2vid-gru")
    p.add_argument("--out", default=None)
    _add_window_flags(p)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EvreconError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
