"""Command-line entry point: every workflow as a subcommand.

Exit codes: 0 ok, 1 usage error, 2 data error, 3 numeric failure. All outputs
are deterministic under --seed.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import evalloop, maps, models, pipeline, recorder
from .expert import PidGains, WallFollower, corridor_plant, zn_tune
from .nn import LossSpec, grad_check, inverse_freq_weights, loss_ce
from .simworld import CameraConfig, CarState, Controls, lidar_scan, step

# Straight-corridor Ziegler-Nichols result, frozen; see `hallpilot tune-pid`.
DEFAULT_GAINS = PidGains(kp=0.6, ki=0.155, kd=0.5806)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


def _camera(args) -> CameraConfig:
    return CameraConfig(width=args.cam_w, height=args.cam_h)


def _add_camera_flags(p):
    p.add_argument("--cam-w", type=int, default=64, help="camera width in px")
    p.add_argument("--cam-h", type=int, default=48, help="camera height in px")


def _traj_csv(traj: evalloop.TrajectoryLog) -> str:
    rows = ["t,x,y,heading,steer"]
    for t, x, y, heading, steer in traj.entries:
        rows.append(f"{t:.3f},{x:.4f},{y:.4f},{heading:.4f},{steer:.4f}")
    return "\n".join(rows) + "\n"


def cmd_simulate(args) -> int:
    world = maps.load_map_or_path(args.map)
    if args.expert == "pid":
        policy = evalloop.PidPolicy(DEFAULT_GAINS, setpoint=args.setpoint,
                                    side="right", dt=args.dt)
    else:
        policy = evalloop.ConstantPolicy(0.0)
    traj = evalloop.rollout(policy, world, speed=args.speed, dt=args.dt,
                            max_t=args.max_t, camera=_camera(args))
    Path(args.out).write_text(_traj_csv(traj), encoding="utf-8")
    print(f"outcome={traj.outcome} duration={traj.duration:.2f}s "
          f"entries={len(traj.entries)} -> {args.out}")
    return 0


def cmd_tune_pid(args) -> int:
    world = maps.load_map_or_path(args.map)
    lo, hi, step_ = (float(v) for v in args.grid.split(":"))
    grid = list(np.arange(lo, hi + step_ / 2, step_))
    plant = corridor_plant(world, setpoint=args.setpoint, side="right",
                           speed=args.speed)
    result = zn_tune(plant, grid)
    print(f"ku={result.ku:.4f} tu={result.tu:.4f}")
    print(f"gains kp={result.gains.kp:.4f} ki={result.gains.ki:.4f} "
          f"kd={result.gains.kd:.4f}")
    return 0


def record_expert_dataset(world, out_dir, hz: float = 20.0, speed: float = 0.8,
                          duration: float = 60.0, camera=None,
                          gains: PidGains = DEFAULT_GAINS,
                          setpoint: float | None = None, slop: float = 0.05,
                          with_depth: bool = False):
    """Drive the PID expert and persist the synchronized dataset."""
    from .simworld import render_camera

    camera = camera or CameraConfig(width=64, height=48)
    if setpoint is None:
        setpoint = 1.5 if "loop" in world.name else 1.0
    dt = 1.0 / hz
    follower = WallFollower(gains=gains, setpoint=setpoint, side="right", dt=dt)
    x, y, th = world.start_pose
    state = CarState(x=x, y=y, heading=th, speed=speed)
    frames, labels = [], []
    t = 0.0
    for _ in range(int(duration * hz)):
        frame = render_camera(world, state, camera, timestamp=t)
        if not with_depth:
            frame.depth = None
        scan = lidar_scan(world, state, n_beams=181, fov=1.5 * math.pi,
                          max_range=10.0, timestamp=t)
        steer = follower.steer(scan)
        frames.append((t, frame))
        labels.append((t, steer))
        state = step(state, Controls(steer=steer, speed=speed), dt)
        t += dt
    pairs = recorder.sync_pairs(frames, labels, slop=slop)
    meta = {"map": world.name, "expert": "pid", "hz": hz, "speed": speed,
            "camera": {"width": camera.width, "height": camera.height,
                       "hfov": camera.hfov}}
    return recorder.write_dataset(pairs, out_dir, metadata=meta)


def cmd_record(args) -> int:
    world = maps.load_map_or_path(args.map)
    if args.teleop:
        from .server import serve
        print(f"teleop recording on port {args.port}; drive via the web UI, "
              f"Ctrl-C to stop")
        serve(world, port=args.port, tick_hz=args.hz, record_dir=args.out)
        return 0
    ds = record_expert_dataset(world, args.out, hz=args.hz, speed=args.speed,
                               duration=args.duration, camera=_camera(args),
                               with_depth=args.depth)
    print(f"recorded {len(ds)} samples -> {args.out}")
    return 0


def cmd_augment(args) -> int:
    ds = recorder.read_dataset(args.input)
    spec = pipeline.PipelineSpec.from_json(Path(args.pipeline).read_text())
    out = spec.apply_dataset(ds, seed=args.seed)
    frames = [(_FrameShim(s.rgb, s.depth, s.timestamp), s.angle)
              for s in out.samples]
    recorder.write_dataset(frames, args.output, metadata=out.metadata)
    print(f"{len(ds)} -> {len(out)} samples -> {args.output}")
    return 0


class _FrameShim:
    def __init__(self, rgb, depth, timestamp):
        self.rgb, self.depth, self.timestamp = rgb, depth, timestamp


def histogram_svg(counts: np.ndarray, width: int = 640, height: int = 360) -> str:
    """Bar chart of per-bin label counts as a standalone SVG."""
    n = len(counts)
    peak = max(int(counts.max()), 1)
    margin = 30
    bw = (width - 2 * margin) / n
    bars = []
    for i, c in enumerate(counts):
        bh = (height - 2 * margin) * (int(c) / peak)
        x = margin + i * bw
        y = height - margin - bh
        bars.append(f'<rect x="{x:.1f}" y="{y:.1f}" width="{bw * 0.9:.1f}" '
                    f'height="{bh:.1f}" fill="steelblue"><title>bin {i}: '
                    f'{int(c)}</title></rect>')
    axis = (f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
            f'y2="{height - margin}" stroke="black"/>')
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
            f'height="{height}">\n' + "\n".join(bars) + "\n" + axis + "\n</svg>\n")


def cmd_hist(args) -> int:
    ds = recorder.read_dataset(args.input)
    counts = recorder.label_histogram(ds, args.bins)
    Path(args.svg).write_text(histogram_svg(counts), encoding="utf-8")
    print(f"{len(ds)} labels, {args.bins} bins -> {args.svg}")
    print(" ".join(str(int(c)) for c in counts))
    return 0


def _build_spec(name: str, input_shape, head: str, n_bins: int):
    if name == "simple_cnn":
        return models.build_simple_cnn(input_shape, head, n_bins)
    if name == "pilotnet":
        return models.build_pilotnet(input_shape, head, n_bins)
    raise ValueError(f"unknown model {name!r}")


def cmd_train(args) -> int:
    ds = recorder.read_dataset(args.input)
    if args.config:
        config = models.TrainConfig.from_json(Path(args.config).read_text())
    else:
        config = models.TrainConfig()
    if args.epochs is not None:
        config.epochs = args.epochs
    if args.lr is not None:
        config.lr = args.lr
    config.seed = args.seed
    head = "regression" if args.loss == "mse" else "classification"
    n_bins = config.loss.n_bins

    if args.loss == "weighted_ce":
        pipe = pipeline.PipelineSpec(config.pipeline) if config.pipeline else None
        staged = pipe.apply_dataset(ds, seed=config.seed) if pipe else ds
        hist = recorder.label_histogram(staged, n_bins)
        weights = inverse_freq_weights(hist)
        config.loss = LossSpec(kind="weighted_ce", n_bins=n_bins,
                               class_weights=weights.tolist())
    else:
        config.loss = LossSpec(kind=args.loss, n_bins=n_bins,
                               sigma=config.loss.sigma, lam=config.loss.lam)

    if args.model == "ae_gru":
        return _train_ae_gru(ds, config, args)

    sample0 = ds.samples[0]
    pipe = pipeline.PipelineSpec(config.pipeline) if config.pipeline else None
    probe = sample0.rgb
    if pipe:
        probe, _ = pipe.apply_image(probe, sample0.angle, sample_id=sample0.id,
                                    seed=config.seed)
    input_shape = models.image_to_input(probe).shape
    spec = _build_spec(args.model, input_shape, head, n_bins)
    model, history = models.train(ds, spec, config)
    models.save_model(args.out, model, spec, config.pipeline)
    Path(str(args.out) + ".history.csv").write_text(history.to_csv(),
                                                    encoding="utf-8")
    print(f"trained {args.model} for {len(history.train_loss)} epochs, "
          f"final train loss {history.train_loss[-1]:.4f} -> {args.out}")
    return 0


def _train_ae_gru(ds, config, args) -> int:
    x = np.stack([models.image_to_input(s.rgb) for s in ds.samples])
    enc_spec, dec_spec = models.build_autoencoder(x.shape[1:], embedding=10)
    encoder, _, ae_losses = models.train_autoencoder(
        x, enc_spec, dec_spec, epochs=min(config.epochs, 20),
        lr=config.lr, seed=config.seed)
    seqs, last_idx = models.encode_sequences(encoder, x, seq_len=3)
    angles = ds.angles()[last_idx]
    head = "regression" if config.loss.kind == "mse" else "classification"
    gru_spec = models.build_gru_head(embedding=10, hidden=10, seq_len=3,
                                     head=head, n_bins=config.loss.n_bins)
    seq_samples = [recorder.Sample(id=i, rgb=np.zeros((1, 1, 3), np.uint8),
                                   angle=float(a)) for i, a in enumerate(angles)]

    # GRU trains on precomputed embeddings, so run its loop directly
    gru = gru_spec.instantiate(seed=config.seed)
    from .nn import make_optimizer
    opt = make_optimizer(config.optimizer, gru.params(), config.lr)
    rng = np.random.default_rng(config.seed)
    if config.loss.is_classification:
        y = np.array([pipeline.label_to_bin(float(a), config.loss.n_bins)
                      for a in angles])
    else:
        y = angles.astype(np.float32)
    for _ in range(config.epochs):
        idx = rng.permutation(len(seqs))
        for b0 in range(0, len(idx), config.batch_size):
            sel = idx[b0:b0 + config.batch_size]
            gru.zero_grad()
            out = gru.forward(seqs[sel])
            loss, grad = config.loss.compute(out, y[sel])
            gru.backward(grad.reshape(out.shape))
            opt.step()
    models.save_model(args.out, gru, gru_spec, config.pipeline)
    enc_path = Path(str(args.out) + ".enc")
    models.save_model(enc_path, encoder, enc_spec)
    print(f"autoencoder final loss {ae_losses[-1]:.5f}; GRU head -> {args.out} "
          f"(encoder -> {enc_path})")
    return 0


def cmd_eval(args) -> int:
    world = maps.load_map_or_path(args.map)
    model, spec, ops = models.load_model(args.ckpt)
    pipe = pipeline.PipelineSpec(ops) if ops else None
    enc_path = Path(str(args.ckpt) + ".enc")
    if spec.name == "gru_head" and enc_path.exists():
        encoder, _, _ = models.load_model(enc_path)
        policy = evalloop.SequencePolicy(encoder, model, spec, pipe,
                                         decode=args.decode)
    else:
        policy = evalloop.ModelPolicy(model, spec, pipe, decode=args.decode)
    camera = _camera(args)
    setpoint = 1.5 if "loop" in world.name else 1.0
    expert_policy = evalloop.PidPolicy(DEFAULT_GAINS, setpoint=setpoint,
                                       side="right", dt=args.dt)
    expert_traj = evalloop.rollout(expert_policy, world, speed=args.speed,
                                   dt=args.dt, max_t=args.max_t, camera=camera)
    model_traj = evalloop.rollout(policy, world, speed=args.speed, dt=args.dt,
                                  max_t=args.max_t, camera=camera)
    evalloop.export_overlay(expert_traj, model_traj, Path(args.overlay), world)

    mean_cte, max_cte = evalloop.cross_track_error(model_traj, world.centerline)
    report = evalloop.EvalReport(mean_cte=mean_cte, max_cte=max_cte,
                                 outcome=model_traj.outcome,
                                 lap_time=model_traj.duration,
                                 completion=evalloop.completion_fraction(
                                     model_traj, world),
                                 collisions=int(model_traj.outcome == "collided"))
    if args.dataset:
        ds = recorder.read_dataset(args.dataset)
        offline = evalloop.offline_metrics(model, spec, ds, pipe)
        report.accuracy = offline.accuracy
        report.confusion = offline.confusion
        report.pred_entropy = offline.pred_entropy
        report.straight_fraction = offline.straight_fraction
    Path(args.report).write_text(report.to_json() + "\n", encoding="utf-8")
    print(f"model outcome={model_traj.outcome} in {model_traj.duration:.2f}s "
          f"(expert {expert_traj.outcome} in {expert_traj.duration:.2f}s)")
    print(f"overlay -> {args.overlay}, report -> {args.report}")
    return 0


def cmd_gradcheck(args) -> int:
    if args.reduced:
        shape = (3, 20, 40) if args.model == "simple_cnn" else (3, 64, 64)
        per_tensor = 8
    else:
        shape = (3, 100, 200)
        per_tensor = 4
    spec = _build_spec(args.model, shape, "classification", 15)
    model = spec.instantiate(seed=args.seed)
    rng = np.random.default_rng(args.seed)
    x = rng.standard_normal((2,) + shape)
    t = np.array([3, 11])
    err = grad_check(model, loss_ce, x, t, max_per_tensor=per_tensor,
                     adapt_steps=2)
    print(f"{args.model} max relative grad error: {err:.3e}")
    if err > 1e-4:
        print("FAIL: exceeds 1e-4")
        return 3
    return 0


def cmd_serve(args) -> int:
    from .server import serve
    world = maps.load_map_or_path(args.map)
    print(f"serving {args.map} on http://127.0.0.1:{args.port} "
          f"(tick {args.tick} Hz)")
    serve(world, port=args.port, tick_hz=args.tick, record_dir=args.out)
    return 0


def build_parser() -> _Parser:
    p = _Parser(prog="hallpilot", description=__doc__)
    p.add_argument("--seed", type=int, default=0, help="global random seed")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="roll out an expert in a map")
    sp.add_argument("--map", required=True, help="bundled map name or world file")
    sp.add_argument("--expert", choices=["pid", "zero"], default="pid",
                    help="which expert drives")
    sp.add_argument("--out", required=True, help="trajectory CSV path")
    sp.add_argument("--speed", type=float, default=0.8, help="forward speed m/s")
    sp.add_argument("--dt", type=float, default=0.05, help="control period s")
    sp.add_argument("--max-t", type=float, default=120.0, help="time limit s")
    sp.add_argument("--setpoint", type=float, default=1.5,
                    help="wall-follow distance m")
    _add_camera_flags(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("tune-pid", help="Ziegler-Nichols tuning on a map")
    sp.add_argument("--map", required=True, help="bundled map name or world file")
    sp.add_argument("--grid", default="1.0:8.0:0.5",
                    help="kp sweep as lo:hi:step")
    sp.add_argument("--speed", type=float, default=0.8, help="forward speed m/s")
    sp.add_argument("--setpoint", type=float, default=1.0,
                    help="wall-follow distance m")
    sp.set_defaults(func=cmd_tune_pid)

    sp = sub.add_parser("record", help="record a demonstration dataset")
    sp.add_argument("--map", required=True, help="bundled map name or world file")
    sp.add_argument("--expert", choices=["pid"], default="pid",
                    help="automated expert kind")
    sp.add_argument("--teleop", action="store_true",
                    help="record from human teleop via the web server")
    sp.add_argument("--port", type=int, default=8080, help="teleop server port")
    sp.add_argument("--hz", type=float, default=20.0, help="recording rate")
    sp.add_argument("--out", required=True, help="dataset directory")
    sp.add_argument("--speed", type=float, default=0.8, help="forward speed m/s")
    sp.add_argument("--duration", type=float, default=60.0,
                    help="recording length s")
    sp.add_argument("--depth", action="store_true", help="store depth images")
    _add_camera_flags(sp)
    sp.set_defaults(func=cmd_record)

    sp = sub.add_parser("augment", help="apply a pipeline spec to a dataset")
    sp.add_argument("--in", dest="input", required=True, help="input dataset dir")
    sp.add_argument("--pipeline", required=True, help="pipeline spec JSON")
    sp.add_argument("--out", dest="output", required=True,
                    help="output dataset dir")
    sp.set_defaults(func=cmd_augment)

    sp = sub.add_parser("hist", help="label histogram as SVG")
    sp.add_argument("--in", dest="input", required=True, help="dataset dir")
    sp.add_argument("--bins", type=int, default=15, help="number of bins")
    sp.add_argument("--svg", required=True, help="output SVG path")
    sp.set_defaults(func=cmd_hist)

    sp = sub.add_parser("train", help="train a model on a dataset")
    sp.add_argument("--in", dest="input", required=True, help="dataset dir")
    sp.add_argument("--model", choices=["simple_cnn", "pilotnet", "ae_gru"],
                    default="simple_cnn", help="architecture")
    sp.add_argument("--loss", choices=["mse", "ce", "weighted_ce", "gaussian_ce"],
                    default="ce", help="training loss")
    sp.add_argument("--config", help="TrainConfig JSON file")
    sp.add_argument("--epochs", type=int, help="override config epochs")
    sp.add_argument("--lr", type=float, help="override config learning rate")
    sp.add_argument("--out", required=True, help="checkpoint path")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="closed-loop evaluation with overlay export")
    sp.add_argument("--ckpt", required=True, help="checkpoint path")
    sp.add_argument("--map", required=True, help="bundled map name or world file")
    sp.add_argument("--overlay", required=True, help="overlay SVG/CSV base path")
    sp.add_argument("--report", required=True, help="report JSON path")
    sp.add_argument("--dataset", help="dataset dir for offline metrics")
    sp.add_argument("--decode", choices=["argmax", "expect"], default="argmax",
                    help="classification steering decode")
    sp.add_argument("--speed", type=float, default=0.8, help="forward speed m/s")
    sp.add_argument("--dt", type=float, default=0.05, help="control period s")
    sp.add_argument("--max-t", type=float, default=120.0, help="time limit s")
    _add_camera_flags(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("gradcheck", help="finite-difference gradient check")
    sp.add_argument("--model", choices=["simple_cnn", "pilotnet"],
                    default="simple_cnn", help="architecture")
    sp.add_argument("--reduced", action="store_true",
                    help="use a reduced 20x40 input")
    sp.set_defaults(func=cmd_gradcheck)

    sp = sub.add_parser("serve", help="run the telemetry/teleop server")
    sp.add_argument("--map", required=True, help="bundled map name or world file")
    sp.add_argument("--port", type=int, default=8080, help="HTTP port")
    sp.add_argument("--tick", type=float, default=20.0, help="sim tick rate Hz")
    sp.add_argument("--out", help="recording directory")
    sp.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FloatingPointError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (ValueError, KeyError, OSError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
