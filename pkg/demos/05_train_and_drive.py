"""End-to-end behavioral cloning: record, rebalance, train, drive.

Records a PID lap of the rectangle loop, trains the 3-conv CNN on the
rebalanced + reflected dataset, then rolls the learned policy out in the same
world and exports an expert-vs-model overlay.

Run:  python demos/05_train_and_drive.py   (a few minutes)
"""

from pathlib import Path

from hallpilot import maps
from hallpilot.cli import DEFAULT_GAINS, record_expert_dataset
from hallpilot.evalloop import ModelPolicy, PidPolicy, export_overlay, rollout
from hallpilot.models import TrainConfig, build_simple_cnn, save_model, train
from hallpilot.nn import LossSpec
from hallpilot.simworld import CameraConfig

OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

world = maps.get_map("rect_loop")
cam = CameraConfig(width=32, height=24)
ds = record_expert_dataset(world, OUT / "lap_dataset", hz=20.0, speed=0.8,
                           duration=55.0, camera=cam)
print(f"recorded {len(ds)} samples")

spec = build_simple_cnn((3, 24, 32), "classification", 15)
cfg = TrainConfig(epochs=6, batch_size=32, lr=1e-3, seed=0, val_fraction=0.1,
                  loss=LossSpec(kind="ce", n_bins=15),
                  pipeline=[{"op": "rebalance_omit", "cap": 0.33},
                            {"op": "add_reflection"}])
model, history = train(ds, spec, cfg, out_dir=OUT / "ckpt")
print(f"trained {cfg.epochs} epochs, val acc {history.val_acc[-1]:.2f}, "
      f"prediction entropy {history.pred_entropy[-1]:.2f}")
save_model(OUT / "policy.ckpt", model, spec, cfg.pipeline)

expert = rollout(PidPolicy(DEFAULT_GAINS, setpoint=1.5), world, speed=0.8,
                 dt=0.05, max_t=120.0, camera=cam)
learner = rollout(ModelPolicy(model, spec), world, speed=0.8, dt=0.05,
                  max_t=2 * expert.duration, camera=cam)
print(f"expert lap: {expert.outcome} in {expert.duration:.1f} s")
print(f"model lap:  {learner.outcome} in {learner.duration:.1f} s")

export_overlay(expert, learner, OUT / "overlay", world=world)
print(f"green=expert blue=model -> {OUT}/overlay.svg")
