"""Sequence modeling: autoencoder bottleneck + GRU over 3-frame windows.

Compresses corridor frames to a 10-value embedding, strings consecutive
embeddings into length-3 sequences, and trains a GRU head to predict the
steering label of the last frame.

Run:  python demos/06_autoencoder_gru.py
"""

import numpy as np

from hallpilot import maps
from hallpilot.cli import record_expert_dataset
from hallpilot.models import (build_autoencoder, build_gru_head,
                              encode_sequences, image_to_input,
                              train_autoencoder)
from hallpilot.nn import Adam, LossSpec
from hallpilot.pipeline import label_to_bin
from hallpilot.simworld import CameraConfig

import tempfile

world = maps.get_map("rect_loop")
with tempfile.TemporaryDirectory() as td:
    ds = record_expert_dataset(world, td + "/ds", hz=10.0, speed=0.8,
                               duration=40.0,
                               camera=CameraConfig(width=32, height=24))
x = np.stack([image_to_input(s.rgb) for s in ds.samples])
print(f"{len(x)} frames of shape {x.shape[1:]}")

enc_spec, dec_spec = build_autoencoder((3, 24, 32), embedding=10)
encoder, decoder, losses = train_autoencoder(x, enc_spec, dec_spec, epochs=10,
                                             lr=3e-3, seed=0)
print("reconstruction loss per epoch:", [round(l, 4) for l in losses])
print(f"bottleneck width: {encoder.output_shape[0]}")

seqs, last_idx = encode_sequences(encoder, x, seq_len=3)
labels = np.array([label_to_bin(ds.samples[i].angle, 15) for i in last_idx])
print(f"{len(seqs)} sequences of 3 embeddings")

gru_spec = build_gru_head(embedding=10, hidden=10, seq_len=3,
                          head="classification", n_bins=15)
gru = gru_spec.instantiate(seed=0)
loss_spec = LossSpec(kind="ce", n_bins=15)
opt = Adam(gru.params(), lr=2e-3)
rng = np.random.default_rng(0)
for epoch in range(15):
    idx = rng.permutation(len(seqs))
    for b0 in range(0, len(idx), 32):
        sel = idx[b0:b0 + 32]
        gru.zero_grad()
        out = gru.forward(seqs[sel])
        loss, grad = loss_spec.compute(out, labels[sel])
        gru.backward(grad.reshape(out.shape))
        opt.step()
acc = (gru.forward(seqs).argmax(axis=1) == labels).mean()
print(f"GRU head train accuracy: {acc:.2f}")

fwd = gru.forward(seqs[:1])
rev = gru.forward(seqs[:1][:, ::-1].copy())
print(f"sequence order matters: output changes by "
      f"{np.abs(fwd - rev).max():.4f} when reversed")
