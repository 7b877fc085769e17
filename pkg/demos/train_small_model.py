"""
Training a small model end to end
=================================

Generates a synthetic RGB-D dataset, trains a reduced network for a few
epochs, scores it, saves a checkpoint and writes 8-bit saliency maps.  The
shipped toy configuration (64x64 inputs, 200 training images, 10 epochs)
takes around ten minutes on one core; this demo shrinks everything so it
finishes in about a minute.

Pass ``--full`` to run the shipped toy configuration instead.
"""

import os
import sys
import tempfile

import numpy as np

from m2rnet import checkpoint, netpbm
from m2rnet.config import EncoderConfig, TrainConfig
from m2rnet.dataset import split_dataset
from m2rnet.network import predict
from m2rnet.training import evaluate_model, train

if "--full" in sys.argv:
    cfg = TrainConfig()
else:
    cfg = TrainConfig(encoder=EncoderConfig(channels=(8, 16, 16, 32, 32), resolution=32, decoder_channels=8),
                      n_train=96, n_test=16, epochs=15, learning_rate=0.01)

train_set, test_set = split_dataset(cfg.n_train, cfg.n_test, cfg.encoder.resolution, cfg.seed)
fg = np.mean([s.gt.mean() for s in train_set])
print(f"{len(train_set)} training images at {cfg.encoder.resolution}px, mean foreground fraction {fg:.2f}")

model, log = train(cfg, train_set, test_set, verbose=True)
print(f"{model.num_parameters()} parameters")

report = evaluate_model(model, test_set)
print("test scores:", " ".join(f"{k}={v:.3f}" for k, v in report.scores().items()))

# After training the foreground should light up more than the background.
sample = test_set[0]
saliency = predict(model, sample.rgb, sample.depth) / 255.0
inside = sample.gt[0] > 0
print(f"mean prediction: foreground {saliency[inside].mean():.3f}, background {saliency[~inside].mean():.3f}")

with tempfile.TemporaryDirectory() as out:
    path = os.path.join(out, "model.ckpt")
    checkpoint.save(path, model)
    restored = checkpoint.load(path)
    same = np.array_equal(predict(restored, sample.rgb, sample.depth), predict(model, sample.rgb, sample.depth))
    print(f"checkpoint {os.path.getsize(path)} bytes, restored model predicts identically: {same}")
    netpbm.save(os.path.join(out, "0000.pgm"), predict(model, sample.rgb, sample.depth))
    print("wrote", sorted(os.listdir(out)))
