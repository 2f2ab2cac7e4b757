"""Sample sequences from a trained checkpoint and render stick figures.

Run demos/04_train_fixture_gan.py first (this reads its checkpoint).
Each generated sequence is masked past its sampled duration and every
coordinate lies inside (-1, 1) by the softsign output.
"""
import json
from pathlib import Path

import numpy as np

from skelgan import evaluate

HERE = Path(__file__).parent
CHECKPOINT = HERE / "output" / "04_train_fixture_gan" / "checkpoint.npz"
OUT = HERE / "output" / "06_generated"

if not CHECKPOINT.exists():
    raise SystemExit(f"missing {CHECKPOINT}; run demos/04_train_fixture_gan.py first")

dump, figures = evaluate.export_sequences(CHECKPOINT, n=6, seed=123, out_dir=OUT)

print(f"dump: {dump}")
for line in dump.read_text().splitlines():
    rec = json.loads(line)
    frames = np.asarray(rec["frames"])
    print(f"  seq {rec['index']}: category={rec['category']} "
          f"length={rec['length']} max|coord|={np.abs(frames).max():.3f}")
print(f"{len(figures)} stick-figure files in {OUT}")
