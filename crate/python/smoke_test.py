"""Smoke test for the posegan_py extension module.

Build first:
    cargo build --release -p posegan_py --features extension-module
Then run:
    python3 python/smoke_test.py [path/to/libposegan_py.so]
"""

import importlib.util
import math
import os
import random
import shutil
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def load_module(path):
    staging = tempfile.mkdtemp()
    target = os.path.join(staging, "posegan_py.so")
    shutil.copy(path, target)
    spec = importlib.util.spec_from_file_location("posegan_py", target)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def check_numerics(pg):
    rng = random.Random(0)
    plane = [[rng.uniform(-1, 1) for _ in range(8)] for _ in range(4)]
    re, im = pg.fft2(plane)
    assert len(re) == 4 and len(re[0]) == 5
    assert abs(re[0][0] - sum(map(sum, plane))) < 1e-9
    back = pg.ifft2(re, im, 8)
    assert max(abs(a - b) for ra, rb in zip(back, plane) for a, b in zip(ra, rb)) < 1e-9

    assert abs(pg.spectral_norm([[3.0, 0.0], [0.0, 1.0]]) - 3.0) < 1e-9
    pts = [[0.0, 0.0], [1.0, 0.0]]
    assert pg.sinkhorn_distance(pts, pts, eps=0.01, max_iters=500) < 1e-3
    assert abs(pg.psnr([0.25] * 16, [0.35] * 16) - 20.0) < 1e-9
    try:
        pg.fft2([[1.0, 2.0, 3.0]])
    except ValueError:
        pass
    else:
        raise AssertionError("non power-of-two plane accepted")


def check_pipeline(pg, work):
    data = os.path.join(work, "data")
    train_ids, test_ids = pg.make_data(data, 3, 2, 1, size=32)
    assert len(train_ids) == 3 and len(test_ids) == 2

    cfg = pg.Config()
    for key, value in [
        ("image_size", "32"),
        ("batch_size", "2"),
        ("base_width", "4"),
        ("stage1_iters", "1"),
        ("stage2_iters", "1"),
        ("stage3_iters", "1"),
        ("conv_window", "1"),
        ("sample_every", "0"),
        ("data_dir", data),
        ("out_dir", os.path.join(work, "run")),
    ]:
        cfg.set(key, value)
    assert cfg.total_iters == 3
    assert pg.Config(cfg.to_text()).to_text() == cfg.to_text()
    try:
        cfg.set("batch_size", "lots")
    except ValueError:
        pass
    else:
        raise AssertionError("bad value accepted")

    trainer = pg.Trainer(cfg, n_train=2)
    losses = trainer.step()
    assert trainer.iteration == 1
    assert set(losses) >= {"ce", "total"} and all(math.isfinite(v) for v in losses.values())

    ckpt = pg.train(cfg)
    assert os.path.isfile(ckpt)
    rows = pg.evaluate(ckpt, data, os.path.join(work, "eval.csv"))
    assert [r[0] for r in rows] == test_ids
    size = pg.generate(ckpt, train_ids[0], test_ids[1], os.path.join(work, "gen.ppm"))
    assert size == (32, 32)
    try:
        pg.generate(os.path.join(work, "missing.ckpt"), "a", "b", os.path.join(work, "x.ppm"))
    except RuntimeError:
        pass
    else:
        raise AssertionError("missing checkpoint accepted")


def main():
    path = sys.argv[1] if len(sys.argv) > 1 else os.path.join(ROOT, "target", "release", "libposegan_py.so")
    pg = load_module(path)
    check_numerics(pg)
    work = tempfile.mkdtemp()
    try:
        check_pipeline(pg, work)
    finally:
        shutil.rmtree(work, ignore_errors=True)
    print("posegan_py smoke test passed")


if __name__ == "__main__":
    main()
