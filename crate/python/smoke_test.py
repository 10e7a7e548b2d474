#!/usr/bin/env python3
"""Smoke test for the vtx Python extension.

Builds nothing itself: it expects `cargo build -p vtx-py` (or --release) to
have produced libvtx.so, stages it as an importable `vtx` module, and runs a
miniature end-to-end pipeline on synthetic data.
"""

import json
import math
import shutil
import struct
import subprocess
import sys
import tempfile
import zlib
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def stage_module(tmp: Path) -> None:
    candidates = [
        REPO / "target" / "release" / "libvtx.so",
        REPO / "target" / "debug" / "libvtx.so",
    ]
    built = [p for p in candidates if p.exists()]
    if not built:
        print("libvtx.so not found; building (cargo build -p vtx-py)...")
        subprocess.run(["cargo", "build", "-p", "vtx-py"], cwd=REPO, check=True)
        built = [p for p in candidates if p.exists()]
    newest = max(built, key=lambda p: p.stat().st_mtime)
    shutil.copy(newest, tmp / "vtx.so")
    sys.path.insert(0, str(tmp))


def write_png(path: Path, size: int, pixel):
    def chunk(tag: bytes, data: bytes) -> bytes:
        body = tag + data
        return struct.pack(">I", len(data)) + body + struct.pack(">I", zlib.crc32(body) & 0xFFFFFFFF)

    rows = b""
    for y in range(size):
        rows += b"\x00" + b"".join(bytes(pixel(x, y)) for x in range(size))
    ihdr = struct.pack(">IIBBBBB", size, size, 8, 2, 0, 0, 0)
    path.write_bytes(
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", ihdr)
        + chunk(b"IDAT", zlib.compress(rows))
        + chunk(b"IEND", b"")
    )


def write_frames(dirpath: Path, count: int, period: int, size: int = 24) -> None:
    dirpath.mkdir(parents=True, exist_ok=True)
    for i in range(count):
        phase = (i % period) / period
        gain = 1.0 - 0.1 * i / count
        angle = 2 * math.pi * phase
        cx = size / 2 + size * 0.3 * math.cos(angle)
        cy = size / 2 + size * 0.3 * math.sin(angle)

        def pixel(x, y):
            blob = math.exp(-((x - cx) ** 2 + (y - cy) ** 2) / 14.0)
            v = lambda s: max(0, min(255, int(gain * blob * s)))
            return (v(240), v(190), v(130))

        write_png(dirpath / f"{i + 1:06d}.png", size, pixel)


def main() -> None:
    tmp = Path(tempfile.mkdtemp(prefix="vtx_smoke_"))
    stage_module(tmp)
    import vtx

    # One-hot features: train, regurgitate, then sample with jumps.
    n = 24
    base = vtx.EmbeddingMatrix([[1.0 if j == i else 0.0 for j in range(n)] for i in range(n)])
    assert (base.n, base.d) == (n, n)
    grid = vtx.SegmentGrid.from_parts(0.5, 0.2, 30.0, n)
    assert grid.segment_bounds(2) == (12, 27)
    assert grid.tail_units(0) == list(range(9, 15))

    model = vtx.train(
        base, learning_rate=0.02, epochs=40, negatives=16, tau=0.1,
        seed=11, batch_size=8, hidden_dim=128, output_dim=128,
    )
    losses = model.epoch_losses
    assert losses[-1] < 0.5 * losses[0], f"loss did not halve: {losses[0]:.3f} -> {losses[-1]:.3f}"

    replay = vtx.synthesize(
        model, base, grid, grid.covered_seconds(),
        tau=0.1, threshold=1.0, start_segment=0, seed=0,
    )
    assert replay.sources() == list(range(n)), "argmax walk must replay the input"
    assert not any(replay.jumps())
    covered = round(grid.covered_seconds() * 30.0)
    assert replay.emitted_frames() == list(range(covered))

    varied = vtx.synthesize(model, base, grid, 20.0, tau=0.7, threshold=0.5, seed=4)
    score, counts = vtx.diversity(varied, window_seconds=10.0)
    assert len(varied.transitions()) == sum(1 for j in varied.jumps() if j)
    assert varied.to_json() == vtx.synthesize(
        model, base, grid, 20.0, tau=0.7, threshold=0.5, seed=4
    ).to_json(), "same seed must reproduce the same edit list"

    # Round-trips through the binary formats.
    base.save(tmp / "b.vtxe")
    assert vtx.EmbeddingMatrix.load(tmp / "b.vtxe").row(3) == base.row(3)
    model.save(tmp / "m.vtxm")
    loaded = vtx.BiGramModel.load(tmp / "m.vtxm")
    assert loaded.base_dim == n
    assert abs(loaded.score(base, 0, 1) - model.score(base, 0, 1)) < 1e-6

    # Audio conditioning at the alpha=1 boundary equals the unconditional run.
    src = vtx.EmbeddingMatrix([[math.sin(i + j) for j in range(8)] for i in range(n)])
    cond = vtx.EmbeddingMatrix([[math.cos(i * 0.7 + j) for j in range(8)] for i in range(10)])
    sgrid = vtx.SegmentGrid.from_parts(0.5, 0.2, 16000.0, n)
    cgrid = vtx.SegmentGrid.from_parts(0.5, 0.2, 16000.0, 10)
    steered = vtx.conditioned_synthesize(
        model, base, src, cond, grid, sgrid, cgrid, alpha=1.0, seed=3,
    )
    plain = vtx.synthesize(model, base, grid, cgrid.covered_seconds(), seed=3)
    assert steered.to_json() == plain.to_json()

    # Classic pipeline + assembly script on a real frame directory.
    frames = tmp / "frames"
    write_frames(frames, 80, 16)
    feats = vtx.pixel_features(frames, fps=10.0, window=0.5, stride=0.2, thumb=8)
    assert feats.n == 38 and feats.d == 2 * 8 * 8 * 3
    classic = vtx.classic_synthesize(frames, fps=10.0, length_seconds=10.0, thumb=8, seed=2)
    assert classic.duration_seconds() >= 10.0
    script = vtx.write_assembly_script(classic, frames, tmp / "go.sh", crossfade=2)
    assert "ffmpeg" in script and (tmp / "go.sh").exists()
    edit_json = json.loads(classic.to_json())
    assert edit_json["steps"], "classic run must emit steps"

    print("smoke test passed:")
    print(f"  trained {n}-segment model, loss {losses[0]:.3f} -> {losses[-1]:.3f}")
    print(f"  replay OK, varied run has {len(varied.transitions())} transitions, DS {score:.2f} {counts}")
    print(f"  classic run: {len(classic)} steps, {len(classic.transitions())} transitions")


if __name__ == "__main__":
    main()
