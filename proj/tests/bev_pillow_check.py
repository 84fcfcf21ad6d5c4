"""Exports hand-written grids with the CLI and reads the images back with Pillow."""

import random
import struct
import subprocess
import sys
import tempfile
from pathlib import Path

from PIL import Image

PALETTE = [
    (0, 0, 0), (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200), (245, 130, 48),
    (145, 30, 180), (70, 240, 240), (240, 50, 230), (210, 245, 60), (250, 190, 212), (0, 128, 128),
]
H, W, Z, K = 6, 9, 4, 4


def colour(label):
    return PALETTE[0] if label == 0 else PALETTE[1 + (label - 1) % (len(PALETTE) - 1)]


def header(kind):
    return b"B2SO" + struct.pack("<HB3I4f", 1, kind, H, W, Z, 0.5, 0.0, 0.0, 0.0)


def index(h, w, z):
    return (h * W + w) * Z + z


def run(cli, workdir, grid, image, *extra):
    subprocess.run([cli, "export-bev", "--config", str(workdir / "exp.txt"), "--grid", str(grid),
                    "--image", str(image), *extra], check=True, capture_output=True)
    return Image.open(image)


def main(cli):
    rng = random.Random(7)
    with tempfile.TemporaryDirectory() as tmp:
        d = Path(tmp)
        (d / "exp.txt").write_text("name = pillow\n")

        labels = [rng.randrange(K + 1) for _ in range(H * W * Z)]
        (d / "sem.grid").write_bytes(header(1) + bytes(labels))
        img = run(cli, d, d / "sem.grid", d / "sem.ppm")
        assert img.mode == "RGB" and img.size == (W, H), (img.mode, img.size)
        for h in range(H):
            for w in range(W):
                top = max(labels[index(h, w, z)] for z in range(Z))
                assert img.getpixel((w, h)) == colour(top), (h, w)
        img = run(cli, d, d / "sem.grid", d / "sem2.ppm", "--z", "2")
        for h in range(H):
            for w in range(W):
                assert img.getpixel((w, h)) == colour(labels[index(h, w, 2)]), (h, w)

        occ = [rng.random() < 0.2 for _ in range(H * W * Z)]
        packed = bytearray((len(occ) + 7) // 8)
        for i, v in enumerate(occ):
            if v:
                packed[i >> 3] |= 1 << (i & 7)
        (d / "bin.grid").write_bytes(header(0) + bytes(packed))
        img = run(cli, d, d / "bin.grid", d / "bin.pgm")
        assert img.mode == "L" and img.size == (W, H)
        for h in range(H):
            for w in range(W):
                want = 255 if any(occ[index(h, w, z)] for z in range(Z)) else 0
                assert img.getpixel((w, h)) == want, (h, w)

        (d / "free.grid").write_bytes(header(1) + bytes(H * W * Z))
        img = run(cli, d, d / "free.grid", d / "free.ppm")
        assert img.getcolors() == [(H * W, PALETTE[0])]
    print("pillow round trip ok")


if __name__ == "__main__":
    main(sys.argv[1])
