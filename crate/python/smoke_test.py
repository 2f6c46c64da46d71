"""Builds the extension with cargo and exercises the bindings."""

import math
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def build() -> pathlib.Path:
    subprocess.run(["cargo", "build", "--release", "-p", "satground-py"], cwd=ROOT, check=True)
    lib = ROOT / "target" / "release" / "libsatground.so"
    out = pathlib.Path(tempfile.mkdtemp()) / "satground.so"
    shutil.copy(lib, out)
    return out.parent


def main() -> None:
    sys.path.insert(0, str(build()))
    import satground as sg

    cfg = sg.Config()
    cfg.validate()
    assert (cfg.k, cfg.t_k, cfg.sat_archive_cap) == (5, 3, 20)

    assert sg.confidence([0.25]) == 0.25
    assert abs(sg.confidence([0.5, 0.5, 0.125]) - (0.5 * 0.5 * 0.125) ** (1 / 3)) < 1e-12
    assert abs(math.hypot(*sg.normalize([3.0, 4.0])) - 1.0) < 1e-12

    emb = sg.Embedder()
    arc = sg.Archive(emb, cap=20)
    for i in range(10):
        label = "water:a" if i % 2 else "farm:b"
        arc.insert(i + 1, i, label, [("Is there a [road] in the image?", label)])
    hits = arc.retrieve(99, "water:a", "Is there a [road] in the image?", 5)
    assert len(hits) == 5 and all(h["label"] == "water:a" for h in hits)
    assert arc.matching_test(cfg) == (True, 5)

    assert sg.generate_windows(5700, 300, 11400) == [(0.0, 300.0), (5700.0, 6000.0)]
    assert sg.transfer_time(600000, 30e6) == 0.16

    summary = sg.simulate(seed=7)
    assert summary["answered"] + summary["unanswered"] == summary["captured"]
    slope, _ = sg.backlog(image_bytes=600000)
    assert slope > 0
    print("python smoke test ok:", summary["answered"], "answered, backlog slope", round(slope, 4))


if __name__ == "__main__":
    main()
