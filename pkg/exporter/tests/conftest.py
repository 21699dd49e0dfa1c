import numpy as np
import pytest
from PIL import Image


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    """20 synthetic fundus-like images + 20 narratives + manifest + records."""
    root = tmp_path_factory.mktemp("export_fixture")
    images = root / "images"
    images.mkdir()
    rng = np.random.default_rng(99)
    texts = []
    manifest_lines = []
    record_blocks = []
    for i in range(20):
        rid = f"x{i:03d}"
        positive = i % 2 == 1
        side = 64
        img = np.full((side, side), 40, dtype=np.uint8)
        yy, xx = np.mgrid[0:side, 0:side]
        dist = np.hypot(yy - side / 2, xx - side / 2)
        img[dist < 24] = 120
        img[dist < (14 if positive else 6)] = 220
        img = np.clip(img + rng.integers(-10, 10, size=img.shape), 0, 255)
        path = images / f"{rid}.png"
        Image.fromarray(img.astype(np.uint8)).convert("RGB").save(path)
        text = ("Rim thinning with notching and pallor superiorly." if positive
                else "Healthy pink rim, uniform and intact.")
        texts.append(text)
        manifest_lines.append(f"{rid}\t{path}\t{text}")
        record_blocks.append("\n".join([
            f"record {rid}",
            f"optic_disc_size: {'large' if positive else 'small'}",
            f"cup_to_disc_ratio: {0.75 if positive else 0.3}",
            f"rim_pallor: {'true' if positive else 'false'}",
            f"neuroretinal_rim: {text}",
            f"image_ref: {rid}",
            f"label: {1 if positive else 0}",
            "end",
        ]))
    (root / "manifest.tsv").write_text("\n".join(manifest_lines) + "\n",
                                       encoding="utf-8")
    (root / "records.txt").write_text("\n\n".join(record_blocks) + "\n",
                                      encoding="utf-8")
    return root
