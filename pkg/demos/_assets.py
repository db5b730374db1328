"""Procedural stand-ins for scanned products and a background corpus.

The demos need textured OBJ meshes and some photos; real scans and a photo
library drop in by pointing the config at them instead.
"""
from pathlib import Path

from synthforge.shapes import label_texture, make_backgrounds, make_box, make_cylinder, save_mesh

HERE = Path(__file__).resolve().parent
OUT = HERE / "demo_out"


def ensure_assets(root=OUT / "assets"):
    root = Path(root)
    if not (root / "meshes" / "pot.obj").exists():
        save_mesh(make_cylinder(0.35, 0.8, 48, label_texture(1, 64)), root / "meshes", "pot")
        save_mesh(make_box((0.5, 0.3, 0.9), texture=label_texture(2, 64)), root / "meshes", "carton")
        save_mesh(make_cylinder(0.45, 0.35, 40, label_texture(3, 64)), root / "meshes", "tub")
        make_backgrounds(root / "backgrounds", 12, seed=7, size=(400, 300))
    return root
