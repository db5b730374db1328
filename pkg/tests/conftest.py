import math
from pathlib import Path

import numpy as np
import pytest

from synthforge.pipeline import ClassSpec, GeneratorConfig
from synthforge.renderer import RenderConfig
from synthforge.shapes import label_texture, make_backgrounds, make_box, make_cylinder, save_mesh


@pytest.fixture(scope="session")
def assets(tmp_path_factory):
    """Two textured product meshes on disk plus a small background corpus."""
    root = tmp_path_factory.mktemp("assets")
    pot, pot_tex = save_mesh(make_cylinder(0.35, 0.8, 48, label_texture(1, 64)), root / "meshes", "pot")
    carton, carton_tex = save_mesh(make_box((0.5, 0.3, 0.9), texture=label_texture(2, 64)), root / "meshes", "carton")
    make_backgrounds(root / "backgrounds", 6, seed=7, size=(320, 240))
    make_backgrounds(root / "backgrounds" / "nested", 2, seed=8, size=(200, 260))
    return {
        "root": root,
        "meshes": [("pot", pot, pot_tex), ("carton", carton, carton_tex)],
        "backgrounds": root / "backgrounds",
    }


@pytest.fixture
def make_config(assets, tmp_path):
    def _make(output="out", **overrides):
        params = dict(
            classes=[ClassSpec(name, str(obj), str(tex)) for name, obj, tex in assets["meshes"]],
            background_root=str(assets["backgrounds"]),
            output_root=str(tmp_path / output),
            images_per_class=3,
            render=RenderConfig(48, 48, 4),
            master_seed=2024,
        )
        params.update(overrides)
        return GeneratorConfig(**params)

    return _make


# ---- acceptance reporting -------------------------------------------------

_CRITERIA = {}
_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(text): acceptance criterion covered by this test")


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            _CRITERIA[item.nodeid] = m.args[0]


def pytest_runtest_logreport(report):
    if report.nodeid not in _CRITERIA:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _RESULTS[report.nodeid] = "SKIP" if report.skipped else ("PASS" if report.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, text in _CRITERIA.items():
        if nodeid in _RESULTS:
            terminalreporter.write_line(f"{_RESULTS[nodeid]:4s}  {text}")
