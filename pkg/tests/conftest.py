import json

import numpy as np
import pytest

from rsevi.field import Translation
from rsevi.pipeline import RunConfig, run_simulate
from rsevi.synthetic import Scene, Texture, write_sequence

FPS = 800.0
VX = 60.0           # px/s, 4.8 px per RS frame period
SIZE = 64


@pytest.fixture(scope="session")
def moving_scene():
    return Scene(Translation(VX, 0.0), SIZE, SIZE, Texture(seed=0))


@pytest.fixture(scope="session")
def gs_dir(tmp_path_factory, moving_scene):
    d = tmp_path_factory.mktemp("gs")
    write_sequence(moving_scene, np.arange(200) / FPS, d)
    return d


@pytest.fixture(scope="session")
def motion_file(tmp_path_factory):
    p = tmp_path_factory.mktemp("motion") / "motion.json"
    p.write_text(json.dumps({"kind": "translation", "vx": VX, "vy": 0.0}))
    return p


@pytest.fixture(scope="session")
def sim_dir(tmp_path_factory, gs_dir, motion_file):
    out = tmp_path_factory.mktemp("sim")
    run_simulate(gs_dir, FPS, out, 0.3, motion=json.loads(motion_file.read_text()), config=RunConfig())
    return out


@pytest.fixture(scope="session")
def gt_dir(tmp_path_factory, moving_scene, sim_dir):
    """Ground-truth GS frames at the four interpolation times of the first RS pair."""
    m = json.loads((sim_dir / "manifest.json").read_text())
    r0, r1 = m["rs_frames"][:2]
    a = 0.5 * (r0["t_start"] + r0["t_end"])
    b = 0.5 * (r1["t_start"] + r1["t_end"])
    d = tmp_path_factory.mktemp("gt")
    write_sequence(moving_scene, a + np.arange(4) * (b - a) / 3, d, "gt")
    return d
