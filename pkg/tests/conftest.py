"""Shared fixtures: small synthetic segments and an on-disk mini dataset."""

import numpy as np
import pytest

from avaccel.cli import cmd_gen
from avaccel.configs import GenConfig
from avaccel.scenario import ScenarioConfig, generate_synthetic_segment


def short_scenario(**overrides) -> ScenarioConfig:
    """A quick-to-generate config: 3 s segments instead of 20 s."""
    base = dict(duration_s=3.0, image_h=64, image_w=64)
    base.update(overrides)
    return ScenarioConfig(**base)


@pytest.fixture(scope="session")
def segments():
    cfg = short_scenario()
    return [generate_synthetic_segment(cfg, seed) for seed in (11, 22, 33)]


@pytest.fixture(scope="session")
def lead_segment(segments):
    for seg in segments:
        if seg.frames[0].front_present:
            return seg
    raise RuntimeError("fixture seeds produced no lead-vehicle segment")


@pytest.fixture(scope="session")
def mini_dataset(tmp_path_factory):
    """3 tars x 4 short segments on disk, via the real gen command."""
    root = tmp_path_factory.mktemp("data") / "mini"
    cfg = GenConfig(out_dir=str(root), tars=3, seed=7, segments_per_tar=4,
                    scenario=short_scenario())
    assert cmd_gen(cfg) == 0
    return root


def rand_arr(rng: np.random.Generator, *shape) -> np.ndarray:
    return rng.standard_normal(shape)
