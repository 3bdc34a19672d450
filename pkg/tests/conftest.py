import numpy as np
import pytest

from sim2real.pipeline import GanTrainConfig, GenerateConfig, RunConfig, TaskConfig
from sim2real.scene import SceneSpec


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_run_config(seed=0, **over) -> RunConfig:
    """Small-everything config for fast pipeline tests."""
    base = dict(
        seed=seed,
        image_size=(16, 16),
        scene=SceneSpec(length=24.0, width=10.0, pillar_spacing=5.0, n_clutter=6,
                        n_tarps=2),
        generate=GenerateConfig(n_scenes=1, n_sim=6, n_pseudo=6, n_paired=3, n_test=4),
        gan=GanTrainConfig(iterations=8, base_channels=6, disc_channels=(4, 6)),
        task=TaskConfig(batch_size=4, iterations_avoidance=10,
                        iterations_segmentation=10, conv_channels=(4, 6),
                        hidden_width=16, n_hidden=2, seg_base_channels=4),
        augment_factor=2,
    )
    base.update(over)
    return RunConfig(**base)
