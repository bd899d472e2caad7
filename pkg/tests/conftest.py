import os
import sys

import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=50, deadline=None)
settings.load_profile("default")


@pytest.fixture
def small_splits():
    from mmcl.datagen import SyntheticDatasetSpec, generate_synthetic

    return generate_synthetic(SyntheticDatasetSpec(num_classes=8, samples_per_class_train=12,
                                                   samples_per_class_test=6, dim_audio=6,
                                                   dim_visual=5, latent_dim=4,
                                                   num_supercategories=2, seed=3))


def pytest_terminal_summary(terminalreporter):
    from acceptance_report import lines

    summary = lines()
    if summary:
        terminalreporter.section("acceptance criteria")
        for line in summary:
            terminalreporter.write_line(line)
