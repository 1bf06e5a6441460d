import numpy as np
import pytest

from seasonvpc import MappedImage, TrainingSet, Viewpoint


def line_training_set(n: int, spacing: float = 3.0, feature=None, season_id: int = 1):
    """Images on a straight line, `spacing` meters apart, heading +x."""
    images = []
    for i in range(n):
        feat = np.array([float(i)]) if feature is None else np.asarray(feature(i), dtype=float)
        images.append(
            MappedImage(id=i, timestamp=i * 1_000_000,
                        viewpoint=Viewpoint(spacing * i, 0.0, 0.0), feature=feat)
        )
    return TrainingSet(season_id=season_id, label="line", images=tuple(images))


@pytest.fixture
def line7():
    return line_training_set(7)
