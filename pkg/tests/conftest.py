import numpy as np
import pytest

from skimscan.core import ClipRecord, CostParams, Dataset, DatasetMeta, VideoRecord
from skimscan.discriminator import train_supervised
from skimscan.learning import SgdConfig
from skimscan.synthgen import generate, preset


@pytest.fixture(scope="session")
def adversarial():
    return generate(preset("adversarial", 7))


@pytest.fixture(scope="session")
def trained_cd():
    # trained on a different draw of the same geometry than the evaluation set
    ds = generate(preset("adversarial", 8))
    model, report, trace = train_supervised(ds, SgdConfig(), source="heavy")
    return model


@pytest.fixture(scope="session")
def separable():
    return generate(preset("separable", 0))


def make_video(light, heavy=None, features=None, annotated=None, video_id="v0", label=0, indices=None):
    light = np.asarray(light, dtype=float)
    L = len(light)
    indices = list(range(L)) if indices is None else indices
    clips = []
    for p in range(L):
        clips.append(ClipRecord(
            index=indices[p],
            light_logits=light[p],
            heavy_logits=None if heavy is None else np.asarray(heavy[p], dtype=float),
            feature=None if features is None else np.asarray(features[p], dtype=float),
            annotated=None if annotated is None else bool(annotated[p]),
        ))
    return VideoRecord(video_id, label, clips)


def make_dataset(videos, C, D=2, cost=None):
    return Dataset(DatasetMeta(C, D, None, cost or CostParams()), videos)
