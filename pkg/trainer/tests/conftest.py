import numpy as np
import pytest

from ticalib import synth

WINDOW = 64

NARROW_DIST = synth.ParamDistribution(
    offset_bounds=((-15.0, 15.0),) * 3,
    drift_bounds=((-20.0, 20.0), (-30.0, 30.0), (-20.0, 20.0)),
    drift_root_bounds=((-20.0, 20.0), (0.0, 0.0), (-20.0, 20.0)),
)


def make_ticd(path, count, seed0, dist=NARROW_DIST, n=WINDOW, motion_seed=1, duration_s=240.0):
    """Synthesize count windows and write them as a TICD file."""
    motion = synth.gen_motion(synth.MotionSpec.active(duration_s=duration_s), motion_seed)
    rng = np.random.default_rng(seed0)
    samples = [
        synth.make_sample(motion, int(rng.integers(0, len(motion) - n)), dist, seed0 + i, n=n)
        for i in range(count)
    ]
    synth.write_dataset(samples, path)
    return path


@pytest.fixture(scope="session")
def small_ticd(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "small.ticd"
    return make_ticd(path, 32, 500)
