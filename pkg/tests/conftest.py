import pytest

from distress.fields import rigid_translation
from distress.interp import build_spline
from distress.synth import SpeckleSpec, make_image_pair

N = 200


def pair(dx_px, dy_px, seed=5, size=N):
    ref, dfm, _ = make_image_pair(SpeckleSpec(0.025, 0.025, seed), rigid_translation(dx_px / size, dy_px / size), size)
    return ref, dfm


@pytest.fixture(scope="session")
def quarter_shift():
    ref, dfm = pair(0.25, 0.25)
    return ref, dfm, build_spline(dfm)
