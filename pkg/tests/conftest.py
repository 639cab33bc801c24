import numpy as np
import pytest
from hypothesis import settings, strategies as st

from norminflation.planewave import TrigField

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

lattice = st.tuples(*[st.integers(-6, 6)] * 3).filter(any)
coef = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


@st.composite
def trig_fields(draw, max_modes=4, div_free=False, rates=False):
    n = draw(st.integers(1, max_modes))
    ks = [draw(lattice) for _ in range(n)]
    ph = [draw(st.sampled_from(["cos", "sin"])) for _ in range(n)]
    amps = []
    for k in ks:
        a = np.array([draw(coef) for _ in range(3)])
        if div_free:
            kf = np.asarray(k, float)
            a = a - (a @ kf) / (kf @ kf) * kf
        amps.append(a)
    lam = [draw(st.sampled_from([0.0, 1.0, 2.5])) if rates else 0.0 for _ in range(n)]
    f = TrigField.zero()
    for k, p, a, l in zip(ks, ph, amps, lam):
        f = f + TrigField.mode(a, k, p, rate=l)
    return f


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
