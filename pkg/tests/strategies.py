"""Hypothesis strategies shared by the test modules."""
import numpy as np
from hypothesis import strategies as st


@st.composite
def simplex(draw, k: int, allow_zeros: bool = True):
    raw = draw(st.lists(st.floats(0.0 if allow_zeros else 0.01, 1.0), min_size=k, max_size=k))
    arr = np.asarray(raw, float)
    if arr.sum() <= 0:
        arr = np.ones(k)
    return arr / arr.sum()


@st.composite
def joint(draw, shape):
    k = int(np.prod(shape))
    return draw(simplex(k)).reshape(shape)


@st.composite
def mac_tensor(draw, nx=2, ny=2, nz=2):
    rows = [draw(simplex(nz)) for _ in range(nx * ny)]
    return np.array(rows).reshape(nx, ny, nz)
