"""Small reference channels used by the tests, the acceptance run and the CLI examples."""
from __future__ import annotations

import numpy as np

from .channel import Mac, validate_mac


def _binary_output(p_one) -> Mac:
    """2x2x2 channel from W(z=1|x,y) listed in the order 00, 01, 10, 11."""
    p1 = np.asarray(p_one, float).reshape(2, 2)
    return validate_mac(np.stack([1 - p1, p1], axis=-1))


def binary_adder(noise: float = 0.0) -> Mac:
    """Z = X + Y in {0,1,2}, with probability ``noise`` spread evenly over the wrong sums."""
    w = np.zeros((2, 2, 3))
    for x in range(2):
        for y in range(2):
            w[x, y] = noise / 2
            w[x, y, x + y] = 1 - noise
    return validate_mac(w)


def adder_like() -> Mac:
    return _binary_output([0.05, 0.5, 0.5, 0.95])


def symmetric_noise(eps: float = 0.1) -> Mac:
    """XOR of the inputs seen through a binary symmetric channel."""
    return _binary_output([eps, 1 - eps, 1 - eps, eps])


def input_independent() -> Mac:
    return _binary_output([0.7, 0.7, 0.7, 0.7])


def z_equals_x() -> Mac:
    return _binary_output([0.0, 0.0, 1.0, 1.0])


def random_channel(seed: int = 2024, shape=(2, 2, 2)) -> Mac:
    rng = np.random.default_rng(seed)
    return validate_mac(rng.dirichlet(np.ones(shape[2]), size=shape[:2]))


def suite() -> dict[str, Mac]:
    """The five 2x2x2 test channels, keyed by name."""
    return {
        "adder_like": adder_like(),
        "symmetric_noise": symmetric_noise(),
        "input_independent": input_independent(),
        "z_equals_x": z_equals_x(),
        "random": random_channel(),
    }
