import math

import numpy as np
import pytest

from wnls.grid import Field, make_grid


def gaussian(spec, amp=1.0, width=1.0, eps=0.0, center=0.0):
    x = [c - center for c in spec.x_coords()]
    r2 = sum(c * c for c in x)[..., None]
    y = spec.y.reshape((1,) * spec.d + (-1,))
    vals = amp * np.exp(-r2 / (2 * width * width)) * (1.0 + eps * np.cos(y))
    return Field(spec, vals.astype(complex))


def random_smooth(spec, seed, width=1.5, complex_valued=True, support=None):
    """Smooth random field localized by a Gaussian envelope."""
    rng = np.random.Generator(np.random.Philox(seed))
    shape = spec.shape
    noise = rng.standard_normal(shape)
    if complex_valued:
        noise = noise + 1j * rng.standard_normal(shape)
    k2 = spec.k2
    noise = np.fft.ifftn(np.exp(-0.5 * k2) * np.fft.fftn(noise))
    noise /= np.max(np.abs(noise))
    env = gaussian(spec, 1.0, width).values
    vals = (0.5 + noise) * env
    if support is not None:
        r = spec.radius[..., None]
        vals = np.where(r < support, vals * np.exp(-1.0 / np.maximum(support**2 - r * r, 1e-300)), 0.0)
    return Field(spec, vals)


@pytest.fixture(scope="session")
def grid1():
    return make_grid(1, 16 * math.pi, 256, 32)


@pytest.fixture(scope="session")
def grid1_small():
    return make_grid(1, 12.0, 128, 16)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict(request):
    """Record one pass/fail line per acceptance criterion."""
    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
