import numpy as np
import pytest
from hypothesis import settings

from semcrypt.image import ImageBuffer
from semcrypt.phantom import phantom_corpus

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def phantoms():
    images, labels = phantom_corpus(10, seed=11)
    return images, labels


def random_image(rng: np.random.Generator, h: int, w: int, bit_depth: int = 8) -> ImageBuffer:
    hi = 1 << bit_depth
    return ImageBuffer(rng.integers(0, hi, size=(h, w)), bit_depth)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        def order(line):
            tag = line.split()[1]
            return (0, int(tag)) if tag.isdigit() else (1, 0)

        for line in sorted(ACCEPTANCE_LINES, key=order):
            terminalreporter.write_line(line)
