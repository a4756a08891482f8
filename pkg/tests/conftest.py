import hypothesis
import hypothesis.strategies as st
import pytest

from msfuse.detections import CANONICAL_CLASSES, Detection
from msfuse.geometry import BoundingBox

hypothesis.settings.register_profile("default", deadline=None, max_examples=100)
hypothesis.settings.load_profile("default")


def int_boxes(lo=0, hi=100, max_size=40):
    return st.builds(
        BoundingBox,
        st.integers(lo, hi).map(float),
        st.integers(lo, hi).map(float),
        st.integers(1, max_size).map(float),
        st.integers(1, max_size).map(float),
    )


def detections(classes=CANONICAL_CLASSES, max_size=40):
    return st.builds(
        Detection,
        st.sampled_from(classes),
        int_boxes(max_size=max_size),
        # grid values keep power-of-two rescaling exact (no subnormals)
        st.integers(0, 10**6).map(lambda k: k / 10**6),
    )


@pytest.fixture
def tmp_json(tmp_path):
    return lambda name: tmp_path / name


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(RESULTS, key=lambda c: int(c[2:])):
        ok, detail = RESULTS[cid]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {cid} {detail}")
