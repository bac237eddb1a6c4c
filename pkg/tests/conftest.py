import pytest
import sys
import os
from unittest.mock import MagicMock

# Ensure the src directory is in the path so we can import the package
# This is useful when running tests directly without installing the package
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '../src')))

# Mock streamlit before anything imports groundloop.dashboard
# streamlit is an optional extra and the viewer imports it at the top level
mock_st = MagicMock()
mock_st.session_state = {}
mock_st.query_params = {}
sys.modules["streamlit"] = mock_st

import numpy as np

from groundloop.core import BBox, Detection, DetectionSet, FrameMeta, TruthTag
from groundloop.pipeline import Frame


@pytest.fixture(autouse=True)
def reset_mock_state():
    """
    Fixture to reset the mock streamlit state before each test.
    This ensures that tests do not interfere with each other via shared session state.
    """
    mock_st.session_state.clear()
    mock_st.query_params.clear()


def make_frame(frame_id=0, width=100, height=100, channels=3, pixels=None):
    """A frame whose pixel bytes are ``arange`` modulo 256 unless given."""

    meta = FrameMeta(frame_id, width, height, channels)
    if pixels is None:
        pixels = (np.arange(meta.n_bytes) % 256).astype(np.uint8).tobytes()
    return Frame(meta, pixels)


def make_detections(frame_id=0, *items):
    """``items`` are (x, y, w, h, label, confidence[, truth_tag]) tuples."""

    dets = []
    for item in items:
        x, y, w, h, label, conf = item[:6]
        tag = item[6] if len(item) > 6 else TruthTag.UNKNOWN
        dets.append(Detection(BBox(x, y, w, h), label, conf, tag))
    return DetectionSet(frame_id, tuple(dets))


@pytest.fixture
def frame():
    return make_frame()


@pytest.fixture
def run_dir(tmp_path):
    return tmp_path / "runs"
