import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from groundloop.core import BBox, Description, Detection, DetectionSet, FrameMeta, Grounding, Token
from groundloop.errors import (
    AlignmentMismatchError,
    EmptyLabelError,
    GeometryMismatchError,
    MalformedBackendReplyError,
    ValidationError,
    ZeroAreaRoiError,
)
from groundloop.pipeline import (
    Prompt,
    Relation,
    Roi,
    SpatialRelation,
    assemble_scene,
    build_prompt,
    crop_roi,
    filter_detections,
    generate,
    spatial_relations,
)

from tests.conftest import make_detections


def words(text, index=0):
    return Description(index, tuple(Token(w, Grounding.UNKNOWN) for w in text.split()))


def brute_force_crop(pixels, meta, bbox):
    """Double loop over the clamped box."""

    x2 = min(bbox.x + bbox.w, meta.width_px)
    y2 = min(bbox.y + bbox.h, meta.height_px)
    out = bytearray()
    for y in range(bbox.y, y2):
        for x in range(bbox.x, x2):
            start = (y * meta.width_px + x) * meta.channels
            out += pixels[start:start + meta.channels]
    return bytes(out)


class TestFilter:
    """Tests for confidence filtering."""

    def test_boundary_is_inclusive(self):
        """Test confidences [0.6, 0.4, 0.5] at tau=0.5 keep indices 0 and 2."""

        ds = make_detections(0, (0, 0, 5, 5, "a", 0.6), (0, 0, 5, 5, "b", 0.4), (0, 0, 5, 5, "c", 0.5))
        assert filter_detections(ds, 0.5).labels == ("a", "c")

    def test_zero_threshold_is_identity(self):
        """Test that tau=0 keeps every detection."""

        ds = make_detections(0, (0, 0, 5, 5, "a", 0.0), (0, 0, 5, 5, "b", 0.99))
        assert filter_detections(ds, 0.0) == ds

    def test_threshold_above_one_annihilates(self):
        """Test that a threshold just above 1 keeps nothing when all confidences are below 1."""

        ds = make_detections(0, (0, 0, 5, 5, "a", 0.999), (0, 0, 5, 5, "b", 0.5))
        assert filter_detections(ds, float(np.nextafter(1.0, 2.0))).n == 0

    @settings(max_examples=1000, deadline=None)
    @given(
        confidences=st.lists(st.floats(0.0, 1.0), max_size=20),
        tau=st.floats(0.0, 1.0),
    )
    def test_matches_brute_force_scan(self, confidences, tau):
        """Property: the result is exactly the detections with confidence >= tau, in order."""

        ds = DetectionSet(0, tuple(Detection(BBox(0, 0, 1, 1), f"l{i}", c) for i, c in enumerate(confidences)))
        expected = [d for d in ds.detections if d.confidence >= tau]

        assert list(filter_detections(ds, tau).detections) == expected


class TestCrop:
    """Tests for region-of-interest cropping."""

    meta = FrameMeta(0, 4, 4, 1)
    pixels = bytes(range(16))

    def test_inner_box(self):
        """Test a 2x2 box at (1, 1) of a 4x4 ramp: [5, 6, 9, 10]."""

        roi = crop_roi(self.pixels, self.meta, BBox(1, 1, 2, 2))
        assert list(roi.pixels) == [5, 6, 9, 10]
        assert roi.bbox == BBox(1, 1, 2, 2)

    def test_full_frame_is_identity(self):
        """Test that a full-frame box returns the frame bytes."""

        assert crop_roi(self.pixels, self.meta, BBox(0, 0, 4, 4)).pixels == self.pixels

    def test_clamped_box(self):
        """Test that a box past the corner is clamped to (3, 3, 1, 1)."""

        roi = crop_roi(self.pixels, self.meta, BBox(3, 3, 5, 5))
        assert roi.bbox == BBox(3, 3, 1, 1)
        assert list(roi.pixels) == [15]

    def test_box_outside_frame(self):
        """Test that a box with nothing inside the frame is rejected."""

        with pytest.raises(ZeroAreaRoiError):
            crop_roi(self.pixels, self.meta, BBox(4, 0, 2, 2))

    def test_buffer_size_mismatch(self):
        """Test that a buffer not matching the geometry is rejected."""

        with pytest.raises(GeometryMismatchError):
            crop_roi(bytes(15), self.meta, BBox(0, 0, 1, 1))

    def test_roi_array_view(self):
        """Test the (h, w, c) view of a multi-channel crop."""

        meta = FrameMeta(0, 3, 2, 3)
        pixels = bytes(range(18))
        roi = crop_roi(pixels, meta, BBox(1, 0, 2, 2))

        assert roi.as_array().shape == (2, 2, 3)
        assert roi.as_array()[1, 0].tolist() == [12, 13, 14]

    def test_roi_checks_length(self):
        """Test that a Roi with the wrong byte count is rejected."""

        with pytest.raises(GeometryMismatchError):
            Roi(0, BBox(0, 0, 2, 2), bytes(3), channels=1)

    @settings(max_examples=1000, deadline=None)
    @given(data=st.data())
    def test_matches_brute_force_loop(self, data):
        """Property: crops equal a per-pixel double loop, byte for byte."""

        width = data.draw(st.integers(1, 24))
        height = data.draw(st.integers(1, 24))
        channels = data.draw(st.sampled_from([1, 3]))
        x = data.draw(st.integers(0, width - 1))
        y = data.draw(st.integers(0, height - 1))
        w = data.draw(st.integers(1, 30))
        h = data.draw(st.integers(1, 30))

        meta = FrameMeta(0, width, height, channels)
        rng = np.random.default_rng([width, height, channels, x, y])
        pixels = rng.integers(0, 256, meta.n_bytes, dtype=np.uint8).tobytes()
        bbox = BBox(x, y, w, h)

        assert crop_roi(pixels, meta, bbox).pixels == brute_force_crop(pixels, meta, bbox)


class TestPrompt:
    """Tests for the fixed prompt template."""

    @pytest.mark.parametrize("label, text", [
        ("dog", "Describe the dog in this scene based on visual evidence."),
        ("traffic light", "Describe the traffic light in this scene based on visual evidence."),
    ])
    def test_template(self, label, text):
        """Test label substitution."""

        assert build_prompt(label) == Prompt(text, label)

    @pytest.mark.parametrize("label", ["", "   "])
    def test_empty_label(self, label):
        """Test that blank labels are rejected."""

        with pytest.raises(EmptyLabelError):
            build_prompt(label)


class TestGenerate:
    """Tests for the backend call wrapper."""

    class Echo:
        def __init__(self, reply):
            self.reply = reply
            self.calls = []

        def generate(self, prompt, roi, detection, scene_labels):
            self.calls.append((prompt, scene_labels))
            return self.reply

    roi = Roi(0, BBox(0, 0, 1, 1), bytes(3))
    det = Detection(BBox(0, 0, 1, 1), "dog", 0.9)

    def test_stamps_index(self):
        """Test that the description is re-indexed to its detection."""

        backend = self.Echo(words("a dog"))
        out = generate(backend, build_prompt("dog"), self.roi, self.det, ["dog", "car"], index=4)

        assert out.source_detection_index == 4
        assert backend.calls[0][1] == ("dog", "car")

    def test_rejects_non_description(self):
        """Test that a backend returning something else is reported as malformed."""

        with pytest.raises(MalformedBackendReplyError):
            generate(self.Echo("a dog"), build_prompt("dog"), self.roi, self.det, ["dog"])

    def test_unknown_tokens_are_tagged(self):
        """Test that untagged reply words are matched against the filtered labels."""

        out = generate(self.Echo(words("a dog sitting")), build_prompt("dog"), self.roi, self.det, ["dog"])

        assert [t.grounding for t in out.tokens] == [Grounding.TEMPLATE, Grounding.GROUNDED, Grounding.UNGROUNDED]

    def test_supplied_tags_are_kept(self):
        """Test that tags set by the backend are not re-derived."""

        reply = Description(0, (Token("a", Grounding.TEMPLATE), Token("frisbee", Grounding.GROUNDED), Token("dog", Grounding.UNKNOWN)))
        out = generate(self.Echo(reply), build_prompt("dog"), self.roi, self.det, ["dog"])

        assert [t.grounding for t in out.tokens] == [Grounding.TEMPLATE, Grounding.GROUNDED, Grounding.GROUNDED]


class TestSpatialRelations:
    """Tests for pairwise relation extraction."""

    def test_left_of(self):
        """Test two side-by-side boxes: A left of B."""

        ds = make_detections(0, (0, 0, 10, 10, "dog", 0.9), (20, 0, 10, 10, "car", 0.9))
        assert spatial_relations(ds) == [SpatialRelation(0, 1, Relation.LEFT_OF)]

    def test_order_follows_x_not_index(self):
        """Test that neighbours are taken left to right regardless of detection order."""

        ds = make_detections(0, (20, 0, 10, 10, "car", 0.9), (0, 0, 10, 10, "dog", 0.9))
        assert spatial_relations(ds) == [SpatialRelation(1, 0, Relation.LEFT_OF)]

    def test_identical_boxes_overlap(self):
        """Test that IoU above 0.1 means overlapping."""

        ds = make_detections(0, (0, 0, 10, 10, "dog", 0.9), (0, 0, 10, 10, "cat", 0.9))
        assert spatial_relations(ds) == [SpatialRelation(0, 1, Relation.OVERLAPPING)]

    @pytest.mark.parametrize("second_y, relation", [(50, Relation.ABOVE), (0, Relation.BELOW)])
    def test_vertical(self, second_y, relation):
        """Test that a larger vertical displacement gives above/below (y grows downwards)."""

        first_y = 50 - second_y
        ds = make_detections(0, (0, first_y, 10, 10, "dog", 0.9), (2, second_y, 10, 10, "cat", 0.9))
        assert spatial_relations(ds) == [SpatialRelation(0, 1, relation)]

    def test_single_detection(self):
        """Test that one detection has no pairs."""

        assert spatial_relations(make_detections(0, (0, 0, 10, 10, "dog", 0.9))) == []

    @pytest.mark.parametrize("subject, obj", [(1, 1), (-1, 0), (0, -2)])

    def test_invalid_pair(self, subject, obj):
        """Test that a relation needs two distinct non-negative indices."""

        with pytest.raises(ValidationError):
            SpatialRelation(subject, obj, Relation.LEFT_OF)


class TestAssembleScene:
    """Tests for scene summary assembly."""

    def test_single_clause(self):
        """Test one description and no relations."""

        ds = make_detections(0, (0, 0, 10, 10, "dog", 0.9))
        summary = assemble_scene([words("a dog sitting")], [], ds)
        assert summary.rendered == "In the scene, a dog sitting."

    def test_empty(self):
        """Test that no descriptions render the empty scene."""

        summary = assemble_scene([], [], make_detections(0))
        assert summary.rendered == "In the scene, nothing is detected."
        assert summary.clauses == ()

    def test_clauses_then_relations(self):
        """Test two clauses followed by a relation clause."""

        ds = make_detections(0, (0, 0, 10, 10, "dog", 0.9), (20, 0, 10, 10, "car", 0.9))
        descriptions = [words("a dog sitting", 0), words("a red car parked", 1)]
        summary = assemble_scene(descriptions, spatial_relations(ds), ds)

        assert summary.rendered == "In the scene, a dog sitting; a red car parked; the dog is left of the car."

    def test_alignment(self):
        """Test that description and detection counts must match."""

        with pytest.raises(AlignmentMismatchError):
            assemble_scene([words("a dog")], [], make_detections(0))
