import pytest

from groundloop.core import (
    BBox,
    Description,
    FrameMeta,
    Grounding,
    SceneSummary,
    Token,
    TruthTag,
    decode,
    encode,
    encode_lines,
    label_words,
    load_vocabulary,
    load_whitelist,
    validate_detection_set,
)
from groundloop.errors import (
    BoxOutOfBoundsError,
    ConfidenceOutOfRangeError,
    EmptyLabelError,
    FrameMismatchError,
    ValidationError,
)

from tests.conftest import make_detections


class TestValues:
    """Tests for the invariants of core values."""

    @pytest.mark.parametrize("x, y, w, h", [(-1, 0, 5, 5), (0, -1, 5, 5), (0, 0, 0, 5), (0, 0, 5, 0)])
    def test_bbox_rejects_degenerate(self, x, y, w, h):
        """Test that negative origins and non-positive sizes are rejected."""

        with pytest.raises(ValidationError):
            BBox(x, y, w, h)

    def test_bbox_clamping(self):
        """Test intersection with the frame."""

        assert BBox(90, 90, 20, 20).clamped(100, 100) == BBox(90, 90, 10, 10)
        assert BBox(100, 10, 5, 5).clamped(100, 100) is None

    def test_iou(self):
        """Test intersection over union for disjoint, identical and half-overlapping boxes."""

        a = BBox(0, 0, 10, 10)
        assert a.iou(BBox(20, 20, 5, 5)) == 0.0
        assert a.iou(a) == 1.0
        assert a.iou(BBox(5, 0, 10, 10)) == pytest.approx(50 / 150)

    def test_frame_meta_geometry(self):
        """Test derived byte size and rejection of empty frames."""

        assert FrameMeta(0, 4, 3, 3).n_bytes == 36
        with pytest.raises(ValidationError):
            FrameMeta(0, 0, 3)

    def test_description_needs_tokens(self):
        """Test that a description without tokens is rejected."""

        with pytest.raises(ValidationError):
            Description(0, ())

    def test_description_text_and_content(self):
        """Test joined text and content classification of tokens."""

        d = Description(0, (Token("a", Grounding.TEMPLATE), Token("dog", Grounding.GROUNDED)))
        assert d.text == "a dog"
        assert [t.is_content for t in d.tokens] == [False, True]

    def test_scene_summary_prefix(self):
        """Test that a summary must start with the scene prefix."""

        with pytest.raises(ValidationError):
            SceneSummary(rendered="A dog.")


class TestValidateDetectionSet:
    """Tests for detection set validation against a frame."""

    meta = FrameMeta(3, 100, 80)

    def test_valid_set_is_returned_unchanged(self):
        """Test the happy path."""

        ds = make_detections(3, (0, 0, 100, 80, "dog", 1.0), (10, 10, 5, 5, "car", 0.0))
        assert validate_detection_set(ds, self.meta) is ds

    @pytest.mark.parametrize("conf", [-0.01, 1.01, float("nan")])
    def test_confidence_out_of_range(self, conf):
        """Test that confidences outside [0, 1], and NaN, are rejected with the index."""

        ds = make_detections(3, (0, 0, 5, 5, "dog", 0.5), (0, 0, 5, 5, "cat", conf))
        with pytest.raises(ConfidenceOutOfRangeError) as exc:
            validate_detection_set(ds, self.meta)

        assert exc.value.index == 1

    def test_box_out_of_bounds(self):
        """Test that a box crossing the frame edge is rejected."""

        ds = make_detections(3, (95, 0, 10, 10, "dog", 0.5))
        with pytest.raises(BoxOutOfBoundsError) as exc:
            validate_detection_set(ds, self.meta)

        assert exc.value.index == 0

    def test_empty_label(self):
        """Test that empty labels, and labels outside a closed vocabulary, are rejected."""

        with pytest.raises(EmptyLabelError):
            validate_detection_set(make_detections(3, (0, 0, 5, 5, "", 0.5)), self.meta)

        with pytest.raises(EmptyLabelError):
            validate_detection_set(make_detections(3, (0, 0, 5, 5, "unicorn", 0.5)), self.meta, load_vocabulary())

    def test_frame_mismatch(self):
        """Test that a set from another frame is rejected."""

        with pytest.raises(FrameMismatchError):
            validate_detection_set(make_detections(4), self.meta)


class TestVocabulary:
    """Tests for the packaged word lists."""

    def test_coco_labels(self):
        """Test that the default vocabulary holds the 80 COCO labels in order."""

        labels = load_vocabulary()
        assert len(labels) == 80
        assert labels[0] == "person"
        assert "traffic light" in labels

    def test_whitelist_is_lowercase_function_words(self):
        """Test that the template whitelist holds common function words only."""

        words = load_whitelist()
        assert {"a", "the", "is", "in"} <= words
        assert all(w == w.lower() for w in words)
        assert "dog" not in words

    def test_label_words_split_multiword_labels(self):
        """Test that multi-word labels contribute every word."""

        assert label_words(["Traffic Light", "dog"]) == {"traffic light", "traffic", "light", "dog"}


class TestLineCodec:
    """Tests for the one-record-per-line codec."""

    def test_detection_set_line(self):
        """Test that a detection set survives a line with enums and nesting intact."""

        ds = make_detections(7, (1, 2, 3, 4, "dog", 0.25, TruthTag.TRUE_POSITIVE))
        line = encode(ds)

        assert "\n" not in line
        assert decode(line) == ds

    def test_description_line(self):
        """Test a description with mixed groundings."""

        d = Description(2, (Token("the", Grounding.TEMPLATE), Token("red", Grounding.UNGROUNDED)))
        assert decode(encode(d)) == d

    def test_float_exactness(self):
        """Test that confidences are carried bit-exactly."""

        conf = 0.1 + 0.2
        ds = make_detections(0, (0, 0, 1, 1, "cat", conf))
        assert decode(encode(ds)).detections[0].confidence == conf

    def test_encode_lines(self):
        """Test that each value takes one terminated line."""

        text = encode_lines([BBox(0, 0, 1, 1), FrameMeta(1, 2, 2)])
        assert text.count("\n") == 2
        assert [decode(line) for line in text.splitlines()] == [BBox(0, 0, 1, 1), FrameMeta(1, 2, 2)]

    def test_unknown_type(self):
        """Test that a record of an unregistered type is rejected."""

        with pytest.raises(ValidationError):
            decode('{"type":"Nope"}')
