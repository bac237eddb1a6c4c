import logging
from typing import Optional, Tuple

from ..core.section import ConfigSection
from ..core.var import ConfigVar
from ..core.vocab import load_vocabulary
from ..errors import ConfigError
from ..utils.config_file import read_packaged_config

logger = logging.getLogger(__name__)

CALIBRATED_FIXTURE = "calibrated.conf"
FREEFORM_FIXTURE = "freeform.conf"


class SimWorldConfig(ConfigSection):
    """
    Synthetic world: object layout, detector confidences and generator noise.

    Confidence distributions are Beta(a, b) pairs; ``fp_rate`` is the
    Poisson mean of false positives per frame.
    """

    class Config:
        key_prefix = "sim."

    seed: int = ConfigVar(default=0, help="seed of every random stream in a run")
    vocabulary: Optional[str] = ConfigVar(default=None, help="class list file (default: COCO labels)")
    objects_per_frame: Tuple[int, int] = ConfigVar(default=(1, 6), help="inclusive uniform range of true objects")
    frame_size: Tuple[int, int] = ConfigVar(default=(640, 480), help="width, height in pixels")
    tp_conf: Tuple[float, float] = ConfigVar(default=(8.0, 2.0), help="Beta(a, b) of true-object confidences")
    fp_conf: Tuple[float, float] = ConfigVar(default=(2.0, 5.0), help="Beta(a, b) of false-positive confidences")
    fp_rate: float = ConfigVar(default=1.5, help="expected false positives per frame")
    gen_base_halluc: float = ConfigVar(default=0.02, help="chance a true-object description strays")
    free_form_tokens: int = ConfigVar(default=1, help="ungrounded tokens a straying description inserts")
    tokens_per_description: Tuple[int, int] = ConfigVar(default=(5, 12), help="inclusive uniform token count")
    detect_prob: float = ConfigVar(default=0.95, help="chance a true object is detected")

    def validate(self) -> None:

        if self.seed < 0:
            raise ConfigError(self.key_of("seed"), f"must not be negative, got {self.seed}")

        lo, hi = self.objects_per_frame
        if not (0 <= lo <= hi):
            raise ConfigError(self.key_of("objects_per_frame"), f"need 0 <= min <= max, got {self.objects_per_frame}")

        width, height = self.frame_size
        if width < 16 or height < 16:
            raise ConfigError(self.key_of("frame_size"), f"frame must be at least 16x16, got {self.frame_size}")

        for name in ("tp_conf", "fp_conf"):
            if min(getattr(self, name)) <= 0:
                raise ConfigError(self.key_of(name), f"Beta parameters must be positive, got {getattr(self, name)}")

        if self.fp_rate < 0:
            raise ConfigError(self.key_of("fp_rate"), f"must not be negative, got {self.fp_rate}")

        for name in ("gen_base_halluc", "detect_prob"):
            if not (0.0 <= getattr(self, name) <= 1.0):
                raise ConfigError(self.key_of(name), f"probability outside [0, 1]: {getattr(self, name)}")

        if self.free_form_tokens < 1:
            raise ConfigError(self.key_of("free_form_tokens"), "must be at least 1")

        lo, hi = self.tokens_per_description
        if not (1 <= lo <= hi):
            raise ConfigError(self.key_of("tokens_per_description"), f"need 1 <= min <= max, got {self.tokens_per_description}")

    def labels(self) -> Tuple[str, ...]:
        return load_vocabulary(self.vocabulary)

    @classmethod
    def fixture(cls, name: str, **changes) -> "SimWorldConfig":
        """Loads a packaged fixture; ``changes`` override fixture values."""

        cfg = cls.from_text(read_packaged_config(name))
        return cfg.replace(**changes) if changes else cfg

    @classmethod
    def calibrated(cls, **changes) -> "SimWorldConfig":
        """World tuned so a 0.1 step in tau around 0.5 moves h by about 0.01."""

        return cls.fixture(CALIBRATED_FIXTURE, **changes)

    def free_form(self) -> "SimWorldConfig":
        """This world with the generator noise of an unconstrained free-text prompt."""

        return type(self).from_text(read_packaged_config(FREEFORM_FIXTURE), base=self)
