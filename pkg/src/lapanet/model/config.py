from dataclasses import asdict, dataclass

from .. import io

FULL_GRM = (4, 16, 32, 128)
FULL_ENC = (16, 32, 64, 192)
FULL_BOTTLENECK = 384


@dataclass
class ModelConfig:
    """Layer schedule of the network.

    Channel counts are the full-scale schedule; ``width_multiplier`` scales
    all of them (rounded, at least 1) for desk-sized runs.
    """
    input_size: tuple = (64, 64)
    levels: int = 4
    grm_channels: tuple = FULL_GRM
    enc_channels: tuple = FULL_ENC
    bottleneck_channels: int = FULL_BOTTLENECK
    n_coils: int = 4
    width_multiplier: float = 0.25
    se_reduction: int = 4
    mam_hidden: int = 8
    fuse_kernel: int = 1
    combine: str = "concat"          # concat | add
    padding: str = "circular"        # circular | zeros
    use_grm: bool = True
    use_dfm: bool = True
    use_cim: bool = True
    use_mam: bool = True

    def __post_init__(self):
        self.input_size = tuple(int(v) for v in self.input_size)
        self.grm_channels = tuple(int(v) for v in self.grm_channels)
        self.enc_channels = tuple(int(v) for v in self.enc_channels)

    def scaled(self, c):
        return max(1, int(round(c * self.width_multiplier)))

    @property
    def grm(self):
        return tuple(self.scaled(c) for c in self.grm_channels)

    @property
    def enc(self):
        return tuple(self.scaled(c) for c in self.enc_channels)

    @property
    def bottleneck(self):
        return self.scaled(self.bottleneck_channels)

    @property
    def in_channels(self):
        return 4 * self.n_coils

    @property
    def bottleneck_size(self):
        H, W = self.input_size
        return H // 2 ** (self.levels + 1), W // 2 ** (self.levels + 1)

    def level_size(self, i):
        """Spatial size of the level-``i`` feature maps (``i`` starts at 1)."""
        H, W = self.input_size
        return H // 2 ** (i - 1), W // 2 ** (i - 1)

    def field_size(self, i):
        """Resolution of the motion estimate ``u_i``."""
        H, W = self.input_size
        return H // 2 ** (self.levels - i), W // 2 ** (self.levels - i)

    def validate(self):
        H, W = self.input_size
        div = 2 ** (self.levels + 1)
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if H % div or W % div:
            raise ValueError(f"input size {self.input_size} must be divisible by {div}")
        if len(self.grm_channels) != self.levels or len(self.enc_channels) != self.levels:
            raise ValueError("channel schedules must have one entry per level")
        if not 0 < self.width_multiplier <= 1:
            raise ValueError("width_multiplier must be in (0, 1]")
        if self.n_coils < 1:
            raise ValueError("n_coils must be >= 1")
        if self.fuse_kernel not in (1, 3):
            raise ValueError("fuse_kernel must be 1 or 3")
        if self.padding not in ("circular", "zeros"):
            raise ValueError("padding must be 'circular' or 'zeros'")
        if self.combine not in ("concat", "add"):
            raise ValueError("combine must be 'concat' or 'add'")
        return self

    def to_dict(self):
        d = asdict(self)
        d["input_size"] = list(self.input_size)
        d["grm_channels"] = list(self.grm_channels)
        d["enc_channels"] = list(self.enc_channels)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        kw = {k: v for k, v in d.items() if k in known}
        for key in ("input_size", "grm_channels", "enc_channels"):
            if key in kw and not isinstance(kw[key], (list, tuple)):
                kw[key] = [kw[key]]
        return cls(**kw).validate()

    def save(self, path):
        io.write_kv(path, self.to_dict())

    @classmethod
    def load(cls, path):
        return cls.from_dict(io.read_kv(path))


def full_scale_config(n_coils=16):
    return ModelConfig(input_size=(160, 160), n_coils=n_coils, width_multiplier=1.0).validate()


def desk_config(n_coils=4, size=64):
    return ModelConfig(input_size=(size, size), n_coils=n_coils, width_multiplier=0.25).validate()
