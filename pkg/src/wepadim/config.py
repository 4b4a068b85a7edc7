"""Pipeline configuration: the swept hyperparameter axes plus layer choice."""

from __future__ import annotations

from dataclasses import dataclass, field

from .dwt import SUPPORTED_FAMILIES
from .embed import SubbandSet
from .errors import ConfigError

DEFAULT_SUBBANDS = "HL_LH_LL"


@dataclass(frozen=True)
class WaveletConfig:
    """One point of the sweep grid.

    ``layers`` empty means "all layers the manifest provides", resolved at
    fit time and recorded in the model bundle.
    """

    family: str = "haar"
    level: int = 1
    subbands: SubbandSet = field(
        default_factory=lambda: SubbandSet.parse(DEFAULT_SUBBANDS)
    )
    sigma: float = 2.0
    cov_reg: float = 0.01
    layers: tuple[str, ...] = ()

    def __post_init__(self):
        if self.family not in SUPPORTED_FAMILIES:
            raise ConfigError(
                f"unknown wavelet family {self.family!r}; "
                f"supported: {', '.join(SUPPORTED_FAMILIES)}"
            )
        if self.level < 1:
            raise ConfigError(f"level must be >= 1, got {self.level}")
        if self.sigma < 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")
        if self.cov_reg < 0:
            raise ConfigError(f"cov_reg must be >= 0, got {self.cov_reg}")

    def replace(self, **kw) -> "WaveletConfig":
        from dataclasses import replace

        return replace(self, **kw)

    def to_json_dict(self) -> dict:
        return {
            "family": self.family,
            "level": self.level,
            "subbands": self.subbands.key,
            "sigma": self.sigma,
            "cov_reg": self.cov_reg,
            "layers": list(self.layers),
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "WaveletConfig":
        return cls(
            family=doc["family"],
            level=int(doc["level"]),
            subbands=SubbandSet.parse(doc["subbands"]),
            sigma=float(doc["sigma"]),
            cov_reg=float(doc["cov_reg"]),
            layers=tuple(doc.get("layers", ())),
        )
