"""Model configuration and named presets."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .modulation_analysis import MOD_SPECS
from .peripheral_model import PeripheralConfig

SIGMA_DEFAULT = 10.1


@dataclass(frozen=True)
class ModelConfig:
    """All model-stage parameters.

    Parameters
    ----------
    peripheral : PeripheralConfig
    sigma : float
        Standard deviation of the internal noise added to each CCV, in MU.
    decimate : int
        Integer decimation applied after the hair-cell stage; 1 disables it.
    mod_specs : tuple of ModFilterSpec
    name : str
    """

    peripheral: PeripheralConfig = field(default_factory=PeripheralConfig)
    sigma: float = SIGMA_DEFAULT
    decimate: int = 1
    mod_specs: tuple = MOD_SPECS
    name: str = "custom"

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if int(self.decimate) != self.decimate or self.decimate < 1:
            raise ValueError("decimate must be a positive integer")

    def with_limiter(self, lim: float) -> "ModelConfig":
        return replace(self, peripheral=replace(self.peripheral, limiter_factor=lim))

    def with_(self, **kw) -> "ModelConfig":
        per = {k: kw.pop(k) for k in list(kw) if k in PeripheralConfig.__dataclass_fields__}
        cfg = replace(self, **kw)
        if per:
            cfg = replace(cfg, peripheral=replace(cfg.peripheral, **per))
        return cfg

    def describe(self) -> dict:
        d = asdict(self.peripheral)
        d["limiter_factor"] = _jsonable(d["limiter_factor"])
        return {"name": self.name, "sigma": self.sigma, "decimate": self.decimate, "peripheral": d}


def _jsonable(v):
    return "inf" if isinstance(v, float) and np.isinf(v) else v


PRESETS = {
    "lim5": ModelConfig(PeripheralConfig(limiter_factor=5.0), name="lim5"),
    "lim10": ModelConfig(PeripheralConfig(limiter_factor=10.0), name="lim10"),
    "nolimit": ModelConfig(PeripheralConfig(limiter_factor=np.inf), name="nolimit"),
}


def get_preset(name: str) -> ModelConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown model preset {name!r}; choose from {sorted(PRESETS)}") from None
