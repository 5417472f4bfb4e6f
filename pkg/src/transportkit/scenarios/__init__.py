"""Built-in scenarios and the registry used by the command line."""
from __future__ import annotations

from .base import PreflightError, Scenario
from .lorenz import lorenz_field, lorenz_sheet
from .pyramid import PyramidJob, pyramid_gaussian, single_pyramid_reference
from .reynolds import reynolds_custom, reynolds_translate
from .wave import SandwichWave, sandwich_wave

__all__ = [
    "Scenario",
    "PreflightError",
    "reynolds_translate",
    "reynolds_custom",
    "lorenz_sheet",
    "lorenz_field",
    "sandwich_wave",
    "SandwichWave",
    "pyramid_gaussian",
    "PyramidJob",
    "single_pyramid_reference",
    "BUILTIN",
    "build",
]


def _lorenz_volume(**kw):
    return lorenz_sheet(weight="volume", **kw)


def _lorenz_gaussian(**kw):
    return lorenz_sheet(weight="gaussian", **kw)


BUILTIN = {
    "reynolds-translate": reynolds_translate,
    "lorenz-volume": _lorenz_volume,
    "lorenz-gaussian": _lorenz_gaussian,
    "sandwich-wave": sandwich_wave,
}


def build(name: str, **params) -> Scenario:
    """Construct a built-in scenario by name."""
    try:
        factory = BUILTIN[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; available: {', '.join(sorted(BUILTIN))}") from None
    return factory(**params)
