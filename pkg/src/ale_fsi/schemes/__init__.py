"""Time integration schemes for the monolithic ALE system."""

from ale_fsi.schemes.base import StepResult, TimeScheme
from ale_fsi.schemes.first_order import FirstOrderScheme
from ale_fsi.schemes.imex_prk2 import ImexPrk2Scheme, PrkCoefficients

SCHEMES: dict[str, type[TimeScheme]] = {
    "fo": FirstOrderScheme,
    "prk2": ImexPrk2Scheme,
}


def get_scheme(code: str) -> TimeScheme:
    try:
        return SCHEMES[code]()
    except KeyError:
        raise ValueError(f"unknown scheme {code!r}, expected one of {sorted(SCHEMES)}") from None


__all__ = [
    "FirstOrderScheme",
    "ImexPrk2Scheme",
    "PrkCoefficients",
    "SCHEMES",
    "StepResult",
    "TimeScheme",
    "get_scheme",
]
