"""Products of independent efficiency factors with first-order error propagation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class BudgetError(ValueError):
    pass


@dataclass
class EfficiencyChain:
    """Ordered ``(name, value, sigma)`` factors; ``sigma`` may be ``None``."""

    factors: list[tuple[str, float, float | None]] = field(default_factory=list)

    def __post_init__(self):
        norm = []
        for f in self.factors:
            name, value, sigma = (tuple(f) + (None,))[:3]
            if not 0.0 <= value <= 1.0:
                raise BudgetError(f"factor {name!r} = {value} is not a probability")
            if sigma is not None and sigma < 0:
                raise BudgetError(f"factor {name!r} has negative sigma")
            norm.append((str(name), float(value), None if sigma is None else float(sigma)))
        self.factors = norm

    def __len__(self) -> int:
        return len(self.factors)

    def to_json(self) -> list[dict]:
        return [{"name": n, "value": v, "sigma": s} for n, v, s in self.factors]


def chain_product(chain: EfficiencyChain) -> tuple[float, float]:
    """Product of all factors; sigma from relative errors added in quadrature."""
    if not len(chain):
        raise BudgetError("empty efficiency chain")
    values = np.array([v for _, v, _ in chain.factors])
    value = float(np.prod(values))
    rel2 = 0.0
    for _, v, s in chain.factors:
        if s is None or s == 0.0:
            continue
        if v == 0.0:
            # product vanishes; its spread is set by this factor alone
            others = float(np.prod([w for n2, w, _ in chain.factors if w != 0.0]))
            return value, float(s * others)
        rel2 += (s / v) ** 2
    return value, float(abs(value) * np.sqrt(rel2))


# individually measured factors of the two converter arms (waveguide coupling,
# internal efficiency, dichroic mirrors, band-pass, fiber coupling, FBG,
# remaining optics, asymmetry correction)
CONVERTER_H_ARM = EfficiencyChain(
    [
        ("waveguide_coupling", 0.797, None),
        ("internal_efficiency", 0.966, None),
        ("dichroic_mirrors", 0.816, None),
        ("bandpass_filter", 0.971, None),
        ("fiber_coupling", 0.82, None),
        ("fiber_bragg_grating", 0.695, None),
        ("optical_elements", 0.825, None),
        ("asymmetry_correction", 0.924, None),
    ]
)

CONVERTER_V_ARM = EfficiencyChain(
    [
        ("waveguide_coupling", 0.782, None),
        ("internal_efficiency", 0.896, None),
        ("dichroic_mirrors", 0.866, None),
        ("bandpass_filter", 0.971, None),
        ("fiber_coupling", 0.778, None),
        ("fiber_bragg_grating", 0.693, None),
        ("optical_elements", 0.838, None),
        ("asymmetry_correction", 1.0, None),
    ]
)
