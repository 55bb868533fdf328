"""Forward model of the ion-photon experiment."""

from .channel import TrueState, apply_converter_channel, build_true_state, simulate_probe_stokes
from .simulate import (
    DetectionChain,
    detection_probability_chain,
    expected_histograms,
    simulate,
    simulate_setting,
)
