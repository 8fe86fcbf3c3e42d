"""Per-protocol safety rules behind a common interface."""
from .base import SafetyRules, SafetyState
from .hotstuff import HotStuff
from .streamlet import Streamlet
from .twochain import TwoChainHotStuff

PROTOCOLS = {"hotstuff": HotStuff, "2chs": TwoChainHotStuff, "streamlet": Streamlet}


def get_rules(protocol: str):
    try:
        return PROTOCOLS[protocol]
    except KeyError:
        raise ValueError(f"unknown protocol {protocol!r}; choose from {sorted(PROTOCOLS)}") from None


__all__ = ["SafetyRules", "SafetyState", "HotStuff", "TwoChainHotStuff", "Streamlet", "PROTOCOLS", "get_rules"]
