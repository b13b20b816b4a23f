"""Componentization toolkit.

Decompose monolithic model responses into typed, linked components,
manipulate them through events (Manual Edit, Toggle, Reprompt), and
recompose the final artifact byte-exactly.
"""

from .composer import (
    ComposedArtifact,
    ManipulationEvent,
    apply,
    component_diff,
    manual_edit,
    recompose,
    replay,
    reprompt_result,
    toggle,
)
from .engine import Block, Profile, classify, decompose, link, parse, segment
from .gateway import ModelGateway, ModelHandle, ModelParams, VendorMetadata
from .model import (
    Component,
    DecomposedResponse,
    Link,
    ValidationReport,
    from_json,
    to_json,
    topological_order,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "Block",
    "Component",
    "ComposedArtifact",
    "DecomposedResponse",
    "Link",
    "ManipulationEvent",
    "ModelGateway",
    "ModelHandle",
    "ModelParams",
    "Profile",
    "ValidationReport",
    "VendorMetadata",
    "apply",
    "classify",
    "component_diff",
    "decompose",
    "from_json",
    "link",
    "manual_edit",
    "parse",
    "recompose",
    "replay",
    "reprompt_result",
    "segment",
    "to_json",
    "toggle",
    "topological_order",
    "validate",
]
