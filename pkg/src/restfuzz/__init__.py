"""Coverage-guided, stateful REST API fuzzer driven by OpenAPI specifications."""

from .campaign import CampaignConfig, CampaignStats, run_campaign
from .corpus import RequestSequence, generate_corpus, parse_sequence, serialize_sequence
from .graph import build_dependency_graph
from .openapi import ApiSpec, load_spec, parse_spec

__all__ = [
    "ApiSpec",
    "CampaignConfig",
    "CampaignStats",
    "RequestSequence",
    "build_dependency_graph",
    "generate_corpus",
    "load_spec",
    "parse_sequence",
    "parse_spec",
    "run_campaign",
    "serialize_sequence",
]

__version__ = "0.1.0"
