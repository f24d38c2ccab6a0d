"""logveil: sensitive-attribute detection and anonymization for software logs.

The toolkit covers the full workflow: a provenanced regular-expression bank
with ordered placeholder anonymization, IOB2-annotated corpora over
whitespace tokens, a hierarchical sequence tagger (coarse kinds, then net
sub-kinds), token-overlap evaluation with cross-validation drivers, and a
wire protocol for plugging in external neural labelers.
"""

from .model import (
    AnnotatedLine,
    AttributeKind,
    DetectionSpan,
    EntitySpan,
    IobLabel,
    IobValidationError,
    LogLine,
    NetSubKind,
    Token,
    begin,
    entity_spans,
    inside,
    labels_from_entities,
    parse_label,
    validate_iob,
)
from .tokenize import NetSplitRule, derive_net_corpus, net_split, tokenize

__version__ = "0.1.0"

__all__ = [
    "AnnotatedLine",
    "AttributeKind",
    "DetectionSpan",
    "EntitySpan",
    "IobLabel",
    "IobValidationError",
    "LogLine",
    "NetSubKind",
    "NetSplitRule",
    "Token",
    "begin",
    "derive_net_corpus",
    "entity_spans",
    "inside",
    "labels_from_entities",
    "net_split",
    "parse_label",
    "tokenize",
    "validate_iob",
    "__version__",
]
