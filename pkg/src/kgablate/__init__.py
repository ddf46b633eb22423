"""Reproducible harness for citation-faithfulness experiments on
knowledge-graph QA: KB construction, baseline and tool-loop runners,
graph-visibility interventions, and metric reporting.
"""

__version__ = "0.1.0"

from .graph import (Entity, GraphView, KnowledgeGraph, Relationship,
                    TextUnit, Community, EMPTY_VIEW)
from .agent import AgentPolicy, AnswerRecord, Citations, TraceRecord
from .ablation import Condition, EntityCategorization
from .evaluation import Footprint, MetricCell, RunResult

__all__ = [
    "AgentPolicy", "AnswerRecord", "Citations", "Community", "Condition",
    "EMPTY_VIEW", "Entity", "EntityCategorization", "Footprint",
    "GraphView", "KnowledgeGraph", "MetricCell", "Relationship",
    "RunResult", "TextUnit", "TraceRecord", "__version__",
]
