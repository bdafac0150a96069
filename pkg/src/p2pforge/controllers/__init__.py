"""The standard investigations: enumeration, anatomy, evidence collection, takeover."""

from p2pforge.controllers.anatomy import (
    AnatomyReport,
    AnatomyThresholds,
    CncObserved,
    InsufficientObservations,
    TopologyClass,
    classify_anatomy,
    observe_anatomy,
    origin_metrics,
)
from p2pforge.controllers.collection import CollectionResult, collect_evidence
from p2pforge.controllers.enumeration import Enumeration, EnumerationReport, StopRule, enumerate_network
from p2pforge.controllers.reports import REPORT_KEY, dumps_report, load_report, make_report, summary_text
from p2pforge.controllers.takeover import RealTransportRefused, TakeoverReport, takeover

enumerate = enumerate_network  # noqa: A001 - the operation's public name

__all__ = [
    "REPORT_KEY", "AnatomyReport", "AnatomyThresholds", "CncObserved", "CollectionResult",
    "Enumeration", "EnumerationReport", "InsufficientObservations", "RealTransportRefused",
    "StopRule", "TakeoverReport", "TopologyClass", "classify_anatomy", "collect_evidence",
    "dumps_report", "enumerate", "enumerate_network", "load_report", "make_report",
    "observe_anatomy", "origin_metrics", "summary_text", "takeover",
]
