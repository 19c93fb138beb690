from .catalog import Catalog, CatalogError, MetaSpec, ObjectSpec, Tray, load_catalog
from .motion import TransitionResult, perturb, pick_and_place
from .realize import realize
from .scene import FLOOR, PlacedObject, PlacementFailure, RealizedScene, support_graph
from .stability import StabilityReport, check_stability, contact_region

__all__ = [
    "Catalog", "CatalogError", "FLOOR", "MetaSpec", "ObjectSpec", "PlacedObject", "PlacementFailure",
    "RealizedScene", "StabilityReport", "TransitionResult", "Tray", "check_stability", "contact_region",
    "load_catalog", "perturb", "pick_and_place", "realize", "support_graph",
]
