"""Mobility analytics on call detail records.

Synthesizes and ingests CDR streams, trains a per-user hour-of-week
most-frequent-antenna location predictor, derives commute statistics and
call-density grids, and tags event attendees from a match fixture to enrich
the predictor during match windows.
"""

from .core import (
    Antenna,
    AntennaId,
    BoundingBox,
    CallDirection,
    CdrRecord,
    GeoPoint,
    TimeSlot,
    UserId,
    grid_cell,
    haversine_km,
    time_slot,
)
from .ingest import (
    AntennaRegistry,
    DatasetStats,
    ParsePolicy,
    dataset_stats,
    load_antennas,
    stream_cdrs,
)
from .predictor import (
    AntennaClustering,
    BaselineModel,
    DirectionFilter,
    EvalReport,
    cluster_antennas,
    evaluate,
    train,
)
from .commute import (
    CommuteReport,
    DensityGrid,
    ImportantPlaces,
    commute_radius,
    density_grid,
    important_places,
)
from .events import (
    ComparisonMode,
    EnrichedEvalReport,
    FanTagSet,
    Fixture,
    MatchEvent,
    StadiumZone,
    compare_on_matches,
    convergence_grids,
    enriched_predict,
    stadium_zone,
    tag_fans,
)
from .synth import SynthConfig, SyntheticGroundTruth, generate_cdrs, generate_population

__version__ = "0.1.0"
