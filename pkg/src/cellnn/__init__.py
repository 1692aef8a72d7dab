"""Cell-neighborhood spatial analysis.

From a flat table of typed cell centroids: per-cell 10-nearest-neighbor
composition signatures over six cell types, a weighted 2-D t-SNE of the
deduplicated signature space, per-cohort-group KDE density grids, and
bounding-box odds-ratio quantification, plus a CLI and a read-only HTTP
service for the interactive ROI explorer.
"""

from .density import ContourSpec, DensityGrid, contour_levels, evaluate_density, kde_fit
from .ingest import (
    CELL_TYPES,
    Cell,
    CohortTable,
    IngestError,
    PatchDetection,
    SchemaError,
    merge_patch_coordinates,
    parse_cell_table,
    summarize,
    validate,
    write_cells_csv,
)
from .quantify import BBox, OddsRatioReport, RoiComposition, cells_in_bbox, odds_ratio, roi_composition
from .signature import (
    NeighborhoodSignature,
    SignatureAssignment,
    SignatureAtlas,
    SpatialIndex,
    build_atlas,
    build_spatial_index,
    compute_signatures,
    knn_signature,
)
from .synth import Motif, TissueSpec, generate_tissue
from .tsne import (
    Embedding2D,
    TsneParams,
    kl_divergence,
    pairwise_affinities,
    tsne_embed,
    tsne_gradient,
)

__version__ = "0.1.0"
