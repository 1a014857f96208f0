"""Retrieval, embedding, saliency, correspondence and prediction on top of descriptors."""

from ilscape.analysis.database import (
    DescriptorDB,
    Entry,
    distance_matrix,
    load_db,
    pairwise,
    scan_directory,
    write_manifest,
    write_matrix_csv,
)
from ilscape.analysis.retrieval import (
    RECALL_GRID,
    leave_one_out,
    pr_curve,
    precision_at_recall,
    retrieve,
    write_pr_csv,
)
from ilscape.analysis.mds import mds_embed, scatter_svg, write_points_csv, write_svg
from ilscape.analysis.saliency import SaliencyMap, export_obj, saliency
from ilscape.analysis.correspondence import Match, correspondence, write_matches_csv
from ilscape.analysis.prediction import SegmentedSignature, evaluate_prediction, predict, segment_signatures

__all__ = [
    "DescriptorDB",
    "Entry",
    "Match",
    "RECALL_GRID",
    "SaliencyMap",
    "SegmentedSignature",
    "correspondence",
    "distance_matrix",
    "evaluate_prediction",
    "export_obj",
    "leave_one_out",
    "load_db",
    "mds_embed",
    "pairwise",
    "pr_curve",
    "precision_at_recall",
    "predict",
    "retrieve",
    "saliency",
    "scan_directory",
    "scatter_svg",
    "segment_signatures",
    "write_manifest",
    "write_matches_csv",
    "write_matrix_csv",
    "write_points_csv",
    "write_pr_csv",
    "write_svg",
]
