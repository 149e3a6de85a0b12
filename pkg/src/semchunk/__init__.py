"""Semantic layout chunking for textual and visual RAG, with stage-by-stage evaluation."""

__version__ = "0.1.0"

from .geometry import BBox, PageGeom, clamp, iou, union_area
from .chunker import (
    BoxCategory,
    Chunk,
    GranularityStats,
    LayoutBox,
    LayoutPrediction,
    filter_confidence,
    granularity_stats,
    plan_crops,
    reading_order,
    whole_page_chunk,
)
from .match_eval import coverage, hungarian_max, matched_iou, threshold_sweep
from .retrieval import bm25_build, bm25_query, lcs_score, maxsim_score, normalize_text, rank_images
from .rag_eval import aggregate, judge, pipeline_score, token_f1
from .vlm_convert import ChatClient, ConvertParams, Converter, assemble_page_text, cost_report, generate_answer
