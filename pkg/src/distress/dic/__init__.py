"""Subset matching: correlation criteria, Basic and Extended engines, full-field driver."""

from distress.dic.basic import basic_dic, fit_biparabola, subpixel_peak
from distress.dic.criteria import min_subset_size, zncc, znssd
from distress.dic.extended import extended_dic
from distress.dic.full_field import Grid, default_search_radius, full_field, make_grid
from distress.dic.model import (
    GRADIENT_BOUND,
    MAX_ITERATIONS,
    DegenerateSubsetError,
    MatchResult,
    SearchRangeError,
    ShapeParams,
    Status,
    SubsetSpec,
)
from distress.dic.search import batch_correlation_maps, full_range_search, integer_search

__all__ = [
    "GRADIENT_BOUND", "MAX_ITERATIONS", "DegenerateSubsetError", "Grid", "MatchResult",
    "SearchRangeError", "ShapeParams", "Status", "SubsetSpec", "basic_dic", "batch_correlation_maps",
    "default_search_radius", "extended_dic", "fit_biparabola", "full_field", "full_range_search",
    "integer_search", "make_grid", "min_subset_size", "subpixel_peak", "zncc", "znssd",
]
