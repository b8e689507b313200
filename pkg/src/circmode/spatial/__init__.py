"""Patch construction, variogram fitting and hierarchical FDR over grid cells."""

from .fdr import (FdrOutcome, PatchStatistic, bh, conditional_pvalue, hierarchical_test,
                  patch_pvalue, two_stage_bh, weighted_bh, zscore_from_pvalue)
from .patches import (Cell, Patch, aggregate_land_cover, build_patches, cell_id,
                      land_cover_shares)
from .variogram import (VariogramModel, distance_matrix_km, empirical_variogram,
                        fit_variogram, haversine_km, pairwise_km)

__all__ = [
    "Cell", "FdrOutcome", "Patch", "PatchStatistic", "VariogramModel",
    "aggregate_land_cover", "bh", "build_patches", "cell_id", "conditional_pvalue",
    "distance_matrix_km", "empirical_variogram", "fit_variogram", "haversine_km",
    "hierarchical_test", "land_cover_shares", "pairwise_km", "patch_pvalue",
    "two_stage_bh", "weighted_bh", "zscore_from_pvalue",
]
