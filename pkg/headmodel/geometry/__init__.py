"""
Geometry: meshes and point clouds, sampling, nearest neighbours, level-set
extraction, reconstruction metrics and file I/O.
"""

from .mesh import LABEL_BACK, LABEL_FRONT, OrientedPointCloud, TriMesh, mirror_mesh
from .neighbors import NNIndex, SurfaceIndex, closest_points_on_triangles, nn_query, point_to_mesh_distance
from .sampling import allocate_counts, interpolate, sample_barycentric, sample_surface
from .extraction import DEFAULT_BBOX, ExtractionResult, evaluate_grid, extract_mesh
from .metrics import MM_TO_UNITS, MetricsConfig, MetricsReport, chamfer_distance, evaluate_metrics, mm_to_canonical
from .io import (
    load_json,
    load_mesh,
    load_point_cloud,
    save_csv,
    save_json,
    save_mesh,
    save_point_cloud,
)

__all__ = [
    'LABEL_BACK',
    'LABEL_FRONT',
    'OrientedPointCloud',
    'TriMesh',
    'mirror_mesh',
    'NNIndex',
    'SurfaceIndex',
    'closest_points_on_triangles',
    'nn_query',
    'point_to_mesh_distance',
    'allocate_counts',
    'interpolate',
    'sample_barycentric',
    'sample_surface',
    'DEFAULT_BBOX',
    'ExtractionResult',
    'evaluate_grid',
    'extract_mesh',
    'MM_TO_UNITS',
    'MetricsConfig',
    'MetricsReport',
    'chamfer_distance',
    'evaluate_metrics',
    'mm_to_canonical',
    'load_json',
    'load_mesh',
    'load_point_cloud',
    'save_csv',
    'save_json',
    'save_mesh',
    'save_point_cloud',
]
