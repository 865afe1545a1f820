"""Estimation and clustering of orientations under a finite symmetry group.

Orientations are unit quaternions ``(q1, q2, q3, q4)`` with ``q1`` the scalar
part. Densities are von Mises-Fisher or Watson laws averaged over the group
actions, so they are invariant under the group by construction.
"""
from .cluster import em_mixture, glrt_multimodal, kmeans_spherical, match_clusters
from .density import Family, GInvariantModel, MixtureModel, ginv_logpdf, mixture_logpdf
from .estimator import EMConfig, EMReport, em_vmf, em_vmf_hyperbolic, em_watson, ml_modified, ml_naive
from .sampler import make_rng, sample_uniform_sphere, sample_vmf, sample_watson, wrap_to_fz
from .symgroup import (
    SymmetryGroup,
    build_cubic_group,
    build_sign_group,
    group_distance,
    map_to_fundamental_zone,
    quotient_group,
)

__version__ = "0.1.0"
