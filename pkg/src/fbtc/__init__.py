"""Feature-based trajectory clustering.

Trajectories are mapped to a vector of twenty shape measures, standardised,
linked by a mutual nearest-neighbour similarity graph and partitioned
spectrally with hard or fuzzy K-means.
"""

from fbtc.errors import FBTCError
from fbtc.features import FeatureMatrix, flag_outliers, standardize, winsorize
from fbtc.graph import build_similarity, choose_p
from fbtc.harness import evaluate, generate_three_group
from fbtc.io import load_long_csv, write_long_csv
from fbtc.measures import MEASURE_IDS, compute_measure_vector, compute_measures
from fbtc.partition import fuzzy_kmeans, kmeans
from fbtc.pipeline import RunConfig, run
from fbtc.spectral import spectral_cluster, spectral_embedding
from fbtc.trajectory import Trajectory, validate_trajectory

__version__ = "0.1.0"
