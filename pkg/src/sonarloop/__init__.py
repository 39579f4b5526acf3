"""Loop-closure detection for multibeam sonar surveys.

Submaps accumulated from consecutive pings are compared through six
rotation-invariant per-point feature maps (neighborhood geometry, normal
angles, curvature; mean and variance of each); pairs whose structural
similarity exceeds a threshold are reported as loop candidates.
"""

__version__ = "0.1.0"

from .errors import (DatasetFormatError, DegenerateCloudError, EvaluationError,
                     InvalidPoseError, RejectedInputError, SonarLoopError,
                     UndefinedSimilarityError)
from .geometry import (PointCloud, Pose, RelativeTransform, relative_transform,
                       transform_points)
from .dead_reckoning import (DeadReckoningConfig, DvlSample, FilterState,
                             ImuSample, ekf_step, madgwick_update,
                             run_dead_reckoning)
from .submaps import (SonarPing, Submap, SubmapConfig, accumulate, build_submaps,
                      crop, ping_to_points)
from .features import (FeatureSet, NeighborIndex, QuantityMatrix,
                       compute_feature_set, curvature_per_point,
                       curvature_quantity, estimate_normals, geometry_quantity,
                       knn, normal_quantity, quantities_to_feature_set)
from .similarity import (LoopCandidate, SubmapRecord, cloud_similarity,
                         detect_loops, map_similarity, point_similarity)
from .evaluation import (GroundTruthLabel, PrPoint, average_precision,
                         label_pairs, pr_curve)
from .synth import (NoiseConfig, SCENARIOS, Scenario, SurveyPlan, Terrain,
                    generate_survey, truth_loops)
from .ingestion import Dataset, DatasetMetadata, load_dataset, save_dataset
