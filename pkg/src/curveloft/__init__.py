"""curveloft: variational surfacing of sparse 3D curve sketches.

Fits a neural signed-distance field whose zero-level set interpolates
user-drawn curves and points, minimizes a curvature-based thin-plate energy
over the surface, relaxes that energy near designated sharp-feature curves,
and extracts/evaluates the resulting triangle mesh.
"""

from .curves import (CurveSet, NormalizationTransform, Polyline, load_curves,
                     normalize_curves, perturb_curves, save_curves)
from .energy import (LossBreakdown, LossWeights, cosine_factor, curvatures,
                     dirichlet_off_loss, dirichlet_on_loss, eikonal_loss,
                     feature_weight, smooth_loss, total_loss)
from .field import (AdamState, Jet3, MlpParams, ParamGrads, adam_step,
                    forward_jet, forward_jets, init_geometric, load_checkpoint,
                    loss_param_grads, save_checkpoint)
from .geometry import (HausdorffResult, NearestIndex, ScalarGrid, TriangleMesh,
                       dihedral_profile, hausdorff_distance, marching_cubes,
                       mesh_genus, nearest_sq_distance, poisson_disk_sample,
                       read_obj, sample_mesh_surface, write_obj)
from .pipeline import (EvalReport, NetworkConfig, TrainConfig, TrainLog,
                       evaluate_metrics, run_experiment_suite, train)
from .sampling import (SampleBuffers, project_to_zero_set, refresh_zero_samples,
                       sample_box_uniform, sample_curve_batch)

__version__ = "0.1.0"
