"""fieldedit: editing neural implicit shapes through boundary sensitivity.

A shape is the sub-zero set of a small trainable field f(x; theta).  The
per-point basis b = -grad_theta f / |grad_x f| maps parameter steps to
normal boundary motion; everything else (geometric and semantic editing,
volume-preserving smoothing, rigidity-regularized deformation) is built on
that linear map.
"""

__version__ = "0.1.0"

from .fields import (AnalyticField, Capsule, Domain, Ellipsoid, FieldQuery,
                     ImplicitField, LatentField, RoundedBox, Scaled,
                     SirenField, Sphere, Torus, Union, evaluate,
                     flatten_params, load_checkpoint, mean_curvature,
                     mean_curvatures, normal, normals, save_checkpoint,
                     unflatten_params)
from .geometry import (Mesh, SampleSet, area_weights, estimate_volume,
                       marching_cubes, measure_normal_motion,
                       project_to_surface, sample_surface, write_obj,
                       write_ply)
from .sensitivity import (ConstraintBasis, SensitivityBasis, assemble_system,
                          basis_row, basis_rows, predicted_normal_displacement,
                          surface_constraint_basis, volume_constraint_basis)
from .editing import (EditReport, EditSpec, TargetSpec, edit,
                      filter_by_alignment, project_constrained,
                      project_targets, solve_update)
from .flows import FlowConfig, run_smoothing, smooth_step
from .rigid import (LinearDisplacement, RigidConfig, TangentialField,
                    displacement_jacobian, killing_energy, rigid_edit,
                    tangential_displacement)
from .training import (AutoDecoder, AutoDecoderConfig, FitConfig, MeshSdf,
                       ShapeFamily, fit_sdf, semantic_edit, train_auto_decoder)
from . import regions

__all__ = [name for name in dir() if not name.startswith("_")]
