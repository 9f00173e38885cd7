"""Level set segmentation with joint multiplicative bias field estimation.

The solver alternates closed-form cluster updates, an explicit level set
gradient-flow step, and a per-channel linear solve for the weights of an
orthogonal polynomial bias model, for gray, multichannel, two-phase, and
multiphase images.  A phantom generator and overlap metrics round out
the toolkit.
"""

from .basis import (
    BasisSet,
    Moments,
    build_basis,
    eval_bias,
    gram_matrix,
    legendre_1d,
    orthogonality_ratio,
    precompute_moments,
)
from .imagegrid import (
    LabelMap,
    RasterImage,
    load_field,
    load_image,
    load_labels,
    save_field,
    save_image,
    save_labels,
    to_domain_coords,
    to_gray,
)
from .levelset import (
    LevelSetStack,
    curvature,
    dirac,
    disk_init,
    heaviside,
    init_binary_step,
    labels_from_stack,
    laplacian,
    membership,
    membership_derivative,
    memberships,
    threshold_init,
)
from .metrics import dsc, fnr, fpr, match_labels, region_report, relabel
from .model import (
    ModelParams,
    data_energy,
    length_term,
    regularizer,
    residual,
    residuals,
    total_energy,
)
from .solver import (
    SolveConfig,
    SolveResult,
    SolveTrace,
    run,
    run_chan_vese,
    update_centers,
    update_levelsets,
    update_weights,
)
from .synth import Phantom, PhantomSpec, Shape, load_spec, make_phantom, sweep

__version__ = "0.1.0"
