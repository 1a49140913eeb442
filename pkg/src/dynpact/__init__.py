"""Sparse-view dynamic photoacoustic tomography toolkit.

Simulation of ring-array acquisition with a sparse circular-integral
forward model, delay-and-sum / universal back-projection baselines, and
an unsupervised coordinate-network reconstruction with temporal
total-variation and nuclear-norm regularization, including temporal
super-resolution by querying the trained network at denser time
coordinates.
"""

__version__ = "0.1.0"

from .baselines import reconstruct_das, reconstruct_ubp
from .container import (
    export_frames,
    read_container,
    read_image_sequence,
    read_sinogram,
    write_container,
)
from .forward import (
    ForwardOperator,
    Sinogram,
    add_noise,
    apply_adjoint,
    apply_forward,
    build_forward_operator,
)
from .geometry import (
    ImageGrid,
    ImageSequence,
    SensorGeometry,
    default_grid,
    default_ring,
    make_ring_array,
    subsample_sensors,
)
from .inr import (
    CoordinateBatch,
    FourierEncoder,
    InrModel,
    backward,
    encode,
    init_model,
    load_checkpoint,
    render,
    save_checkpoint,
)
from .metrics import EvalReport, evaluate_pair, normalize_pair, psnr, ssim
from .phantom import (
    Disc,
    Ellipse,
    LinearPath,
    OrbitPath,
    PhantomSpec,
    load_phantom_spec,
    render_phantom,
    two_disc_phantom,
)
from .regularizers import LossBreakdown, dc_loss, nuclear_norm, temporal_tv
from .trainer import (
    AdamState,
    TrainConfig,
    TrainingLog,
    fit,
    fit_image,
    lr_at,
    temporal_superresolve,
)

__all__ = [
    "__version__",
    "AdamState", "CoordinateBatch", "Disc", "Ellipse", "EvalReport",
    "ForwardOperator", "FourierEncoder", "ImageGrid", "ImageSequence",
    "InrModel", "LinearPath", "LossBreakdown", "OrbitPath", "PhantomSpec",
    "SensorGeometry", "Sinogram", "TrainConfig", "TrainingLog",
    "add_noise", "apply_adjoint", "apply_forward", "backward",
    "build_forward_operator", "dc_loss", "default_grid", "default_ring",
    "encode", "evaluate_pair", "export_frames", "fit", "fit_image",
    "init_model", "load_checkpoint", "load_phantom_spec", "lr_at",
    "make_ring_array", "normalize_pair", "nuclear_norm", "psnr",
    "read_container", "read_image_sequence", "read_sinogram",
    "reconstruct_das", "reconstruct_ubp", "render", "render_phantom",
    "save_checkpoint", "ssim", "subsample_sensors", "temporal_superresolve",
    "temporal_tv", "two_disc_phantom", "write_container",
]
