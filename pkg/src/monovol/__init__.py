"""Single-image food volume and energy estimation from a checkerboard reference
and a template mesh."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    EvaluationError,
    GeometryError,
    InputError,
    MonovolError,
    RenderError,
)
from .estimate import (  # noqa: E402
    EnergyDensityTable,
    EstimateRecord,
    RunConfig,
    Scene,
    run_pipeline,
)
from .geometry import BoardSpec, CameraIntrinsics, RigidTransform, fit_homography, solve_pnp  # noqa: E402
from .mesh import MeshDatabase, TriangleMesh, load_mesh, mesh_volume  # noqa: E402
from .objectpose import Ablation, ObjectPose, Silhouette  # noqa: E402

__all__ = [
    "Ablation", "BoardSpec", "CameraIntrinsics", "EnergyDensityTable", "EstimateRecord",
    "EvaluationError", "GeometryError", "InputError", "MeshDatabase", "MonovolError",
    "ObjectPose", "RenderError", "RigidTransform", "RunConfig", "Scene", "Silhouette",
    "TriangleMesh", "fit_homography", "load_mesh", "mesh_volume", "run_pipeline", "solve_pnp",
]
