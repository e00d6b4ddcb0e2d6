"""Graph-network surrogates for the first natural frequency of 2D truss populations."""

__version__ = "0.1.0"

from .exceptions import (  # noqa: E402
    DegenerateError,
    DivergenceError,
    GenerationFailed,
    MechanismError,
    NotConstrainedError,
    StaleTapeError,
    TrussGNError,
    ValidationError,
    WidthMismatchError,
    ZeroVarianceError,
)
from .sdof import (  # noqa: E402
    GaugeElement,
    ModalQuantities,
    SdofParameters,
    apply_gauge,
    canonicalize,
    gauge_equivalent,
    modal_quantities,
    physics_preserving_gauge,
)
from .fem import Truss, assemble_system, first_natural_frequency, member_ea  # noqa: E402
from .delaunay import delaunay_triangulate  # noqa: E402
from .graph import AttributedGraph, encode_truss, permute_graph, with_temperature  # noqa: E402
from .population import (  # noqa: E402
    Dataset,
    GenerationConfig,
    generate_dataset,
    load_dataset,
    sample_truss,
    save_dataset,
)
from .graphnet import (  # noqa: E402
    GnBlockConfig,
    GnModel,
    aggregate,
    block_forward,
    model_backward,
    model_forward,
    predict,
)
from .presets import desk_preset, resolve_preset, table_preset  # noqa: E402
from .training import (  # noqa: E402
    TrainConfig,
    TrainHistory,
    grid_search,
    linear_temp_baseline,
    nmse,
    train,
)
from .artifacts import load_model, save_model  # noqa: E402
from .estimator import GraphNetRegressor, LinearTemperatureBaseline, TrussGraphEncoder  # noqa: E402

__all__ = [name for name in dir() if not name.startswith("_")]
