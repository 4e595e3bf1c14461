"""Constant-query GNN inference: exact and neighbor-sampling engines."""

from ._validation import DegenerateGraphError, MalformedInputError, ShapeError
from .exact import EmbedResult, exact_embed, exact_embed_all, exact_gradient, receptive_field
from .graph import (
    CompleteGraph,
    Graph,
    QueryLog,
    degree_ratio,
    load_graph,
    read_graph,
    with_self_loops,
)
from .models import (
    Activation,
    GradTensor,
    ModelSpec,
    Params,
    Variant,
    init_params,
    load_params,
    save_params,
)
from .sampling import (
    SampleSchedule,
    ToleranceSpec,
    default_schedule,
    required_samples,
    sampled_embed,
    sampled_gradient,
    sampled_graph_embed,
)

__version__ = "0.1.0"
from .estimators import ExactEmbedder, SampledEmbedder
