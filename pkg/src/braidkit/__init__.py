"""braidkit: braid-based interaction descriptors for multi-agent trajectories.

The toolkit converts joint future trajectories into crossing labels and braid
words, scores prediction sets against them (Braid Similarity plus standard
joint displacement metrics), and provides the braid-prediction auxiliary loss
with a gradient-checked classifier head and a desk-scale multi-task trainer.
"""

from ._kernel import BACKEND as KERNEL_BACKEND
from .braid import (
    CLASS_ORDER,
    BraidWord,
    CrossingClass,
    CrossingEvent,
    Generator,
    GraphEdge,
    InteractionGraph,
    build_interaction_graph,
    compose,
    crossing_events,
    detect_crossing,
    extract_braid_word,
    free_reduce,
    label_edge,
    replay_permutation,
    word_from_generators,
)
from .core import (
    IDENTITY_FRAME,
    AgentState,
    PredictionSet,
    ReferenceFrame,
    Scene,
    Trajectory,
    frame_of_agent,
    from_frame,
    to_frame,
    wrap_angle,
)
from .errors import (
    AmbiguousCrossing,
    BraidkitError,
    ConfigError,
    HorizonMismatch,
    IncompleteWindow,
    InfeasibleParameters,
    InsufficientOverlap,
    MissingAgent,
    MissingCurrentState,
    NonFiniteLoss,
    SceneFormatError,
    StrandCountMismatch,
    UnmatchedScene,
    WidthMismatch,
)
from .metrics import (
    BrSimReport,
    JointMetricsReport,
    best_mode_pair,
    braid_similarity,
    evaluate_scene,
    min_fde_marginal,
    min_joint_ade,
    min_joint_fde,
)
from .multitask import (
    BraidLossConfig,
    EdgeClassifierHead,
    braid_loss,
    classify_edge,
    classify_edge_from_encodings,
    combined_loss,
    edge_features,
    relative_feature,
)
from .synth import ScenarioTemplate, generate, perturb
from .trainer import TrainerConfig, train_toy

__version__ = "0.1.0"
