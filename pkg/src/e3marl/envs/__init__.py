from .navigation import (
    NavConfig,
    NavigationEnv,
    Observation,
    ObservationBatch,
    PointCloudState,
    StateBatch,
    apply_group_to_action,
    apply_group_to_observation,
    apply_group_to_state,
    nav_observe,
    nav_reset,
    nav_step,
)
from .tabular import TabularGame, audit, tabular_build
