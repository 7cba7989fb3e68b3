"""Meta-reinforcement-learning spectrum sharing for vehicular networks.

Thin re-export of the compiled ``_v2xmeta`` extension.
"""

from ._v2xmeta import (  # noqa: F401
    Architecture,
    BudgetExceeded,
    Checkpoint,
    ConfigError,
    ContractError,
    Environment,
    ParameterSet,
    TaskConfig,
    __version__,
    calibrate_upsilon,
    clipped_surrogate,
    compute_gae,
    config_keys,
    evaluate_baseline,
    forward,
    initialize,
    load_checkpoint,
    path_loss_v2i_db,
    path_loss_v2v_db,
    reptile_update,
    resolve_config,
    run,
    sample_fading_power,
)
