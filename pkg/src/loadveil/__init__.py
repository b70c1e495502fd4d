"""Load hiding for household power traces and a particle-filter attacker."""

from .battery import BatteryConfig, BatteryState, feasible_power_range, max_power_w, step
from .blh import BatteryLoadHider, BlhOutput, SteppingConfig, ls2_choose_level, run_blh
from .harness import ScenarioResult, emit_results, run_scenario, run_sweep
from .llh import (
    BoilerLoadHider,
    LlhConfig,
    NoiseBudget,
    NoiseFrame,
    bound_daily_energy,
    derive_beta,
    next_frame,
    run_llh,
)
from .metrics import AccuracyReport, accuracy, all_off_reference, energy_turnover_kwh, rmse
from .nilm import (
    DisaggregationResult,
    FilterConfig,
    ParticleFilterDisaggregator,
    disaggregate,
    effective_sample_size,
)
from .traces import (
    ApplianceModel,
    MedianFilter,
    PowerTrace,
    StateTrace,
    aggregate,
    load_traces_csv,
    median_filter,
    synthesize,
    synthesize_household,
    synthetic_household,
)

__version__ = "0.1.0"
