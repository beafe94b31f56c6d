from .mapping import (
    PHASES,
    PhaseMapping,
    aepl,
    classify_mapping_balance,
    find_mapping,
    mapping_statistics,
    phase_loads,
    random_phase_mapping,
)
from .panel import (
    VoltagePanel,
    consumer_series,
    inject_noise,
    nodal_loads,
    read_panel_binary,
    read_panel_csv,
    simulate_timeseries,
    write_panel_binary,
    write_panel_csv,
)
from .powerflow import (
    NonConvergenceError,
    PowerFlowError,
    VoltageCollapseError,
    power_balance,
    solve_power_flow,
)
from .profiles import LoadSeries, generate_load_profiles, read_profiles_csv, write_profiles_csv
