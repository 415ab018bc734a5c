from slicelan.scenarios.config import Scenario, TelemetrySettings, load_json, parse_scenario
from slicelan.scenarios.csvio import read_ticks_csv, write_metrics_csv
from slicelan.scenarios.presets import lanimpact_preset, motivation_preset, preset_document
from slicelan.scenarios.runner import RunResult, WindowRow, WindowSummary, run_experiment, summarize

__all__ = [
    "RunResult", "Scenario", "TelemetrySettings", "WindowRow", "WindowSummary", "lanimpact_preset",
    "load_json", "motivation_preset", "parse_scenario", "preset_document", "read_ticks_csv",
    "run_experiment", "summarize", "write_metrics_csv",
]
