"""End-to-end simulated experiments: configuration, shot loop, analysis, reports."""

from .config import CampaignConfig, ConfigError, DriftModel, load_config
from .runner import (AcRecord, CycleResult, RunRecord, ScalingRecord,
                     run_ac_campaign, run_scaling_campaign,
                     run_static_campaign)
from .calibrate import CalibrationError, calibrate_jitter
from .report import write_report
