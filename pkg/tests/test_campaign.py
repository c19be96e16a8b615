import json

import numpy as np
import pytest

from becforce.campaign import (CalibrationError, CampaignConfig, ConfigError,
                               calibrate_jitter, load_config, run_ac_campaign,
                               run_scaling_campaign, run_static_campaign,
                               write_report)
from becforce.campaign.config import config_from_dict
from becforce.campaign.runner import AcRecord, RunRecord, ScalingRecord
from becforce.metrology import load_series_csv

JITTER = 8.2e4  # m^-1, pre-calibrated for ~2.9e-27 N per-pair noise at 4.2 ms


def quick_config(**overrides):
    raw = {
        "force": {"static_n": [1.0e-27, 7.81e-26]},
        "campaign": {"n_cycles": 24, "seed": 404, "dt_list_s": [4.2e-3]},
        "noise": {"centering_jitter_k_inv_m": JITTER},
    }
    for section, body in overrides.items():
        raw.setdefault(section, {}).update(body)
    return config_from_dict(raw)


CONFIG_TEXT = """
# optical-force stability campaign
lattice.wavelength_m = 1.064e-6
lattice.beam_angles_deg = [90.0, 210.0, 330.0]
force.kind = "static"
force.static_n = [1.0e-27, 7.81e-26]
campaign.n_cycles = 12
campaign.seed = 7
campaign.dt_list_s = [4.2e-3]
noise.centering_jitter_k_inv_m = 8.2e4
"""


class TestConfig:
    def test_parse_file(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text(CONFIG_TEXT)
        cfg = load_config(path)
        assert cfg.n_cycles == 12
        assert cfg.seed == 7
        assert cfg.force.static_force[1] == 7.81e-26
        assert cfg.imaging.centering_jitter_k == 8.2e4
        assert cfg.cycle_time == 76.0  # default
        assert cfg.prep_time == 38.0  # default

    def test_empty_file_is_valid_defaults(self, tmp_path):
        path = tmp_path / "empty.toml"
        path.write_text("")
        cfg = load_config(path)
        assert cfg.n0 == 2.0e5
        assert cfg.dt_list == (4.2e-3,)

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("campaign.n_cycels = 10\n")
        with pytest.raises(ConfigError, match="unknown config keys"):
            load_config(path)

    def test_malformed_file_rejected(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("campaign.n_cycles = = 10\n")
        with pytest.raises(ConfigError, match="malformed"):
            load_config(path)

    def test_invalid_values_rejected(self):
        with pytest.raises(ConfigError):
            config_from_dict({"campaign": {"n_cycles": 1}})
        with pytest.raises(ConfigError):
            config_from_dict({"campaign": {"prep_time_s": 80.0}})
        with pytest.raises(ConfigError):
            config_from_dict({"campaign": {"dt_list_s": []}})
        with pytest.raises(ConfigError):
            config_from_dict({"force": {"kind": "sawtooth"}})

    def test_hash_stable_under_key_reordering(self, tmp_path):
        a = tmp_path / "a.toml"
        b = tmp_path / "b.toml"
        a.write_text(CONFIG_TEXT)
        b.write_text("\n".join(reversed(CONFIG_TEXT.strip().splitlines())))
        assert load_config(a).config_hash() == load_config(b).config_hash()

    def test_hash_sensitive_to_values(self, tmp_path):
        a = tmp_path / "a.toml"
        a.write_text(CONFIG_TEXT)
        cfg_a = load_config(a)
        cfg_b = quick_config(campaign={"seed": 8, "n_cycles": 12})
        assert cfg_a.config_hash() != cfg_b.config_hash()

    def test_resolved_dict_round_trip(self):
        cfg = quick_config()
        again = config_from_dict(cfg.to_dict())
        assert again.config_hash() == cfg.config_hash()


class TestStaticCampaign:
    def test_recovers_injected_force(self):
        cfg = quick_config(campaign={"n_cycles": 40, "seed": 11})
        rec = run_static_campaign(cfg)
        assert rec.n_excluded == 0
        assert len(rec.cycles) == 40
        target = np.array([1.0e-27, 7.81e-26])
        assert np.all(np.abs(rec.mean_force - target) < 4 * rec.sem_force)
        assert rec.analysis_y.sensitivity > 0
        assert rec.analysis_y.acting_sensitivity < rec.analysis_y.sensitivity
        assert rec.analysis_x.normality is None  # needs >= 50 samples

    def test_zero_force_paired_no_decoherence_exactly_zero(self):
        cfg = config_from_dict({
            "campaign": {"n_cycles": 6, "seed": 5, "paired_shots": True},
            "condensate": {"tau_coh_s": 1.0e9},
            "noise": {"centering_jitter_k_inv_m": JITTER},
        })
        rec = run_static_campaign(cfg)
        forces = np.array([c.force for c in rec.cycles])
        assert np.all(forces == 0.0)
        assert np.isnan(rec.theta)

    def test_zero_force_independent_statistically_null(self):
        cfg = config_from_dict({
            "campaign": {"n_cycles": 60, "seed": 21},
            "noise": {"centering_jitter_k_inv_m": JITTER},
        })
        rec = run_static_campaign(cfg)
        assert np.all(np.abs(rec.mean_force) < 3.5 * rec.sem_force)

    def test_multi_zone_force_unfolded(self):
        cfg = config_from_dict({
            "force": {"static_n": [0.0, 5.336e-25]},
            "campaign": {"n_cycles": 16, "seed": 9, "dt_list_s": [3.6e-3]},
            "noise": {"centering_jitter_k_inv_m": JITTER},
        })
        rec = run_static_campaign(cfg)
        assert rec.mean_force[1] == pytest.approx(5.336e-25, rel=0.01)

    def test_requires_static_profile(self):
        cfg = quick_config(force={"kind": "square_wave",
                                  "sw_amplitude_n": [0.0, 9.4e-26],
                                  "sw_frequency_hz": 250.0})
        with pytest.raises(ValueError, match="static"):
            run_static_campaign(cfg)

    def test_immune_to_atom_number_variation(self):
        # +-20% n0: estimator uses only dk and dt, so the mean force moves
        # within statistical errors only
        means = []
        sems = []
        for n0 in (1.6e5, 2.0e5, 2.4e5):
            cfg = quick_config(condensate={"n0": n0},
                               campaign={"n_cycles": 40, "seed": 77})
            rec = run_static_campaign(cfg)
            means.append(rec.mean_force)
            sems.append(rec.sem_force)
        means = np.array(means)
        sems = np.array(sems)
        spread = np.abs(means - means.mean(axis=0))
        assert np.all(spread < 3 * sems)

    def test_linear_drift_bends_adev_upward(self):
        base = quick_config(campaign={"n_cycles": 128, "seed": 31},
                            force={"static_n": [0.0, 7.81e-26]})
        drifty = quick_config(campaign={"n_cycles": 128, "seed": 31},
                              force={"static_n": [0.0, 7.81e-26]},
                              noise={"drift_model": "linear",
                                     "drift_rate_n_per_s": 1.2e-30})
        rec_w = run_static_campaign(base)
        rec_d = run_static_campaign(drifty)
        # white: adev falls with tau; drift: long-tau adev rises well above it
        a_w = rec_w.analysis_y.adev
        a_d = rec_d.analysis_y.adev
        assert a_d.adev[-1] > 3 * a_w.adev[-1]
        assert a_d.adev[-1] > 2 * a_d.adev.min()

    def test_random_walk_drift_runs(self):
        cfg = quick_config(campaign={"n_cycles": 24, "seed": 41},
                           noise={"drift_model": "random_walk",
                                  "drift_step_n": 2.0e-28})
        rec = run_static_campaign(cfg)
        assert len(rec.cycles) == 24


class TestDeterminism:
    def test_identical_bytes_across_worker_counts(self, tmp_path):
        cfg = quick_config(campaign={"n_cycles": 8, "seed": 99})
        p1 = tmp_path / "w1.json"
        p2 = tmp_path / "w2.json"
        run_static_campaign(cfg, workers=1).save(p1)
        run_static_campaign(cfg, workers=2).save(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_identical_bytes_across_repeat_runs(self, tmp_path):
        cfg = quick_config(campaign={"n_cycles": 8, "seed": 99})
        p1 = tmp_path / "r1.json"
        p2 = tmp_path / "r2.json"
        run_static_campaign(cfg).save(p1)
        run_static_campaign(cfg).save(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_seed_changes_bytes(self, tmp_path):
        cfg1 = quick_config(campaign={"n_cycles": 8, "seed": 99})
        cfg2 = quick_config(campaign={"n_cycles": 8, "seed": 100})
        p1 = tmp_path / "s1.json"
        p2 = tmp_path / "s2.json"
        run_static_campaign(cfg1).save(p1)
        run_static_campaign(cfg2).save(p2)
        assert p1.read_bytes() != p2.read_bytes()


class TestRecordsAndReports:
    def test_run_record_json_round_trip(self):
        cfg = quick_config(campaign={"n_cycles": 10, "seed": 3})
        rec = run_static_campaign(cfg)
        payload = rec.to_json_dict()
        reparsed = json.loads(json.dumps(payload))
        assert reparsed == payload
        again = RunRecord.from_json_dict(reparsed)
        assert again.to_json_dict() == payload

    def test_schema_version_and_hash_present(self):
        cfg = quick_config(campaign={"n_cycles": 6, "seed": 3})
        rec = run_static_campaign(cfg)
        d = rec.to_json_dict()
        assert d["schema_version"] == 1
        assert d["config_hash"] == cfg.config_hash()

    def test_static_report_files(self, tmp_path):
        cfg = quick_config(campaign={"n_cycles": 12, "seed": 13})
        rec = run_static_campaign(cfg)
        files = write_report(rec, tmp_path / "out")
        names = {p.name for p in files}
        assert {"series.csv", "adev_x.csv", "adev_y.csv", "summary.json",
                "series.png", "adev.png"} <= names
        series = load_series_csv(tmp_path / "out" / "series.csv",
                                 cycle_time=cfg.cycle_time)
        assert len(series["y"]) == 12
        adev_header = (tmp_path / "out" / "adev_y.csv").read_text().splitlines()[0]
        assert adev_header == "tau_s,adev_n,ci_lo_n,ci_hi_n"

    def test_report_formats_subset(self, tmp_path):
        cfg = quick_config(campaign={"n_cycles": 6, "seed": 13})
        rec = run_static_campaign(cfg)
        files = write_report(rec, tmp_path / "csvonly", formats=("csv",))
        assert all(p.suffix == ".csv" for p in files)


class TestScalingCampaign:
    def test_requires_three_distinct_dts(self):
        cfg = quick_config(campaign={"dt_list_s": [1e-3, 1e-3]})
        with pytest.raises(ValueError, match="three distinct"):
            run_scaling_campaign(cfg)

    def test_quantum_limited_exponent_near_minus_one(self):
        cfg = config_from_dict({
            "force": {"static_n": [0.0, 7.81e-26]},
            "campaign": {"n_cycles": 60, "seed": 53,
                         "dt_list_s": [1e-3, 2e-3, 4e-3]},
        })
        rec = run_scaling_campaign(cfg)
        assert abs(rec.exponent[1] + 1.0) < 0.3

    def test_duplicate_dts_agree(self):
        cfg = config_from_dict({
            "force": {"static_n": [0.0, 7.81e-26]},
            "campaign": {"n_cycles": 48, "seed": 61,
                         "dt_list_s": [1e-3, 2e-3, 4e-3, 4e-3]},
            "noise": {"centering_jitter_k_inv_m": JITTER},
        })
        rec = run_scaling_campaign(cfg)
        s_a, s_b = rec.sensitivity[2, 1], rec.sensitivity[3, 1]
        # estimator rel. sigma ~ 1/sqrt(2(M-1)); joint 3-sigma window
        rel = 3 * np.sqrt(2.0 / (2 * (48 - 1)))
        assert abs(s_a - s_b) < rel * 0.5 * (s_a + s_b)
        assert rec.sub_seeds[2] != rec.sub_seeds[3]

    def test_json_round_trip(self, tmp_path):
        cfg = config_from_dict({
            "campaign": {"n_cycles": 12, "seed": 67,
                         "dt_list_s": [1e-3, 2e-3, 4e-3]},
            "force": {"static_n": [0.0, 7.81e-26]},
        })
        rec = run_scaling_campaign(cfg)
        payload = rec.to_json_dict()
        assert ScalingRecord.from_json_dict(payload).to_json_dict() == payload
        files = write_report(rec, tmp_path / "sc")
        assert {p.name for p in files} >= {"scaling.csv", "summary.json",
                                           "scaling.png"}


class TestAcCampaign:
    AC_RAW = {
        "force": {"kind": "square_wave", "sw_amplitude_n": [0.0, 9.44e-26],
                  "sw_frequency_hz": 250.0, "sw_offset_n": [0.0, -3.0e-28]},
        "campaign": {"n_cycles": 2, "seed": 71},
        "noise": {"centering_jitter_k_inv_m": 4.7e4},
        "ac": {"n_periods": 4, "samples_per_half": 5},
    }

    def test_requires_square_wave(self):
        cfg = quick_config()
        with pytest.raises(ValueError, match="square-wave"):
            run_ac_campaign(cfg)

    def test_span_must_cover_two_periods(self):
        raw = {k: dict(v) for k, v in self.AC_RAW.items()}
        raw["ac"] = {"sample_times_s": [0.0, 1e-3, 2e-3]}
        with pytest.raises(ValueError, match="two periods"):
            run_ac_campaign(config_from_dict(raw))

    def test_plateau_recovery(self):
        rec = run_ac_campaign(config_from_dict(self.AC_RAW))
        p = rec.plateaus
        assert p.n_segments == 8
        n_pos = int(np.sum(p.signs > 0))
        sem_pos = p.positive_std[1] / np.sqrt(n_pos)
        assert abs(p.positive_mean[1] - 9.41e-26) < 3.5 * sem_pos
        n_neg = int(np.sum(p.signs < 0))
        sem_neg = p.negative_std[1] / np.sqrt(n_neg)
        assert abs(p.negative_mean[1] - (-9.47e-26)) < 3.5 * sem_neg

    def test_json_round_trip_and_report(self, tmp_path):
        rec = run_ac_campaign(config_from_dict(self.AC_RAW))
        payload = rec.to_json_dict()
        assert AcRecord.from_json_dict(payload).to_json_dict() == payload
        files = write_report(rec, tmp_path / "ac")
        assert {p.name for p in files} >= {"ac_trace.csv", "ac_plateaus.csv",
                                           "summary.json", "ac.png"}


class TestCalibrate:
    def test_reaches_target(self):
        cfg = quick_config(campaign={"n_cycles": 2, "seed": 3})
        jitter, achieved = calibrate_jitter(cfg, 2.9e-27, n_pairs=60)
        assert jitter > 0
        assert achieved == pytest.approx(2.9e-27, rel=0.05)

    def test_target_below_photon_floor_rejected(self):
        cfg = quick_config(campaign={"n_cycles": 2, "seed": 3})
        with pytest.raises(CalibrationError, match="floor"):
            calibrate_jitter(cfg, 1.0e-29, n_pairs=40)
