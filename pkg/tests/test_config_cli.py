"""Tests for config parsing, report emission and the ``bml`` CLI."""

import json

import numpy as np
import pytest

from bonusmalus.bms import JumpToTop, Step, preset
from bonusmalus.cli import main, run_command
from bonusmalus.config import PRIOR_PRESETS, canonical_dict, dump_config, parse_config
from bonusmalus.distributions import GammaMixturePrior, Poisson, ZIPoisson
from bonusmalus.errors import ConfigError
from bonusmalus.mixture import LN_NORMAL_MODEL, MODEL1_STATS
from bonusmalus.relativity import optimal_linear_coefficients
from bonusmalus.report import read_csv


def cfg_text(**fields):
    return json.dumps({"schema": "v1", **fields}, indent=1)


@pytest.fixture(scope="module")
def kenya_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("kenya")
    cfg = parse_config(cfg_text(bms="kenya", base_model="model1"))
    paths = {}
    for cmd in ("relativities", "price"):
        for p in run_command(cfg, cmd, out, raw=True):
            paths[p.name] = p
    return cfg, out, paths


class TestParse:
    def test_kenya_preset(self):
        cfg = parse_config(cfg_text(bms="kenya"))
        assert (cfg.bms.levels, cfg.bms.start_level) == (7, 7)
        assert cfg.bms.rule == JumpToTop(1)
        assert cfg.lam == 0.1474
        assert cfg.prior == PRIOR_PRESETS["pi1"]
        assert cfg.count_model == Poisson()

    def test_default_prior_follows_levels(self):
        assert parse_config(cfg_text(bms="hongkong")).prior == PRIOR_PRESETS["pi2"]

    def test_model_presets_pick_count_model(self):
        cfg = parse_config(cfg_text(bms="kenya", base_model="model3"))
        assert cfg.count_model == ZIPoisson(0.2)
        assert cfg.base_model.model == LN_NORMAL_MODEL and cfg.base_model.stats == MODEL1_STATS

    def test_weights_not_summing(self):
        text = '{"schema": "v1",\n "bms": "kenya",\n "prior": {"components": [\n  {"weight": 0.9, "shape": 1, "rate": 7}]}}'
        with pytest.raises(ConfigError) as info:
            parse_config(text)
        assert info.value.field == "prior.components"
        assert info.value.line == 4 or info.value.line == 3

    @pytest.mark.parametrize("fields,field", [
        ({"bms": "atlantis"}, "bms"),
        ({"bms": {"levels": 5, "start_level": 9, "rule": {"type": "step"}}}, "bms.start_level"),
        ({"bms": {"levels": 5}}, "bms.start_level"),
        ({"bms": "kenya", "prior": "pi9"}, "prior"),
        ({"bms": "kenya", "base_model": "model7"}, "base_model"),
        ({"bms": "kenya", "xi": 1.5}, "xi"),
        ({"bms": "kenya", "lambda": -1}, "lambda"),
        ({"bms": "kenya", "count_model": {"type": "zip", "p": 2}}, "count_model.p"),
        ({"bms": "kenya", "colour": "red"}, "colour"),
        ({"bms": {"levels": 3, "start_level": 3, "rule": {"type": "explicit", "saturation": 1,
                                                          "targets": [[1, 0, 1]]}}}, "bms.rule"),
    ])
    def test_errors_name_field(self, fields, field):
        with pytest.raises(ConfigError) as info:
            parse_config(cfg_text(**fields))
        assert info.value.field == field

    def test_schema_version(self):
        with pytest.raises(ConfigError):
            parse_config(json.dumps({"schema": "v2", "bms": "kenya"}))

    def test_bad_json_reports_line(self):
        with pytest.raises(ConfigError) as info:
            parse_config('{"schema": "v1",\n "bms": kenya}')
        assert info.value.line == 2

    def test_preset_override(self):
        cfg = parse_config(cfg_text(bms={"preset": "brazil", "start_level": 4}))
        assert (cfg.bms.levels, cfg.bms.start_level, cfg.bms.rule) == (7, 4, Step(1, 1))

    def test_explicit_prior(self):
        cfg = parse_config(cfg_text(bms="kenya", prior={"components": [
            {"weight": 0.5, "shape": 1, "rate": 2}, {"weight": 0.5, "shape": 3, "rate": 2}]}))
        assert cfg.prior == GammaMixturePrior((0.5, 0.5), ((1, 2), (3, 2)))

    def test_sample_stats(self):
        cfg = parse_config(cfg_text(bms="kenya", base_model={
            "components": [{"family": "gamma2"}], "stats": {"sample": [1.0, 2.0, 3.0]}}))
        assert cfg.base_model.stats.n == 3

    def test_overrides(self):
        cfg = parse_config(cfg_text(bms="kenya")).with_overrides(xi=0.25, lam=0.2, zip_p=0.1)
        assert (cfg.xi, cfg.lam, cfg.count_model) == (0.25, 0.2, ZIPoisson(0.1))

    @pytest.mark.parametrize("fields", [
        {"bms": "kenya"},
        {"bms": "hongkong", "base_model": "model4", "xi": 0.3, "sweep": {"start": 0.1, "stop": 0.5, "num": 5}},
        {"bms": {"levels": 3, "start_level": 2, "rule": {"type": "explicit", "saturation": 1,
                 "targets": [[l, n, min(max(l - 1 + 2 * n, 1), 3)] for l in (1, 2, 3) for n in (0, 1)]}},
         "relativity_override": [1, 1, 1]},
    ])
    def test_round_trip(self, fields):
        cfg = parse_config(cfg_text(**fields))
        again = parse_config(dump_config(cfg))
        assert again == cfg
        assert dump_config(again) == dump_config(cfg)


class TestReports:
    def test_price_row_one(self, kenya_run):
        _, _, paths = kenya_run
        rows = read_csv(paths["price.csv"])
        assert rows[0]["level"] == "1"
        assert rows[0]["base"] == "2.705"
        assert rows[0]["premium"] == "0.376"

    def test_premium_is_base_times_relativity(self, kenya_run):
        _, _, paths = kenya_run
        for r in read_csv(paths["price.csv"]):
            assert float(r["premium_raw"]) == float(r["base_raw"]) * float(r["relativity_raw"])

    def test_write_read_fidelity(self, kenya_run):
        _, _, paths = kenya_run
        for r in read_csv(paths["relativities.csv"]):
            for key, val in r.items():
                if key.endswith("_raw"):
                    assert f"{float(val):.3f}" == r[key[:-4]]
                    assert repr(float(val)) == val

    def test_csv_format(self, kenya_run):
        _, _, paths = kenya_run
        data = paths["price.csv"].read_bytes()
        assert b"\r" not in data
        data.decode("utf-8")
        assert data.splitlines()[0].startswith(b"level,P,")

    def test_byte_identical_reruns(self, kenya_run, tmp_path):
        cfg, _, paths = kenya_run
        again = {p.name: p for p in run_command(cfg, "price", tmp_path, raw=True)}
        assert again["price.csv"].read_bytes() == paths["price.csv"].read_bytes()
        assert again["price_meta.json"].read_bytes() == paths["price_meta.json"].read_bytes()

    def test_xi_extremes(self, tmp_path):
        base = parse_config(cfg_text(bms="kenya"))
        rows = {}
        for xi in (0.0, 1.0):
            out = tmp_path / str(xi)
            run_command(base.with_overrides(xi=xi), "relativities", out, raw=True)
            rows[xi] = read_csv(out / "relativities.csv")
        P = np.array([float(r["P_raw"]) for r in rows[0.0]])
        r1 = np.array([float(r["bayes-claims_raw"]) for r in rows[0.0]])
        r2 = np.array([float(r["bayes-level_raw"]) for r in rows[0.0]])
        L = np.arange(1, 8)
        for xi, target in ((1.0, r1), (0.0, r2)):
            slope, icpt = np.polyfit(L, target, 1, w=np.sqrt(P))
            got = np.array([float(r["optimal-linear_raw"]) for r in rows[xi]])
            np.testing.assert_allclose(got, icpt + slope * L, atol=1e-9)

    def test_constant_override_efficiency(self, tmp_path):
        cfg = parse_config(cfg_text(bms="kenya", relativity_override=[1.0] * 7,
                                    sweep={"start": 0.05, "stop": 1.0, "num": 10}))
        paths = {p.name: p for p in run_command(cfg, "efficiency", tmp_path, raw=True)}
        rows = read_csv(paths["efficiency.csv"])
        assert len(rows) == 10
        assert all(abs(float(r["override_raw"])) < 1e-10 for r in rows)
        svg = paths["efficiency.svg"].read_text()
        assert svg.startswith("<svg") and svg.count("<polyline") == 1


class TestCLI:
    def write(self, tmp_path, text):
        p = tmp_path / "cfg.json"
        p.write_text(text)
        return str(p)

    def test_success(self, tmp_path, capsys):
        cfg = self.write(tmp_path, cfg_text(bms="kenya", base_model="model1"))
        assert main(["base-premium", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
        assert (tmp_path / "o" / "base_premium.csv").exists()
        rows = read_csv(tmp_path / "o" / "base_premium.csv")
        assert rows[0]["base"] == "2.705" and "base_raw" not in rows[0]

    def test_config_error_exit(self, tmp_path, capsys):
        cfg = self.write(tmp_path, cfg_text(bms="nowhere"))
        assert main(["steady-state", "--config", cfg]) == 2
        assert "field 'bms'" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["steady-state", "--config", str(tmp_path / "nope.json")]) == 2

    def test_numeric_error_exit(self, tmp_path, capsys):
        # Pareto support excludes every observation: all marginals vanish
        cfg = self.write(tmp_path, cfg_text(bms="kenya", base_model={
            "components": [{"family": "pareto1"}], "stats": {"n": 2, "T2": 0.0, "x_min": 0.1}}))
        assert main(["base-premium", "--config", cfg, "--out", str(tmp_path)]) == 3
        assert "NumericDegeneracyError" in capsys.readouterr().err

    def test_missing_base_model(self, tmp_path):
        cfg = self.write(tmp_path, cfg_text(bms="kenya"))
        assert main(["base-premium", "--config", cfg, "--out", str(tmp_path)]) == 2

    def test_bad_override(self, tmp_path):
        cfg = self.write(tmp_path, cfg_text(bms="kenya"))
        assert main(["steady-state", "--config", cfg, "--xi", "3", "--out", str(tmp_path)]) == 2

    def test_steady_state(self, tmp_path):
        cfg = self.write(tmp_path, cfg_text(bms="kenya"))
        assert main(["steady-state", "--config", cfg, "--out", str(tmp_path), "--zip-p", "0.1"]) == 0
        rows = read_csv(tmp_path / "steady_state.csv")
        assert len(rows) == 7
        meta = json.loads((tmp_path / "steady_state_meta.json").read_text())
        assert meta["count_model"] == {"type": "zip", "p": 0.1}
