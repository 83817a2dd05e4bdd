import pytest

from codemill.config import ConfigError, load_config
from codemill.pipeline import make_sandbox


class TestLoadConfig:
    def test_shipped_defaults(self):
        config = load_config()
        assert config.n_candidates == 16
        assert config.min_inputs == 50
        assert config.threshold_default == 0.60
        assert config.threshold_hard == 0.40
        assert config.hard_rating_cutoff == 1600
        assert config.ngram_n == 16
        assert config.e_default == 5
        assert config.limits.wall_timeout_seconds == 10.0
        assert config.limits.address_space_bytes == 4 << 30

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("wrokers: 3\n")
        with pytest.raises(ConfigError) as err:
            load_config(path)
        assert "wrokers" in str(err.value)

    def test_threshold_validation(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("threshold_default: 1.5\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_overrides(self):
        config = load_config().with_overrides(workers=2, rng_seed=77)
        assert config.workers == 2 and config.rng_seed == 77

    def test_custom_recipe_merges_over_defaults(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text(
            "recipes:\n  pypy:\n    argv: [pypy3, '{src}']\n    extension: .py\n"
        )
        sandbox = make_sandbox(load_config(path))
        assert "python" in sandbox.recipes
        assert sandbox.recipes["pypy"].argv == ["pypy3", "{src}"]
