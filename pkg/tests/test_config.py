import pytest

from mdpc.config import RunConfig, emit_config, parse_config
from mdpc.errors import ConfigError
from mdpc.stats import epsilon_from_rho


def test_defaults():
    c = parse_config()
    assert (c.horizon, c.past, c.window) == (12, 120, 132)
    assert (c.bins_x, c.bins_y) == (15, 15)
    assert c.smoothing == 0.1
    assert c.sigma == 0.11
    assert (c.battery_kwh, c.battery_kw, c.efficiency) == (6.4, 3.3, 0.96)
    assert (c.price_high, c.price_low) == (24.6, 13.15)
    assert c.mu == 0.0 and c.gamma == 0.0
    b = c.battery
    assert (b.capacity_kwh, b.charge_max_kwh, b.discharge_max_kwh) == (6.4, 3.3, 3.3)


def test_empty_file_gives_defaults(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("# nothing set\n\n")
    assert parse_config(path) == RunConfig()


def test_default_grids():
    x_grid, y_grid = RunConfig().grids()
    assert x_grid.max_value == 3.6
    assert y_grid.max_value == 7.0
    assert x_grid.count == y_grid.count == 15


def test_x_max_from_profile():
    x_grid, y_grid = RunConfig(x_max=None).grids([0.5, 2.0, 1.0])
    assert x_grid.max_value == 2.0
    assert y_grid.max_value == 5.5


def test_negative_mu_names_field():
    with pytest.raises(ConfigError) as err:
        parse_config(mu=-1.0)
    assert err.value.field == "mu"


def test_rho_derives_epsilon():
    c = parse_config(rho=2000.0)
    assert c.smoothing == epsilon_from_rho(132, 15, 15, 2000.0)


def test_epsilon_and_rho_exclusive():
    with pytest.raises(ConfigError):
        parse_config(epsilon=0.1, rho=2000.0)


def test_unreachable_rho():
    with pytest.raises(ConfigError) as err:
        parse_config(rho=1.0)
    assert err.value.field == "rho"


@pytest.mark.parametrize("text,field", [("horizon = -1", "horizon"), ("bins_x = 1", "bins_x"),
                                        ("epsilon = 0", "epsilon"), ("efficiency = 1.5", "efficiency"),
                                        ("mu = abc", "mu"), ("colour = red", "colour"),
                                        ("y_max = 2.0", "y_max")])
def test_bad_values_name_field(tmp_path, text, field):
    path = tmp_path / "c.txt"
    path.write_text(text + "\n")
    with pytest.raises(ConfigError) as err:
        parse_config(path)
    assert err.value.field == field


def test_malformed_line(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("mu 5\n")
    with pytest.raises(ConfigError, match="line 1"):
        parse_config(path)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "absent.txt")


def test_overrides_beat_file(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("mu = 5\nhorizon = 4  # short\n")
    c = parse_config(path, mu=7.0, horizon=None)
    assert c.mu == 7.0 and c.horizon == 4


@pytest.mark.parametrize("config", [RunConfig(), RunConfig(mu=45.0, rho=900.0, x_max=None),
                                    RunConfig(epsilon=0.3, eval_epsilon=0.1, price_low=10.0 / 3)])
def test_round_trip(tmp_path, config):
    path = tmp_path / "c.txt"
    path.write_text(emit_config(config))
    assert parse_config(path) == config
