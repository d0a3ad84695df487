import copy
import logging
import os
from dataclasses import dataclass, field
from logging.handlers import RotatingFileHandler

import toml

from hermite_dirac.utils.config_validation import require_valid
from hermite_dirac.utils.errors import ConfigError

MODES = ("stationary", "collide1d", "collide2d", "collide3d", "sweep")


class Config:
    """Base configuration class.

    Class attributes named after TOML sections hold the tier defaults; a run
    file overrides them key by key.
    """

    # Logging
    LOG_FORMAT = '%(asctime)s %(levelname)s: %(message)s [in %(pathname)s:%(lineno)d]'
    LOG_LEVEL = logging.INFO
    LOG_FILE = None

    RUN = {"mode": "stationary"}
    SYSTEM = {
        "z_a": 92,
        "z_b": 92,
        "model": "point",
        "r_rms_fm": 5.8569,
        "energy_per_nucleon": 6.0,
        "b_fm": 20.0,
    }
    STATIONARY = {"z_values": []}
    MONOPOLE = {
        "kappa": -1,
        "nodes": 96,
        "eta": 50.0,
        "xi": 1.0,
        "r_min": 1e-7,
        "steps": 10000,
        "determinant": True,
        "determinant_window": 20.0,
        "screening": "raise",
        "order": 8,
        "norm_tolerance": 1e-6,
    }
    AXIAL = {
        "m": 0.5,
        "rho_max_fm": 5000.0,
        "z_length_fm": 20000.0,
        "target_shift_fm": -5000.0,
        "rho_nodes": 13,
        "z_nodes": 50,
        "steps": 3000,
        "order": 8,
        "norm_tolerance": 1e-6,
    }
    CARTESIAN = {
        "box_fm": [6900.0, 6900.0, 13800.0],
        "target_shift_fm": -3450.0,
        "nodes": [8, 8, 16],
        "steps": 512,
        "order": 8,
        "tol": 1e-10,
        "max_iter": 500,
        "azimuth": 0.0,
        "norm_tolerance": 1e-6,
    }
    SWEEP = {
        "method": "monopole",
        "b_fm": [15.0, 20.0, 25.0, 30.0, 40.0, 50.0],
        "models": ["point", "sphere"],
    }
    OUTPUT = {
        "dir": "results",
        "threads": 1,
        "log_every": 1000,
        "checkpoint_every": 0,
        "resume": "",
    }

    SECTIONS = ("run", "system", "stationary", "monopole", "axial", "cartesian", "sweep", "output")

    @classmethod
    def defaults(cls):
        return {name: copy.deepcopy(getattr(cls, name.upper())) for name in cls.SECTIONS}

    @classmethod
    def init_logging(cls, level=None):
        """Configure the package logger for this tier."""
        logger = logging.getLogger("hermite_dirac")
        logger.setLevel(level or cls.LOG_LEVEL)
        if not any(getattr(h, "_hermite_dirac", False) for h in logger.handlers):
            handler = logging.StreamHandler()
            handler.setFormatter(logging.Formatter(cls.LOG_FORMAT))
            handler._hermite_dirac = True
            logger.addHandler(handler)
        return logger


class DeskConfig(Config):
    """Desk-scale grids and step counts."""


class PaperConfig(Config):
    """Production grids: 96 radial nodes, 100 x 26 axial nodes, 20 x 20 x 40 Cartesian nodes."""
    AXIAL = dict(Config.AXIAL, rho_nodes=26, z_nodes=100, steps=15000)
    CARTESIAN = dict(Config.CARTESIAN, nodes=[20, 20, 40], steps=1024)
    LOG_FILE = 'logs/hermite_dirac.log'

    @classmethod
    def init_logging(cls, level=None):
        logger = super().init_logging(level)

        # Long runs also log to a rotating file
        if not os.path.exists('logs'):
            os.mkdir('logs')

        if not any(isinstance(h, RotatingFileHandler) for h in logger.handlers):
            file_handler = RotatingFileHandler(
                cls.LOG_FILE,
                maxBytes=10240000,
                backupCount=10
            )
            file_handler.setFormatter(logging.Formatter(cls.LOG_FORMAT))
            file_handler.setLevel(logging.INFO)
            logger.addHandler(file_handler)
        return logger


class TestingConfig(Config):
    """Tiny grids for the test suite."""
    LOG_LEVEL = logging.WARNING
    MONOPOLE = dict(Config.MONOPOLE, nodes=48, steps=200)
    AXIAL = dict(Config.AXIAL, rho_nodes=6, z_nodes=12, steps=40)
    CARTESIAN = dict(Config.CARTESIAN, nodes=[4, 4, 6], steps=8, max_iter=300)
    SWEEP = dict(Config.SWEEP, b_fm=[20.0, 50.0], models=["point"])
    OUTPUT = dict(Config.OUTPUT, log_every=0)


# Configuration mapping
config = {
    'desk': DeskConfig,
    'paper': PaperConfig,
    'testing': TestingConfig,
    'default': DeskConfig
}


@dataclass
class RunConfig:
    """Validated settings of one run; lengths stay in fm until a solver asks for them."""
    mode: str
    tier: str
    sections: dict
    source: str = ""
    overrides: dict = field(default_factory=dict)

    def __getitem__(self, section):
        return self.sections[section]

    @property
    def output_dir(self):
        return self.sections["output"]["dir"]

    @property
    def threads(self):
        return int(self.sections["output"]["threads"])

    def as_dict(self):
        return {"run": dict(self.sections["run"], mode=self.mode, tier=self.tier),
                **{k: v for k, v in self.sections.items() if k != "run"}}


def _merge(base, overrides):
    errors = []
    for section, values in overrides.items():
        if section not in base:
            errors.append(f"{section}: unknown section")
            continue
        if not isinstance(values, dict):
            errors.append(f"{section}: must be a table")
            continue
        for key, value in values.items():
            if key not in base[section]:
                errors.append(f"{section}.{key}: unknown field")
            else:
                base[section][key] = value
    return errors


def load_run_config(path=None, tier=None, overrides=None):
    """Build a RunConfig from tier defaults, an optional TOML file and overrides.

    The tier comes from the argument, then [run].tier in the file, then the
    HERMITE_DIRAC_TIER environment variable.

    Raises:
        ConfigError: listing every invalid field as "<section>.<field>: problem"
    """
    raw = {}
    if path:
        try:
            raw = toml.load(path)
        except (OSError, toml.TomlDecodeError) as e:
            raise ConfigError(f"run.config: cannot read {path}: {e}")

    file_tier = raw.get("run", {}).pop("tier", None) if isinstance(raw.get("run"), dict) else None
    tier = tier or file_tier or os.getenv('HERMITE_DIRAC_TIER', 'default')
    if tier not in config:
        raise ConfigError(f"run.tier: unknown tier '{tier}' (choose from {', '.join(sorted(config))})")

    sections = config[tier].defaults()
    errors = _merge(sections, raw)
    errors += _merge(sections, overrides or {})
    if errors:
        raise ConfigError(errors)
    require_valid(sections, MODES)
    return RunConfig(mode=sections["run"]["mode"], tier="desk" if tier == "default" else tier,
                     sections=sections, source=str(path or ""), overrides=overrides or {})
